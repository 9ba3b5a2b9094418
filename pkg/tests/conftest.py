import pytest


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    # kernel caches are derived data; keep test runs away from the user's cache
    monkeypatch.setenv("CBP_CACHE_DIR", str(tmp_path_factory.getbasetemp() / "cache"))
    yield


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(mod.RESULTS, key=lambda r: r.number):
        terminalreporter.write_line(r.line())
