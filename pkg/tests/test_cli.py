import csv
import json
import math

import pytest

from cbplab import __version__
from cbplab.cli import ConfigError, main, parse_config

BALL = "[body]\nkind = ball\nn = 2\n"
FAST = "[quadrature]\nsection_count = 1024\nft_count = 1024\ncircle_points = 32\n" \
       "directions = 3\ngrid = 6\n"


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_measure_ball(tmp_path):
    cfg = _write(tmp_path, BALL)
    assert main(["measure", "--config", cfg, "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "measure.csv")
    assert row["body"] == "ball" and row["density"] == "one"
    assert float(row["value"]) == pytest.approx(math.pi ** 2 / 2, rel=1e-12)
    assert row["version"] == __version__ and row["seed"] == "0" and len(row["config_hash"]) == 16


def test_section_ball_columns(tmp_path):
    cfg = _write(tmp_path, BALL + FAST)
    assert main(["section", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "section.csv")
    assert len(rows) == 3
    for r in rows:
        assert float(r["direct"]) == pytest.approx(math.pi, rel=1e-12)
        assert float(r["fourier"]) == pytest.approx(math.pi, rel=1e-2)
        assert r["flag"] == "OK"


@pytest.mark.parametrize("text,message", [
    ("[body]\nn = 2\n", "missing config key body.kind"),
    ("[body]\nkind = cube\nn = 2\n", "unknown body kind"),
    (BALL + "[quadrature]\nft_count = 5\n", "below the minimum"),
    (BALL + "[quadrature]\ngrid = many\n", "cannot read"),
    ("not an ini file", "unparseable"),
])
def test_configuration_errors_exit_2(tmp_path, capsys, text, message):
    cfg = _write(tmp_path, text)
    assert main(["measure", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert message in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["measure", "--out", str(tmp_path)]) == 2
    assert main(["measure", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_command_specific_validation(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 3\nq = 4\n")
    assert main(["counterexample", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert main(["affirm", "--config", _write(tmp_path, "[body]\nkind = ball\nn = 4\n", "b.ini"),
                 "--out", str(tmp_path)]) == 2


def test_outputs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 2\nq = 3\n[density]\nkind = gaussian\n" + FAST)
    out = {}
    for run in ("a", "b"):
        d = tmp_path / run
        for cmd in ("measure", "section", "ft", "pdtest", "parseval"):
            assert main([cmd, "--config", cfg, "--out", str(d)]) == 0
        out[run] = {p.name: p.read_bytes() for p in d.iterdir()}
    assert out["a"] == out["b"] and len(out["a"]) == 5
    # threads do not change results, a different seed does
    d = tmp_path / "c"
    main(["section", "--config", cfg, "--out", str(d), "--threads", "3"])
    assert (d / "section.csv").read_bytes() == out["a"]["section.csv"]
    main(["section", "--config", cfg, "--out", str(d), "--seed", "5"])
    assert (d / "section.csv").read_bytes() != out["a"]["section.csv"]


def test_ft_scan_is_long_format(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 3\nq = 4\n" + FAST)
    assert main(["ft", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "ft_scan.csv")
    points = {r["point"] for r in rows}
    assert len(rows) == 3 * len(points) == 3 * 28


def test_pdtest_outputs(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 2\nq = 4\n" + FAST)
    assert main(["pdtest", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "pdtest.json").read_text())
    assert doc["classification"] == "nonnegative"
    assert doc["meta"]["version"] == __version__ and doc["meta"]["command"] == "pdtest"


def test_low_node_count_is_reported_inconclusive(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 3\nq = 4\n[quadrature]\nft_count = 100\n"
                           "ft_replicates = 2\ncircle_points = 8\ngrid = 10\n")
    assert main(["pdtest", "--config", cfg, "--out", str(tmp_path)]) == 1
    doc = json.loads((tmp_path / "pdtest.json").read_text())
    assert doc["classification"] == "inconclusive"


def test_affirm_small(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = ball\nn = 2\n[affirm]\nbodies = ball, lq4\npairs = 2\n"
                           "[quadrature]\nsection_count = 512\ngrid = 8\n")
    assert main(["affirm", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "affirm.json").read_text())
    assert doc["verdict"] == "affirmative_consistent"


def test_config_roundtrip():
    cfg = parse_config("[body]\nkind = lq\nn = 4\nq = 4\n[counterexample]\neps0 = 3e-9\n")
    again = parse_config(cfg.to_ini())
    assert again == cfg and again.digest == cfg.digest
    assert parse_config(cfg.to_ini(), seed=3).digest != cfg.digest
    with pytest.raises(ConfigError):
        parse_config("[body]\nkind = ball\nn = 2\n[density]\nkind = uniform\n")


def test_selftest_subset(tmp_path, capsys):
    assert main(["selftest", "--only", "1", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion 1" in out and "[PASS] criterion 4" in out
    doc = json.loads((tmp_path / "selftest.json").read_text())
    assert [c["number"] for c in doc["criteria"]] == [1, 4]


@pytest.mark.slow
def test_counterexample_manifest_replays(tmp_path):
    cfg = _write(tmp_path, "[body]\nkind = lq\nn = 4\nq = 4\n[counterexample]\ndirections = 4\n")
    first = tmp_path / "first"
    code = main(["counterexample", "--config", cfg, "--out", str(first)])
    assert code == 0
    manifest = json.loads((first / "counterexample_manifest.json").read_text())
    assert manifest["verdict"] == "counterexample_confirmed"
    replay_cfg = _write(tmp_path, manifest["config_ini"], "replay.ini")
    second = tmp_path / "second"
    assert main(["counterexample", "--config", replay_cfg, "--out", str(second)]) == code
    for name in ("counterexample.json", "counterexample_manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
