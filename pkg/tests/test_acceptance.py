"""The nine acceptance criteria, one test each.

Every criterion prints a PASS/FAIL line; the lines are also repeated in the
terminal summary so they survive output capture.
"""
import pytest

from cbplab.acceptance import CRITERIA

RESULTS = []


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number}" for c in CRITERIA])
def test_criterion(criterion):
    result = criterion(seed=0)
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.details
