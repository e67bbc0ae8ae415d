"""Acceptance criteria 1-13 at full tolerance.

Each test prints one result line; the lines are repeated as a table at the end
of the session (see conftest.py), so they show up without -s as well.
"""
import pytest

from qmupl import acceptance

RESULTS = {}


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 14))
def test_criterion(number):
    res = acceptance.CRITERIA[number - 1](seed=acceptance.DEFAULT_SEED)
    RESULTS[number] = res
    print(res.line())
    assert res.number == number
    assert res.passed, res.details
