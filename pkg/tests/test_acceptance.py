"""All twelve acceptance criteria at their stated tolerances.

Each test prints one pass/fail line (visible even with output capture).
"""
import pytest

from pmelab.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = run_criterion(number)
    with capsys.disabled():
        print("\n" + res.line())
    failing = [r.quantity for r in res.rows if not r.passed]
    assert res.passed, f"criterion {number} failing rows: {failing}"
