"""All acceptance criteria at their stated sizes and tolerances.

Each test prints one PASS/FAIL line; run with ``pytest -s`` to see them inline.
The wall-clock budget is asserted as well.
"""

import pytest

from lrcontact.acceptance import CRITERIA, run_criterion

WORKERS = 4


@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(cid, capsys):
    res = run_criterion(cid, seed=0, workers=WORKERS)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.details
    assert res.within_budget, f"{res.runtime:.1f}s over the {res.budget:.0f}s budget"
