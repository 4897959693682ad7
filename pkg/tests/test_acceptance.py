"""One pass/fail line per end-to-end acceptance criterion."""

import pytest

from kamforge import acceptance

IDS = [
    "c01-birkhoff-residual",
    "c02-twist-identity",
    "c03-divisor-bound",
    "c04-quadraticity",
    "c05-correction-decay",
    "c06-gamma-scaling",
    "c07-simulator",
    "c08-norm-bounds",
    "c09-structure-suite",
    "c10-homological-solver",
]


@pytest.mark.parametrize("crit", acceptance.ALL_CRITERIA, ids=IDS)
def test_criterion(crit):
    rec = crit()
    assert rec["passed"], (
        "%s: value %r vs threshold %r (%s) in %.1fs of %.0fs"
        % (rec["name"], rec["value"], rec["threshold"], rec["detail"],
           rec["seconds"], rec["budget"]))
    assert rec["seconds"] <= rec["budget"]
