"""Acceptance criteria at their stated tolerances, one pass/fail line each.

Run with pytest (lines are printed in the terminal summary) or directly:
``python tests/test_acceptance.py [--skip-slow]``.
"""

import sys

import pytest

from levferro.acceptance import CHECKS, SLOW, run_check, run_checks
from levferro.config import default_config

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # direct execution
    ACCEPTANCE_LINES = []


@pytest.fixture(scope="module")
def reference_config():
    return default_config()


@pytest.mark.parametrize(
    "number", [pytest.param(n, marks=pytest.mark.slow) if n in SLOW else n for n in sorted(CHECKS)]
)
def test_criterion(number, reference_config):
    check = run_check(number, reference_config)
    line = check.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert check.passed, line


if __name__ == "__main__":
    results = run_checks(skip_slow="--skip-slow" in sys.argv)
    sys.exit(0 if all(c.passed for c in results) else 1)
