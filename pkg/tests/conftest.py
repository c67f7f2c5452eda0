import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

_RESULTS = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical or acceptance test")


@pytest.fixture
def record_criterion():
    """Log one acceptance clause and return the boolean so the test can assert on it.

    ``expected_fail`` marks a clause kept as a strict xfail; it makes the criterion
    XFAIL instead of FAIL when it is the only failing clause.
    """

    def _record(criterion, label, ok, detail="", expected_fail=False):
        _RESULTS.append((int(criterion), label, bool(ok), detail, bool(expected_fail)))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance clauses")
    for crit, label, ok, detail, xf in _RESULTS:
        tag = "PASS" if ok else ("XFAIL" if xf else "FAIL")
        terminalreporter.write_line(f"{tag}  [{crit}] {label}  {detail}")
    terminalreporter.section("acceptance criteria")
    for crit in sorted({r[0] for r in _RESULTS}):
        rows = [r for r in _RESULTS if r[0] == crit]
        if any(not ok and not xf for _, _, ok, _, xf in rows):
            tag = "FAIL"
        elif any(not ok for _, _, ok, _, _ in rows):
            tag = "XFAIL"
        else:
            tag = "PASS"
        n_ok = sum(ok for _, _, ok, _, _ in rows)
        terminalreporter.write_line(f"{tag}  criterion {crit}  ({n_ok}/{len(rows)} clauses pass)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
