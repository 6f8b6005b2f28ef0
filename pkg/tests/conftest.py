import re

import numpy as np
import pytest

from glovedesign.prior import PriorModel


def random_spd(n, seed, ridge=1e-2):
    """Well-conditioned random SPD matrix A A^T / n + ridge * I."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A @ A.T / n + ridge * np.eye(n)


def random_prior(n, seed, ridge=1e-2):
    rng = np.random.default_rng(seed + 10_000)
    return PriorModel.from_moments(rng.standard_normal(n), random_spd(n, seed, ridge))


def spectrum_prior(spectrum, seed=0):
    """Prior with a prescribed spectrum in a random orthonormal basis."""
    s = np.asarray(spectrum, dtype=float)
    n = s.size
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    cov = (Q * s) @ Q.T
    return PriorModel.from_moments(np.zeros(n), 0.5 * (cov + cov.T))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed:
        _results[key] = "FAIL"
    elif report.when == "call" and report.passed:
        _results.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    from tests.test_acceptance import CRITERIA

    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(CRITERIA):
        status = _results.get(key, "NOT RUN")
        terminalreporter.write_line(f"criterion {key:2d}: {status:7s} {CRITERIA[key]}")
