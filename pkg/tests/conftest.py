import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_plain(rng, n_modes, max_degree, n_terms, real=False):
    """Random plain polynomial; ``real=True`` symmetrizes to a real function."""
    from nlwkam import PLAIN, HamiltonianPoly

    rows, cs = [], []
    while len(rows) < n_terms:
        deg = int(rng.integers(1, max_degree + 1))
        row = np.zeros(3 * n_modes, dtype=np.int64)
        left = deg
        while left > 0:
            slot = int(rng.integers(0, 3))
            if slot == 0 and left < 2:
                continue
            m = int(rng.integers(0, n_modes))
            row[slot * n_modes + m] += 1
            left -= 2 if slot == 0 else 1
        rows.append(row)
        cs.append(complex(rng.normal(), rng.normal()))
    H = HamiltonianPoly(np.array(rows), np.array(cs), n_modes, max_degree, PLAIN)
    if real:
        H = (H + H.conjugate_swap()) * 0.5
    return H


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
