import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlwkam import (FrequencyModel, ResonanceError, check_condition_1, check_condition_2,
                    compensation_terms, divisor, enumerate_l, measure_estimate, sample_omega)
from nlwkam.resonance import critical_gamma


# -- frequency model and divisors ------------------------------------------------

def test_frequency_model_basics():
    fm = FrequencyModel([1.0, 0.0, 0.5])
    assert np.allclose(fm.lam, [math.sqrt(2), 2, math.sqrt(9.5)])
    assert np.allclose(fm.omega, fm.lam - np.arange(1, 4), atol=1e-15)
    omega = np.array([0.3, 0.1, 1e-9])
    assert np.allclose(FrequencyModel.from_omega(omega).omega, omega, rtol=1e-14, atol=0)
    with pytest.raises(ValueError):
        FrequencyModel([-2.0])


def test_divisor_examples():
    assert divisor({1: 1, 2: 1, 3: -1}, FrequencyModel([1, 0, 0])) == pytest.approx(
        math.sqrt(2) - 1, abs=1e-15)
    assert divisor({}, FrequencyModel([0, 0])) == 0
    assert divisor({1: 2}, FrequencyModel([0])) == 2
    with pytest.raises(ValueError):
        divisor({4: 1}, FrequencyModel([0, 0]))


@given(st.dictionaries(st.integers(1, 8), st.integers(-5, 5), max_size=5))
def test_divisor_is_integer_without_potential(l):
    assert divisor(l, FrequencyModel([0.0] * 8)) == sum(n * v for n, v in l.items())


# -- conditions ------------------------------------------------------------------

def test_condition_1_examples():
    res = check_condition_1([0.5], {1: 1}, 0.5)
    assert res.passed and res.lhs == 0.5 and res.rhs == pytest.approx(0.25)
    assert not check_condition_1(np.zeros(4), {2: 1, 3: -2}, 0.1).passed
    assert check_condition_1([0.3, 0.1], {1: 1, 2: 1}, 1e-300).passed
    with pytest.raises(ValueError):
        check_condition_1([0.1], {}, 0.1)


def test_condition_2_examples():
    g = 0.3
    res = check_condition_2(np.full(5, 0.01), {5: 1, 3: -1, 1: 1}, g)
    assert res.applicable
    assert res.rhs == pytest.approx(g ** 3 / 256, rel=1e-14)
    assert not check_condition_2(np.full(5, 0.01), {2: 1, 4: 1}, g).applicable
    assert not check_condition_2(np.full(5, 0.01), {2: 3}, g).applicable


def _margin_mp(omega, l, gamma):
    mpmath.mp.dps = 50
    x = mpmath.fsum(v * mpmath.mpf(float(omega[n - 1])) for n, v in l.items())
    lhs = abs(x - mpmath.nint(x))
    rhs = mpmath.mpf(gamma)
    for n, v in l.items():
        rhs /= 1 + v * v * mpmath.mpf(n) ** 5
    return lhs - rhs, lhs >= rhs


def test_condition_1_margin_matches_extended_precision():
    rng = np.random.default_rng(3)
    omega = sample_omega(11, 12)
    for _ in range(10_000):
        supp = rng.choice(np.arange(1, 13), size=rng.integers(1, 5), replace=False)
        l = {int(n): int(rng.choice([-3, -2, -1, 1, 2, 3])) for n in supp}
        res = check_condition_1(omega, l, 0.1)
        want, ok = _margin_mp(omega, l, 0.1)
        assert abs(res.margin - float(want)) <= 1e-10
        if ok:
            assert res.passed


# -- sampling ------------------------------------------------------------------------

def test_sample_omega_deterministic_and_in_range():
    assert np.array_equal(sample_omega(7, 3), sample_omega(7, 3))
    assert not np.array_equal(sample_omega(7, 3), sample_omega(8, 3))
    for seed in range(20):
        w = sample_omega(seed, 6)
        assert np.all(w >= 0) and np.all(w <= 1 / np.arange(1, 7))
        assert 0 <= w[4] <= 0.2


def test_sample_omega_rows_are_addressable():
    block = sample_omega(5, 7, size=50)
    assert np.array_equal(block[0], sample_omega(5, 7))
    assert np.array_equal(block[20:], sample_omega(5, 7, size=30, start=20))


def test_sample_omega_mean():
    w2 = sample_omega(2024, 2, size=100_000)[:, 1]
    sigma = (0.5 / math.sqrt(12)) / math.sqrt(w2.size)
    assert abs(w2.mean() - 0.25) <= 3 * sigma


# -- measure ----------------------------------------------------------------------------

def test_enumeration_counts_and_budget():
    lset = enumerate_l(4, 2, 2)
    assert lset.shape == ((4 * 4 + 6 * 16) // 2, 4)
    assert len({tuple(r) for r in lset} | {tuple(-r) for r in lset}) == 2 * len(lset)
    with pytest.raises(ResonanceError):
        enumerate_l(12, 3, 3, budget=1000)


def test_critical_gamma_agrees_with_checkers():
    lset = enumerate_l(4, 2, 3)
    omega = sample_omega(9, 4, size=5)
    g1, g2 = critical_gamma(omega, lset)
    for w, c1, c2 in zip(omega, g1, g2):
        for gamma, expect1 in ((c1 * 0.999, True), (c1 * 1.001, False)):
            ok = all(check_condition_1(w, dict(enumerate(r.tolist(), 1)), gamma).passed
                     for r in lset)
            assert ok == expect1
        if np.isfinite(c2):
            ok = all(check_condition_2(w, dict(enumerate(r.tolist(), 1)), c2 * 1.001).passed
                     for r in lset)
            assert not ok


def test_measure_zero_gamma_and_determinism():
    rep = measure_estimate(0.0, 5, 2, 2, 1000, 3)
    assert rep.fraction == 0.0
    again = measure_estimate([0.05, 0.1], 5, 2, 2, 1000, 3)
    assert again == measure_estimate([0.05, 0.1], 5, 2, 2, 1000, 3)
    with pytest.raises(ValueError):
        measure_estimate(0.1, 5, 2, 2, 999, 3)


def test_measure_monotone_in_gamma():
    gammas = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2]
    fracs = [r.fraction for r in measure_estimate(gammas, 6, 2, 2, 2000, 4)]
    assert all(a <= b for a, b in zip(fracs, fracs[1:]))
    assert fracs[-1] > 0


# -- compensation --------------------------------------------------------------------

def test_compensation_examples():
    c = compensation_terms({}, {1: 1}, {2: 1}, {2: 1}, 0.1, 0.5)
    assert c.lhs <= 1
    # the only mode is n1*, so the product is empty and the exponent is 1 - 2 = -1
    c = compensation_terms({1: 1}, {}, {1: 1}, {}, 0.1, 0.5)
    assert c.lhs == pytest.approx(math.exp(0.1), rel=1e-14)
    assert c.scale == pytest.approx(0.1 ** -10)
    c = compensation_terms({5: 1, 3: -1, 1: 1}, {}, {5: 1, 1: 1}, {3: 1}, 0.1, 0.5)
    expo = 5 ** 0.5 + 3 ** 0.5 + 1 - 2 * 5 ** 0.5
    assert c.log_lhs == pytest.approx(4 * math.log(2) - 0.1 * expo, rel=1e-14)
    with pytest.raises(ValueError):
        compensation_terms({1: 1}, {}, {2: 1}, {}, 0.1, 0.5)


def test_compensation_monotone_in_delta():
    args = ({2: 1}, {3: 1}, {2: 2, 4: 1}, {2: 1, 4: 1})
    vals = [compensation_terms(*args, d, 0.5).log_lhs for d in (0.05, 0.1, 0.2)]
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.8])
def test_compensation_constant_is_stable(theta):
    rng = np.random.default_rng(int(theta * 10))
    fits = []
    for _ in range(10_000):
        modes = rng.choice(np.arange(1, 13), size=rng.integers(1, 5), replace=False)
        k = {int(n): int(rng.integers(0, 4)) for n in modes}
        kp = {int(n): int(rng.integers(0, 4)) for n in modes}
        a = {int(n): int(rng.integers(0, 2)) for n in modes}
        l = {n: k[n] - kp[n] for n in modes if k[n] != kp[n]}
        delta = float(rng.uniform(0.05, 0.5))
        c = compensation_terms(l, a, k, kp, delta, theta)
        fits.append(c.log_lhs / c.scale)
    fits = np.array(fits)
    half, full = fits[:5000].max(), fits.max()
    assert np.isfinite(full)
    assert full <= max(2 * half, half + 1e-12)
