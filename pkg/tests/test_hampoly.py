import math

import numpy as np
import pytest
from conftest import random_plain
from oracles import field_sympy, norm_plus_oracle, norm_rho_oracle

from nlwkam import (ADAPTED, PLAIN, HamiltonianPoly, TruncationError, amono, class_split, evaluate,
                    mono, norm_plus, norm_rho, to_adapted, to_plain, vector_field)
from nlwkam.hampoly import poly_product


def P(terms, n=3, D=6):
    return HamiltonianPoly.from_terms(terms, n, D)


def A(terms, n=3, D=6):
    return HamiltonianPoly.from_terms(terms, n, D, ADAPTED)


# -- construction ------------------------------------------------------------

def test_from_terms_merges_and_drops_zero():
    H = P([(mono(k={1: 1}), 1.0), (mono(k={1: 1}), 2.0), (mono(kp={2: 1}), 0.0)])
    assert len(H) == 1
    assert H.coeff(mono(k={1: 1})) == 3.0


def test_truncation_is_enforced():
    with pytest.raises(TruncationError):
        P([(mono(k={1: 7}), 1.0)])
    with pytest.raises(TruncationError):
        P([(mono(k={4: 1}), 1.0)])


def test_adapted_keys_need_disjoint_l():
    with pytest.raises(ValueError):
        A([(amono(l={1: 1}, lp={1: 1}), 1.0)])


def test_arrays_are_read_only():
    H = P([(mono(k={1: 1}), 1.0)])
    with pytest.raises(ValueError):
        H.coeffs[0] = 2.0


def test_json_round_trip(rng):
    H = random_plain(rng, 3, 6, 20)
    again = HamiltonianPoly.from_json(H.to_json())
    assert again == H
    d = H.to_json_dict()
    assert d["basis"] == "plain" and d["maxMode"] == 3 and d["maxDegree"] == 6
    assert set(d["terms"][0]) == {"a", "k", "k'", "re", "im"}
    G = to_adapted(H)
    assert HamiltonianPoly.from_json(G.to_json()) == G
    assert set(G.to_json_dict()["terms"][0]) == {"a", "b", "l", "l'", "re", "im"}


def test_json_is_deterministic(rng):
    H = random_plain(rng, 4, 6, 30)
    shuffled = H.select(np.ones(len(H), bool))
    assert H.to_json() == shuffled.to_json()


# -- basis conversion --------------------------------------------------------

def test_to_adapted_examples():
    G = to_adapted(P([(mono(k={1: 1}, kp={1: 1}), 1.0)]))
    assert G.terms() == {amono(a={1: 1}): 1, amono(b={1: 1}): 1}
    G = to_adapted(P([(mono(k={2: 1}), 1.0)]))
    assert G.terms() == {amono(l={2: 1}): 1}
    G = to_adapted(P([(mono(k={1: 2}, kp={1: 2}), 1.0)]))
    assert G.terms() == {amono(a={1: 2}): 1, amono(a={1: 1}, b={1: 1}): 2, amono(b={1: 2}): 1}


def test_to_plain_examples():
    assert to_plain(A([(amono(b={1: 1}), 1.0)])).terms() == {
        mono(k={1: 1}, kp={1: 1}): 1, mono(a={1: 1}): -1}
    assert to_plain(A([(amono(), 1.0)])).terms() == {mono(): 1}
    assert to_plain(A([(amono(b={1: 2}), 1.0)])).terms() == {
        mono(k={1: 2}, kp={1: 2}): 1, mono(a={1: 1}, k={1: 1}, kp={1: 1}): -2, mono(a={1: 2}): 1}


def test_round_trip_and_evaluation_agree(rng):
    for _ in range(20):
        H = random_plain(rng, 6, 6, 40, real=True)
        G = to_adapted(H)
        assert np.all(G.block(2) * G.block(3) == 0)
        back = to_plain(G)
        diff = (back - H).max_abs()
        assert diff <= 1e-12 * H.max_abs()
        z = rng.normal(size=6) + 1j * rng.normal(size=6)
        I0 = rng.uniform(0.1, 1.0, 6)
        v1, v2 = evaluate(H, z, I0), evaluate(G, z, I0)
        assert abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1)) * 10


def test_real_symmetry_preserved_by_conversion(rng):
    H = random_plain(rng, 4, 6, 30, real=True)
    assert H.is_real_symmetric()
    assert to_adapted(H).is_real_symmetric()


def test_class_split():
    G = A([(amono(l={1: 1}), 1), (amono(b={2: 1}), 2), (amono(b={1: 1, 2: 1}), 3),
           (amono(b={3: 3}), 4)])
    R0, R1, R2 = class_split(G)
    assert len(R0) == 1 and len(R1) == 1 and len(R2) == 2


# -- norms -------------------------------------------------------------------

def test_norm_rho_examples():
    assert norm_rho(P([(mono(k={1: 1}, kp={1: 1}), 1.0)]), 0.3, 0.5) == pytest.approx(1.0)
    assert norm_rho(P([(mono(k={2: 2}), 1.0)]), 0.1, 0.5) == pytest.approx(2.0)
    assert norm_rho(HamiltonianPoly.zero(3, 6), 0.1, 0.5) == 0.0


def test_norm_plus_examples():
    assert norm_plus(A([(amono(b={2: 1}), 1.0)]), 0.0, 0.5).r1 == pytest.approx(2.0)
    assert tuple(norm_plus(HamiltonianPoly.zero(3, 6, ADAPTED), 0.1, 0.5)) == (0, 0, 0, 0)
    r = norm_plus(A([(amono(l={3: 1}, lp={1: 2}), 1.0)]), 0.0, 0.5)
    assert r.r0 == pytest.approx(math.sqrt(3))
    assert r.max == pytest.approx(math.sqrt(3))


def test_norm_of_constant_uses_zero_n1():
    # empty multiset: exponent is 0, so the norm is |B| for any rho
    assert norm_rho(P([(mono(), 2.5)]), 1.0, 0.5) == pytest.approx(2.5)


def test_norms_match_term_by_term_oracle(rng):
    for rho in (0.0, 0.05, 0.3):
        H = random_plain(rng, 5, 6, 60)
        assert norm_rho(H, rho, 0.5) == pytest.approx(norm_rho_oracle(H, rho, 0.5), rel=1e-12)
        G = to_adapted(H)
        got = norm_plus(G, rho, 0.5)
        want = norm_plus_oracle(G, rho, 0.5)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, rel=1e-12, abs=1e-300)


def test_norm_rho_monotone_in_rho(rng):
    H = random_plain(rng, 5, 6, 80)
    npow = np.arange(1, 6) ** 0.5
    mult = H.multiplicities()
    n1 = np.array([np.flatnonzero(r).max() + 1 for r in mult])
    H = H.select(mult @ npow - 2 * n1 ** 0.5 > 1e-12)
    assert len(H) > 10
    vals = [norm_rho(H, rho, 0.5) for rho in (0.0, 0.1, 0.2, 0.5, 1.0)]
    assert all(a >= b - 1e-15 * a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("delta", [0.05, 0.1])
def test_norm_conversion_bounds(rng, delta):
    theta, rho = 0.5, 0.1
    for _ in range(10):
        H = random_plain(rng, 5, 6, 30, real=True)
        G = to_adapted(H)
        assert math.isfinite(norm_plus(G, rho + delta, theta).max)
        lhs = norm_rho(to_plain(G), rho + delta, theta)
        bound = 4.0 / ((2 - 2 ** theta) ** 2 * delta ** 2) * norm_plus(G, rho, theta).max
        assert lhs <= bound


# -- evaluation and vector field ---------------------------------------------------

def test_evaluate_examples():
    assert evaluate(P([(mono(k={1: 1}, kp={1: 1}), 1.0)]), [0.5, 0, 0], [0, 0, 0]) == pytest.approx(0.25)
    assert evaluate(A([(amono(b={1: 1}), 1.0)]), [0.5, 0, 0], [0.25, 0, 0]) == pytest.approx(0.0)
    assert evaluate(P([(mono(a={1: 1}, k={2: 1}), 1.0)]), [0, 0.2, 0], [0.1, 0, 0]) == pytest.approx(0.02)


def test_vector_field_examples():
    z = np.array([1.0, 0.3 + 0.4j, 0.0])
    out = vector_field(P([(mono(k={1: 1}, kp={1: 1}), 2.0)]), z, np.zeros(3))
    assert out[0] == pytest.approx(-2j)
    assert np.all(vector_field(P([(mono(), 5.0)]), z, np.zeros(3)) == 0)
    out = vector_field(P([(mono(kp={2: 2}), 1.0)]), z, np.zeros(3))
    assert out[1] == pytest.approx(-2j * np.conj(z[1]))


def test_vector_field_matches_symbolic_oracle(rng):
    for _ in range(5):
        H = random_plain(rng, 3, 5, 12)
        z = rng.normal(size=3) + 1j * rng.normal(size=3)
        I0 = rng.uniform(0.1, 1, 3)
        got = vector_field(H, z, I0)
        want = np.array(field_sympy(H, z, I0))
        assert np.max(np.abs(got - want)) <= 1e-10 * max(1.0, np.max(np.abs(want)))


def test_compiled_jacobian_matches_finite_differences(rng):
    from nlwkam import CompiledField

    H = random_plain(rng, 3, 5, 15, real=True)
    I0 = rng.uniform(0.1, 1, 3)
    f = CompiledField(H, I0)
    z = 0.5 * (rng.normal(size=3) + 1j * rng.normal(size=3))
    dA, dB = f.jacobian(z)
    h = 1e-6
    for m in range(3):
        e = np.zeros(3, complex)
        e[m] = h
        # d/dz = (d/dx - i d/dy)/2 and d/dzbar = (d/dx + i d/dy)/2
        dx = (f(z + e) - f(z - e)) / (2 * h)
        dy = (f(z + 1j * e) - f(z - 1j * e)) / (2 * h)
        assert np.allclose(dA[:, m], 0.5 * (dx - 1j * dy), atol=1e-6)
        assert np.allclose(dB[:, m], 0.5 * (dx + 1j * dy), atol=1e-6)


def test_vector_field_bound_scales_linearly(rng):
    r, theta, rho = 1.0, 0.5, 0.1
    n = 4
    w = np.exp(r * np.arange(1, n + 1) ** theta)
    ratios = []
    for scale in (1.0, 3.0):
        H = random_plain(np.random.default_rng(7), n, 4, 20, real=True)
        H = H * (scale / norm_rho(H, rho, theta))
        sup = 0.0
        local = np.random.default_rng(11)
        for _ in range(1000):
            z = local.uniform(0, 1, n) / w * np.exp(2j * np.pi * local.uniform(size=n))
            sup = max(sup, float(np.max(np.abs(vector_field(H, z, np.zeros(n))) * w)))
        ratios.append(sup / scale)
    assert all(math.isfinite(x) for x in ratios)
    assert ratios[0] == pytest.approx(ratios[1], rel=1e-12)


# -- products ------------------------------------------------------------------

def test_product_truncates_and_tallies():
    H = P([(mono(k={1: 3}), 2.0), (mono(k={1: 1}), 1.0)], n=2, D=4)
    prod = poly_product(H, H)
    # z1^6 exceeds degree 4 and is dropped with mass |2 * 2|
    assert prod.terms() == {mono(k={1: 2}): 1.0, mono(k={1: 4}): 4.0}
    assert prod.dropped == pytest.approx(4.0)


def test_scalar_ops():
    H = P([(mono(k={1: 1}), 2.0)])
    assert (H * 0).max_abs() == 0 and len(H * 0) == 0
    assert (H / 2).coeff(mono(k={1: 1})) == 1.0
    assert len(H - H) == 0
