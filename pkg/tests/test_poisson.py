import numpy as np
import pytest
from conftest import random_plain
from oracles import bracket_sympy, max_coeff_diff
from scipy.integrate import solve_ivp

from nlwkam import HamiltonianPoly, bracket, evaluate, lie_compose, mono, vector_field
from nlwkam.hampoly import poly_product


def P(terms, n=2, D=6):
    return HamiltonianPoly.from_terms(terms, n, D)


def test_action_bracket_with_z():
    I1 = P([(mono(k={1: 1}, kp={1: 1}), 1.0)])
    z1 = P([(mono(k={1: 1}), 1.0)])
    assert bracket(I1, z1).terms() == {mono(k={1: 1}): 1j}


def test_self_bracket_vanishes(rng):
    H = random_plain(rng, 3, 4, 15)
    # exact cancellation up to rounding of the summed products
    assert bracket(H, H).max_abs() <= 1e-14 * H.max_abs() ** 2


def test_disjoint_modes_commute():
    assert len(bracket(P([(mono(k={1: 1}), 1.0)]), P([(mono(kp={2: 1}), 1.0)]))) == 0


def test_i0_factors_are_inert():
    H1 = P([(mono(a={2: 1}, k={1: 1}, kp={1: 1}), 1.0)])
    H2 = P([(mono(k={1: 1}), 1.0)])
    assert bracket(H1, H2).terms() == {mono(a={2: 1}, k={1: 1}): 1j}


def test_matches_symbolic_oracle(rng):
    for _ in range(6):
        H1 = random_plain(rng, 3, 4, 8)
        H2 = random_plain(rng, 3, 4, 8)
        B = bracket(HamiltonianPoly(H1.exps, H1.coeffs, 3, 16), HamiltonianPoly(H2.exps, H2.coeffs, 3, 16))
        assert max_coeff_diff(B, bracket_sympy(H1, H2)) <= 1e-10


def test_antisymmetry_and_bilinearity(rng):
    for _ in range(10):
        H1, H2, H3 = (random_plain(rng, 4, 3, 10) for _ in range(3))
        B12, B21 = bracket(H1, H2), bracket(H2, H1)
        assert (B12 + B21).max_abs() <= 1e-12 * max(B12.max_abs(), 1.0)
        lhs = bracket(H1 * 2.0 + H3, H2)
        rhs = bracket(H1, H2) * 2.0 + bracket(H3, H2)
        assert (lhs - rhs).max_abs() <= 1e-12 * max(lhs.max_abs(), 1.0)


def test_jacobi_identity(rng):
    for _ in range(10):
        H1, H2, H3 = (random_plain(rng, 4, 3, 6) for _ in range(3))
        big = lambda H: HamiltonianPoly(H.exps, H.coeffs, 4, 12)
        a, b, c = big(H1), big(H2), big(H3)
        cyc = bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b))
        assert cyc.max_abs() <= 1e-10


def test_leibniz_rule(rng):
    for _ in range(5):
        big = lambda H: HamiltonianPoly(H.exps, H.coeffs, 3, 12)
        H1, H2, H3 = (big(random_plain(rng, 3, 3, 5)) for _ in range(3))
        lhs = bracket(poly_product(H1, H2), H3)
        rhs = poly_product(H1, bracket(H2, H3)) + poly_product(bracket(H1, H3), H2)
        assert (lhs - rhs).max_abs() <= 1e-10


def test_truncated_bracket_tallies_dropped_mass(rng):
    H1 = random_plain(rng, 3, 4, 12)
    H2 = random_plain(rng, 3, 4, 12)
    full = bracket(HamiltonianPoly(H1.exps, H1.coeffs, 3, 12),
                   HamiltonianPoly(H2.exps, H2.coeffs, 3, 12))
    cut = bracket(H1, H2)
    keep = full.degrees <= 4
    assert (cut - HamiltonianPoly(full.exps[keep], full.coeffs[keep], 3, 4)).max_abs() <= 1e-14
    # dropped mass sums |f c1 c2| over pairs, so it bounds what the merged terms lost
    assert cut.dropped >= np.abs(full.coeffs[~keep]).sum() - 1e-12
    assert cut.dropped > 0


def test_lie_compose_trivial_cases(rng):
    H = random_plain(rng, 2, 4, 10)
    assert lie_compose(H, HamiltonianPoly.zero(2, 4)) == H
    I1 = P([(mono(k={1: 1}, kp={1: 1}), 1.0), (mono(k={2: 2}, kp={2: 2}), 0.5)])
    F = P([(mono(k={1: 1}, kp={1: 1}), 0.3)])
    assert lie_compose(I1, F, order=5) == I1
    with pytest.raises(ValueError):
        lie_compose(I1, F, order=0)


def test_lie_compose_matches_time_one_flow():
    eps = 1e-2
    H = P([(mono(k={1: 1}, kp={1: 1}), 1.0)], n=1, D=4)
    F = P([(mono(k={1: 1}), eps), (mono(kp={1: 1}), eps)], n=1, D=4)
    G = lie_compose(H, F, order=2)
    expected = H + bracket(H, F) + bracket(bracket(H, F), F) * 0.5
    assert (G - expected).max_abs() <= 1e-15
    z0 = np.array([0.3 + 0.2j])

    def rhs(_t, y):
        dz = vector_field(F, y[:1] + 1j * y[1:], [0.0])
        return np.concatenate([dz.real, dz.imag])

    sol = solve_ivp(rhs, (0, 1), [z0.real[0], z0.imag[0]], rtol=1e-13, atol=1e-15)
    z1 = sol.y[0, -1] + 1j * sol.y[1, -1]
    assert abs(evaluate(G, z0, [0.0]) - evaluate(H, [z1], [0.0])) <= 10 * eps ** 3


def test_lie_compose_tolerance_raises_order():
    H = P([(mono(k={1: 1}, kp={1: 1}), 1.0)], n=1, D=40)
    F = P([(mono(k={1: 1}, kp={1: 2}), 0.2), (mono(k={1: 2}, kp={1: 1}), 0.2)], n=1, D=40)
    _, info = lie_compose(H, F, order=1, tol=1e-30, max_order=8, info=True)
    assert info.order == 8
    _, info = lie_compose(H, F, order=1, info=True)
    assert info.order == 1
