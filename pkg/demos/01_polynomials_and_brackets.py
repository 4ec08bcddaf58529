"""
Polynomials, adapted coordinates and brackets
=============================================

Build a few monomials, move between the plain basis and the adapted
basis with ``J_n = |z_n|^2 - I_n(0)``, and check the bracket identities
that the homological step relies on.
"""

import numpy as np

from nlwkam import (HamiltonianPoly, amono, bracket, class_split, mono, norm_plus, norm_rho,
                    to_adapted, to_plain)

# |z_1|^2 and z_1: the bracket rotates z_1
I1 = HamiltonianPoly.from_terms([(mono(k={1: 1}, kp={1: 1}), 1.0)], 2, 6)
z1 = HamiltonianPoly.from_terms([(mono(k={1: 1}), 1.0)], 2, 6)
print("{I_1, z_1} =", bracket(I1, z1).terms())

# |z_1|^4 in the adapted basis is (J_1 + I_1(0))^2
H = HamiltonianPoly.from_terms([(mono(k={1: 2}, kp={1: 2}), 1.0), (mono(k={2: 1}), 0.5)], 2, 6)
G = to_adapted(H)
for key, c in sorted(G.terms().items(), key=str):
    print(f"  {c.real:+.1f}  {key}")
print("round trip exact:", (to_plain(G) - H).max_abs() == 0)

# classes count the J factors
R0, R1, R2 = class_split(G)
print("class sizes:", len(R0), len(R1), len(R2))

# weighted norms
print("norm_rho(H, 0.1) =", norm_rho(H, 0.1, 0.5))
print("norm_plus(G, 0.1) =", tuple(round(x, 6) for x in norm_plus(G, 0.1, 0.5)))

# {N, M} = i (sum (l - l') lambda) M for a diagonal N
lam = np.array([1.3, 2.2])
N = HamiltonianPoly.from_terms([(mono(k={n: 1}, kp={n: 1}), lam[n - 1]) for n in (1, 2)], 2, 6)
M = to_plain(HamiltonianPoly.from_terms([(amono(l={1: 2}, lp={2: 1}), 1.0)], 2, 6, "adapted"))
print("{N, M} / M =", list(bracket(N, M).terms().values())[0], " expected", 1j * (2 * lam[0] - lam[1]))
