"""Poisson brackets of monomial Hamiltonians and Lie-series composition.

The bracket is ``{H1, H2} = -i sum_j (dH1/dz_j dH2/dzbar_j - dH1/dzbar_j dH2/dz_j)``,
so that ``dG/dt = {G, H}`` along ``zdot = -i dH/dzbar``.  On monomials this is
the coefficient formula

    B_{alpha kappa kappa'} = -i sum_j sum (k_j K'_j - k'_j K_j) b_{akk'} B_{AKK'}

with ``alpha = a + A`` and ``kappa = k + K - e_j`` (same for the primes).  The
``I(0)`` factors are inert constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hampoly import PLAIN, HamiltonianPoly, _code_sum, _group_sum

__all__ = ["bracket", "lie_compose", "LieInfo"]


def bracket(H1: HamiltonianPoly, H2: HamiltonianPoly) -> HamiltonianPoly:
    """Poisson bracket ``{H1, H2}`` in the plain basis.

    Keys whose degree exceeds the truncation are dropped; their summed
    coefficient magnitude is added to ``result.dropped``.
    """
    H1._check_compatible(H2)
    if H1.basis != PLAIN:
        raise ValueError("bracket expects plain polynomials")
    n, D = H1.n_modes, H1.max_degree
    if len(H1) == 0 or len(H2) == 0:
        return HamiltonianPoly.zero(n, D)
    radix = H1._radix()
    k1, kp1 = H1.block(1), H1.block(2)
    k2, kp2 = H2.block(1), H2.block(2)
    d1, d2 = H1.degrees, H2.degrees
    c1, c2 = H1.coeffs, H2.coeffs
    keys, vals = [], []
    dropped = 0.0
    for j in range(n):
        i1 = np.flatnonzero((k1[:, j] > 0) | (kp1[:, j] > 0))
        i2 = np.flatnonzero((k2[:, j] > 0) | (kp2[:, j] > 0))
        if i1.size == 0 or i2.size == 0:
            continue
        dropped += _dropped_mass(k1[i1, j], kp1[i1, j], d1[i1], np.abs(c1[i1]),
                                 k2[i2, j], kp2[i2, j], d2[i2], np.abs(c2[i2]), D)
        # only degree pairs with d1 + d2 - 2 <= D survive the truncation
        for deg in np.unique(d1[i1]):
            a_idx = i1[d1[i1] == deg]
            b_idx = i2[d2[i2] <= D + 2 - deg]
            if b_idx.size == 0:
                continue
            f = (k1[a_idx, j][:, None] * kp2[b_idx, j][None, :]
                 - kp1[a_idx, j][:, None] * k2[b_idx, j][None, :])
            a, b = np.nonzero(f)
            if a.size == 0:
                continue
            g1, g2 = a_idx[a], b_idx[b]
            v = -1j * f[a, b] * c1[g1] * c2[g2]
            if radix.fits:
                shift = radix.mult[n + j] + radix.mult[2 * n + j]
                keys.append(H1.codes()[g1] + H2.codes()[g2] - shift)
            else:
                rows = H1.exps[g1] + H2.exps[g2]
                rows[:, n + j] -= 1
                rows[:, 2 * n + j] -= 1
                keys.append(rows)
            vals.append(v)
    if not vals:
        return HamiltonianPoly(np.zeros((0, 3 * n), dtype=np.int64), [], n, D, PLAIN,
                               dropped, canonical=True)
    vals = np.concatenate(vals)
    if radix.fits:
        codes, cs = _code_sum(np.concatenate(keys), vals)
        rows = radix.decode(codes)
    else:
        rows, cs = _group_sum(np.vstack(keys), vals)
    return HamiltonianPoly(rows, cs, n, D, PLAIN, dropped, canonical=True)


def _dropped_mass(ka, kpa, da, wa, kb, kpb, db, wb, D) -> float:
    """Exact ``sum |f| |c1| |c2|`` over pairs whose product exceeds degree ``D``.

    ``f = k1 k2' - k1' k2`` only depends on the exponents at the bracketed
    mode, so weights are first summed over groups of equal ``(k, k', degree)``.
    """
    ga, wa_sum = _group_weights(ka, kpa, da, wa)
    gb, wb_sum = _group_weights(kb, kpb, db, wb)
    over = (ga[:, 2][:, None] + gb[:, 2][None, :] - 2) > D
    if not over.any():
        return 0.0
    f = np.abs(ga[:, 0][:, None] * gb[:, 1][None, :] - ga[:, 1][:, None] * gb[:, 0][None, :])
    return float(np.sum(np.where(over, f * wa_sum[:, None] * wb_sum[None, :], 0.0)))


def _group_weights(k, kp, d, w):
    keys = np.column_stack([k, kp, d])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    return uniq, np.bincount(inv.reshape(-1), weights=w, minlength=uniq.shape[0])


@dataclass
class LieInfo:
    """Diagnostics of a truncated Lie series."""

    order: int
    last_term: float
    dropped: float


def lie_compose(H: HamiltonianPoly, F: HamiltonianPoly, order: int = 6, *,
                tol: float | None = None, max_order: int = 30,
                info: bool = False):
    """``H ∘ X_F^1`` as the truncated Lie series ``sum_p ad^p H / p!``.

    Here ``ad G = {G, F}``.  At least ``order`` terms are summed; if ``tol``
    is given, terms keep being added (up to ``max_order``) until the largest
    coefficient of the last term is below ``tol``.  The series stops early
    once a term vanishes, which happens after a few steps under a degree
    truncation.  With ``info=True`` returns ``(poly, LieInfo)``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    result = H
    term = H
    p = 0
    last = 0.0
    while True:
        p += 1
        term = bracket(term, F) / p
        last = term.max_abs()
        result = result + term
        if len(term) == 0:
            break
        if p >= order and (tol is None or last < tol):
            break
        if p >= max_order:
            break
    if info:
        return result, LieInfo(order=p, last_term=last, dropped=result.dropped)
    return result
