"""Homological equations ``{N, F} + R0 + R1 = [R0] + [R1]``.

With ``N = sum lambda_n |z_n|^2`` one has ``{N, M} = i (sum (l_n - l'_n) lambda_n) M``
for every adapted monomial ``M``, and ``{N, J_m} = 0``.  So each non-averaged
key is removed by ``F = i B / divisor`` (the factor ``i`` comes from the
bracket convention, see :mod:`nlwkam.poisson`).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .hampoly import ADAPTED, PLAIN, HamiltonianPoly, class_split, to_adapted, to_plain
from .poisson import bracket
from .resonance import FrequencyModel, ResonanceError

__all__ = [
    "averages",
    "solve",
    "residual",
    "key_divisors",
    "truncation_sums",
    "HomologicalSolution",
    "ZERO_DIVISOR",
]

ZERO_DIVISOR = 1e-300


def _require_adapted(*polys):
    for p in polys:
        if p.basis != ADAPTED:
            raise ValueError("expected adapted polynomials")


def averages(R0: HamiltonianPoly, R1: HamiltonianPoly):
    """Averaged parts and their complements.

    Returns ``([R0], [R1], R0 - [R0], R1 - [R1])``: the averages keep exactly
    the keys with ``l = l' = 0``.
    """
    _require_adapted(R0, R1)
    out = []
    for R in (R0, R1):
        avg = ~(R.block(2).any(1) | R.block(3).any(1))
        out.append((R.select(avg), R.select(~avg)))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def _lam_omega(fm, n_modes: int):
    if isinstance(fm, FrequencyModel):
        omega = fm.omega
    else:
        omega = np.asarray(fm, dtype=float)
    if omega.size < n_modes:
        raise ValueError("frequency model has fewer modes than the polynomial")
    return omega[:n_modes]


def key_divisors(H: HamiltonianPoly, fm) -> np.ndarray:
    """``sum_n (l_n - l'_n) lambda_n`` for every key of an adapted polynomial.

    Integer part and offsets are accumulated separately, the offsets with
    :func:`math.fsum`.  ``fm`` is a :class:`FrequencyModel` or an array of
    offsets ``omega_n = lambda_n - n``.
    """
    _require_adapted(H)
    omega = _lam_omega(fm, H.n_modes)
    L = H.block(2) - H.block(3)
    ints = L @ np.arange(1, H.n_modes + 1)
    out = np.empty(len(H))
    for i, row in enumerate(L):
        nz = np.flatnonzero(row)
        out[i] = math.fsum([float(ints[i])] + (row[nz] * omega[nz]).tolist())
    return out


def truncation_sums(H: HamiltonianPoly, theta: float) -> np.ndarray:
    """``sum_{i>=3} n_i^theta`` over the rearrangement of the inner monomial ``(a, l, l')``."""
    _require_adapted(H)
    mult = 2 * H.block(0) + H.block(2) + H.block(3)
    npow = np.arange(1, H.n_modes + 1, dtype=float) ** theta
    total = mult @ npow
    # subtract the two largest entries of the rearrangement
    out = np.empty(len(H))
    for i, row in enumerate(mult):
        nz = np.flatnonzero(row)[::-1]
        top, left = 0.0, 2
        for j in nz:
            take = min(left, int(row[j]))
            top += take * npow[j]
            left -= take
            if not left:
                break
        out[i] = total[i] - top
    return out


class HomologicalSolution(NamedTuple):
    F0: HamiltonianPoly
    F1: HamiltonianPoly
    deferred: HamiltonianPoly
    cases: dict


def _case_counts(H: HamiltonianPoly) -> dict:
    """How many keys fall under each divisor case (``n3* < n2*``, ``n3* = n2*``, short)."""
    L = np.abs(H.block(2) - H.block(3))
    counts = {"n3<n2": 0, "n3=n2": 0, "short": 0}
    for row in L:
        star = []
        for j in np.flatnonzero(row)[::-1]:
            star.extend([j + 1] * int(row[j]))
            if len(star) >= 3:
                break
        if len(star) < 3:
            counts["short"] += 1
        elif star[2] < star[1]:
            counts["n3<n2"] += 1
        else:
            counts["n3=n2"] += 1
    return counts


def solve(fm, R0_nonres: HamiltonianPoly, R1_nonres: HamiltonianPoly,
          Bs: float = math.inf, theta: float = 0.5) -> HomologicalSolution:
    """Solve the homological equations key by key.

    Keys with ``sum_{i>=3} n_i^theta > Bs`` are not solved; they are returned
    untouched in ``deferred`` (adapted basis).  ``cases`` counts the divisor
    case of each solved key (diagnostic only, the formula does not depend on
    it).

    Raises
    ------
    ValueError
        If an input holds an averaged key (``l = l' = 0``).
    ResonanceError
        If a retained key has an exactly vanishing divisor.
    """
    _require_adapted(R0_nonres, R1_nonres)
    cases = {"n3<n2": 0, "n3=n2": 0, "short": 0}
    out = []
    deferred = HamiltonianPoly.zero(R0_nonres.n_modes, R0_nonres.max_degree, ADAPTED)
    for R, cls in ((R0_nonres, 0), (R1_nonres, 1)):
        if len(R) and np.any(R.block(1).sum(1) != cls):
            raise ValueError(f"input is not class {cls}")
        if len(R) and np.any(~(R.block(2).any(1) | R.block(3).any(1))):
            raise ValueError("averaged key passed to solve")
        keep = truncation_sums(R, theta) <= Bs if len(R) else np.zeros(0, bool)
        deferred = deferred + R.select(~keep)
        kept = R.select(keep)
        div = key_divisors(kept, fm)
        L = kept.block(2) - kept.block(3)
        ints = L @ np.arange(1, kept.n_modes + 1)
        bad = (ints == 0) & (np.abs(div) < ZERO_DIVISOR)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            l = {j + 1: int(v) for j, v in enumerate(L[i]) if v}
            raise ResonanceError(f"vanishing divisor for l={l}", l)
        for k, v in _case_counts(kept).items():
            cases[k] += v
        out.append(kept._new(kept.exps, 1j * kept.coeffs / div))
    return HomologicalSolution(out[0], out[1], deferred, cases)


def residual(N: HamiltonianPoly, F0: HamiltonianPoly, F1: HamiltonianPoly,
             R0: HamiltonianPoly, R1: HamiltonianPoly, R0_avg: HamiltonianPoly,
             R1_avg: HamiltonianPoly, deferred: HamiltonianPoly | None = None,
             relative: bool = False) -> float:
    """Largest coefficient of ``{N, F} + R0 + R1 - [R0] - [R1]`` on retained keys.

    ``N`` is plain; the other arguments are adapted.  Deferred keys are
    subtracted first since they are not meant to cancel.  With
    ``relative=True`` the result is divided by the largest coefficient of
    ``R0 + R1`` (when nonzero).
    """
    _require_adapted(F0, F1, R0, R1, R0_avg, R1_avg)
    if N.basis != PLAIN:
        raise ValueError("N must be plain")
    F = to_plain(F0 + F1)
    lhs = to_adapted(bracket(N, F)) + R0 + R1 - R0_avg - R1_avg
    if deferred is not None:
        lhs = lhs - deferred
    res = lhs.max_abs()
    if relative:
        scale = (R0 + R1).max_abs()
        if scale > 0:
            res /= scale
    return res


def split_for_solve(R: HamiltonianPoly):
    """Convenience: plain ``R`` to ``(R0, R1, R2, [R0], [R1], R0 - [R0], R1 - [R1])``."""
    A = to_adapted(R) if R.basis == PLAIN else R
    R0, R1, R2 = class_split(A)
    return (R0, R1, R2) + averages(R0, R1)
