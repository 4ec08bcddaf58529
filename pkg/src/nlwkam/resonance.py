"""Frequencies, small divisors, nonresonance conditions and resonant-set measure.

Frequencies are ``lambda_n = sqrt(n^2 + V_n)`` with offsets ``omega_n = lambda_n - n``.
For a signed index ``l`` (a finitely supported integer map) the two
conditions checked are

    ||sum l_n omega_n|| >= gamma * prod 1 / (1 + l_n^2 n^5)                       (1)
    ||sum l_n omega_n|| >= gamma^3/16 * prod_{n != n1*, n2*} (1 + l_n^2 n^6)^-4    (2)

with ``||x|| = dist(x, Z)``; (2) applies only when ``n3* < n2*`` and
``sum |l_n| >= 3``, where ``n*`` is the decreasing rearrangement of ``|l|``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .multiindex import starred_rearrangement

__all__ = [
    "FrequencyModel",
    "ResonanceError",
    "ConditionResult",
    "frac_dist",
    "divisor",
    "check_condition_1",
    "check_condition_2",
    "sample_omega",
    "enumerate_l",
    "critical_gamma",
    "measure_estimate",
    "MeasureReport",
    "compensation_terms",
    "Compensation",
]


class ResonanceError(ArithmeticError):
    """A small divisor vanished (or the enumeration budget was exceeded)."""

    def __init__(self, msg, l=None):
        super().__init__(msg)
        self.l = l


@dataclass(frozen=True)
class FrequencyModel:
    """Potential values ``V_n`` (mode ``n = i + 1`` at position ``i``)."""

    V: tuple

    def __init__(self, V):
        V = tuple(float(v) for v in V)
        for i, v in enumerate(V):
            if (i + 1) ** 2 + v <= 0:
                raise ValueError(f"n^2 + V_n must be positive (mode {i + 1})")
        object.__setattr__(self, "V", V)

    @classmethod
    def from_omega(cls, omega) -> "FrequencyModel":
        """Potential with ``sqrt(n^2 + V_n) = n + omega_n``, i.e. ``V_n = 2 n omega_n + omega_n^2``."""
        return cls([2 * (i + 1) * w + w * w for i, w in enumerate(omega)])

    @property
    def n_modes(self) -> int:
        return len(self.V)

    @property
    def lam(self) -> np.ndarray:
        n = np.arange(1, self.n_modes + 1)
        return np.sqrt(n * n + np.array(self.V))

    @property
    def omega(self) -> np.ndarray:
        # V / (sqrt(n^2 + V) + n) avoids cancellation in lambda - n
        n = np.arange(1, self.n_modes + 1)
        V = np.array(self.V)
        return V / (np.sqrt(n * n + V) + n)


def _omega_of(fm) -> np.ndarray:
    return np.asarray(fm.omega if isinstance(fm, FrequencyModel) else fm, dtype=float)


def _signed_items(l) -> list[tuple[int, int]]:
    items = l.items() if isinstance(l, Mapping) else l
    out = sorted((int(n), int(v)) for n, v in items if v)
    for n, _ in out:
        if n < 1:
            raise ValueError(f"modes must be >= 1, got {n}")
    return out


def frac_dist(x):
    """Distance to the nearest integer (round-half-even, exact at half-integers)."""
    return np.abs(x - np.rint(x))


def divisor(l, fm) -> float:
    """``sum_n l_n lambda_n`` for the signed index ``l``.

    The integer part ``sum l_n n`` and the offsets ``sum l_n omega_n`` are
    summed separately with :func:`math.fsum`.
    """
    items = _signed_items(l)
    omega = _omega_of(fm)
    parts = []
    for n, v in items:
        if n > omega.size:
            raise ValueError(f"mode {n} outside the frequency model")
        parts.append(v * float(omega[n - 1]))
    return math.fsum([sum(v * n for n, v in items)] + parts)


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    margin: float
    lhs: float
    rhs: float
    applicable: bool = True


def _lhs(items, omega) -> float:
    x = math.fsum(v * float(omega[n - 1]) for n, v in items)
    return float(frac_dist(x))


def check_condition_1(fm, l, gamma: float) -> ConditionResult:
    """First nonresonance inequality for ``l != 0``; margin is ``lhs - rhs``."""
    items = _signed_items(l)
    if not items:
        raise ValueError("condition 1 needs l != 0")
    omega = _omega_of(fm)
    lhs = _lhs(items, omega)
    log_rhs = math.log(gamma) - math.fsum(math.log1p(v * v * n ** 5) for n, v in items) \
        if gamma > 0 else -math.inf
    rhs = math.exp(log_rhs)
    return ConditionResult(lhs >= rhs, lhs - rhs, lhs, rhs)


def _cond2_log_base(items) -> float | None:
    """``log prod_{n != n1*, n2*} (1 + l_n^2 n^6)^-4``, or None when not applicable."""
    star = starred_rearrangement(dict(items), {})
    if len(star) < 3 or not star[2] < star[1]:
        return None
    skip = {star[0], star[1]}
    return -4.0 * math.fsum(math.log1p(v * v * n ** 6) for n, v in items if n not in skip)


def check_condition_2(fm, l, gamma: float) -> ConditionResult:
    """Second nonresonance inequality; ``applicable=False`` when its hypotheses fail."""
    items = _signed_items(l)
    omega = _omega_of(fm)
    lhs = _lhs(items, omega) if items else 0.0
    base = _cond2_log_base(items)
    if base is None:
        return ConditionResult(True, math.inf, lhs, 0.0, applicable=False)
    rhs = math.exp(3 * math.log(gamma) - math.log(16.0) + base) if gamma > 0 else 0.0
    return ConditionResult(lhs >= rhs, lhs - rhs, lhs, rhs)


def sample_omega(seed: int, N: int, size: int | None = None, start: int = 0) -> np.ndarray:
    """Independent ``omega_n ~ U[0, 1/n]`` from a counter-based (Philox) stream.

    Draw ``i`` (row ``i`` of the output when ``size`` is given) depends only
    on ``(seed, start + i)``, so chunked or parallel sampling reproduces the
    same values.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    # each row occupies whole 4-word Philox blocks so rows can be skipped exactly
    width = 4 * -(-N // 4)
    bg = np.random.Philox(key=seed)
    if start:
        bg.advance(start * width // 4)
    rng = np.random.Generator(bg)
    n = np.arange(1, N + 1)
    rows = 1 if size is None else size
    u = rng.random((rows, width))[:, :N]
    out = u / n
    return out[0] if size is None else out


def enumerate_l(N: int, L: int, S: int, budget: int = 500_000) -> np.ndarray:
    """All signed indices with support size ``<= S`` in modes ``<= N``, ``|l_n| <= L``.

    Only one of ``l`` and ``-l`` is kept (first nonzero entry positive); both
    conditions are symmetric under ``l -> -l``.
    """
    count = sum(math.comb(N, s) * (2 * L) ** s for s in range(1, S + 1)) // 2
    if count > budget:
        raise ResonanceError(f"enumeration of {count} indices exceeds budget {budget}")
    vals = [v for v in range(-L, L + 1) if v]
    rows = []
    for s in range(1, S + 1):
        for supp in itertools.combinations(range(N), s):
            for signs in itertools.product(vals, repeat=s):
                if signs[0] < 0:
                    continue
                row = [0] * N
                for i, v in zip(supp, signs):
                    row[i] = v
                rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, N)


def _condition_bases(lset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-index ``1/rhs`` scale factors: ``prod(1 + l^2 n^5)`` and ``16 prod(...)^4`` or inf."""
    N = lset.shape[1]
    n = np.arange(1, N + 1, dtype=float)
    l2 = lset.astype(float) ** 2
    inv1 = np.exp(np.log1p(l2 * n ** 5).sum(1))
    inv2 = np.full(lset.shape[0], np.inf)
    for i, row in enumerate(lset):
        base = _cond2_log_base([(j + 1, int(v)) for j, v in enumerate(row) if v])
        if base is not None:
            inv2[i] = 16.0 * math.exp(-base)
    return inv1, inv2


def critical_gamma(omega: np.ndarray, lset: np.ndarray, chunk: int = 256,
                   _bases=None) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``gamma`` at which each sampled ``omega`` violates (1), resp. (2).

    ``omega`` fails condition (1) for some ``l`` iff ``gamma > g1`` and
    condition (2) iff ``gamma > g2``.
    """
    omega = np.atleast_2d(omega)
    inv1, inv2 = _bases if _bases is not None else _condition_bases(lset)
    app = np.isfinite(inv2)
    lf = lset.astype(float).T
    g1 = np.empty(omega.shape[0])
    g2 = np.full(omega.shape[0], np.inf)
    for s in range(0, omega.shape[0], chunk):
        x = omega[s:s + chunk] @ lf
        d = frac_dist(x)
        g1[s:s + chunk] = (d * inv1).min(1)
        if app.any():
            g2[s:s + chunk] = np.cbrt((d[:, app] * inv2[app]).min(1))
    return g1, g2


@dataclass
class MeasureReport:
    gamma: float
    N: int
    L: int
    S: int
    samples: int
    fraction: float
    ci: float
    failures_by_condition: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "N": self.N, "L": self.L, "S": self.S,
                "samples": self.samples, "fraction": self.fraction, "ci": self.ci,
                "failures_by_condition": dict(self.failures_by_condition)}


def measure_estimate(gamma, N: int, L: int, S: int, samples: int, seed: int,
                     budget: int = 500_000, chunk: int = 256):
    """Monte Carlo fraction of ``omega`` failing (1) or (2) for some enumerated ``l``.

    ``gamma`` may be a scalar (returns one :class:`MeasureReport`) or a
    sequence (returns a list, all sharing the same samples).  ``ci`` is the
    95% normal-approximation half-width.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    scalar = np.isscalar(gamma)
    gammas = [float(gamma)] if scalar else [float(g) for g in gamma]
    lset = enumerate_l(N, L, S, budget)
    bases = _condition_bases(lset)
    g1 = np.empty(samples)
    g2 = np.empty(samples)
    block = 8192
    for s in range(0, samples, block):
        m = min(block, samples - s)
        om = sample_omega(seed, N, size=m, start=s)
        g1[s:s + m], g2[s:s + m] = critical_gamma(om, lset, chunk, bases)
    out = []
    for g in gammas:
        f1 = g1 < g
        f2 = g2 < g
        frac = float(np.mean(f1 | f2))
        ci = 1.96 * math.sqrt(frac * (1 - frac) / samples)
        out.append(MeasureReport(g, N, L, S, samples, frac, ci,
                                 {"1": int(f1.sum()), "2": int(f2.sum())}))
    return out[0] if scalar else out


@dataclass(frozen=True)
class Compensation:
    log_lhs: float
    scale: float

    @property
    def lhs(self) -> float:
        return math.exp(self.log_lhs)


def compensation_terms(l, a, k, kp, delta: float, theta: float) -> Compensation:
    """Both sides of the compensation estimate in a form suitable for fitting.

    ``log_lhs = 4 sum_{n != n1*, n2*} log(1 + l_n^2 n^6)
               - delta (sum (2a + k + k') n^theta - 2 n_1^theta)`` and
    ``scale = delta^(-5/theta)``; the estimate reads ``log_lhs <= C scale``.
    """
    from .multiindex import rearrangement

    if delta <= 0 or not 0 < theta < 1:
        raise ValueError("need delta > 0 and 0 < theta < 1")
    items = _signed_items(l)
    k = dict(k.items()) if isinstance(k, Mapping) else dict(k)
    kp = dict(kp.items()) if isinstance(kp, Mapping) else dict(kp)
    diff = {n: k.get(n, 0) - kp.get(n, 0) for n in set(k) | set(kp)}
    if {n: v for n, v in diff.items() if v} != dict(items):
        raise ValueError("l must equal k - k'")
    star = starred_rearrangement(k, kp)
    skip = set(star[:2])
    prod = 4.0 * math.fsum(math.log1p(v * v * n ** 6) for n, v in items if n not in skip)
    seq = rearrangement(a, k, kp)
    expo = math.fsum(n ** theta for n in seq) - (2.0 * seq[0] ** theta if seq else 0.0)
    return Compensation(prod - delta * expo, delta ** (-5.0 / theta))
