"""Multi-index arithmetic and the rearrangement combinatorics behind norms and divisors.

A multi-index is a finitely supported map ``mode -> exponent`` with modes
``n >= 1``.  Monomials ``prod I_n(0)^a_n z_n^k_n zbar_n^k'_n`` are indexed by
triples ``(a, k, k')`` of multi-indices.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from typing import Iterator

__all__ = [
    "MultiIndex",
    "rearrangement",
    "starred_rearrangement",
    "gap_terms",
    "admits_zero_sum",
]


class MultiIndex(Mapping):
    """Immutable sparse map from positive modes to nonnegative exponents.

    Zero exponents are dropped on construction, so two multi-indices compare
    equal iff they have the same support and exponents.

    >>> MultiIndex({3: 1, 1: 2, 4: 0})
    MultiIndex({1: 2, 3: 1})
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] | None = None):
        if entries is None:
            entries = {}
        if isinstance(entries, Mapping):
            entries = entries.items()
        acc: dict[int, int] = {}
        for n, e in entries:
            n, e = int(n), int(e)
            if n < 1:
                raise ValueError(f"modes must be >= 1, got {n}")
            if e < 0:
                raise ValueError(f"exponents must be >= 0, got {e} at mode {n}")
            if e:
                acc[n] = acc.get(n, 0) + e
        self._items = tuple(sorted(acc.items()))
        self._hash = hash(self._items)

    @classmethod
    def unit(cls, n: int, e: int = 1) -> "MultiIndex":
        return cls({n: e})

    @classmethod
    def from_dense(cls, exps: Iterable[int]) -> "MultiIndex":
        """Build from a dense exponent vector whose position 0 is mode 1."""
        return cls((i + 1, e) for i, e in enumerate(exps))

    def to_dense(self, n_modes: int) -> list[int]:
        out = [0] * n_modes
        for n, e in self._items:
            if n > n_modes:
                raise ValueError(f"mode {n} exceeds {n_modes}")
            out[n - 1] = e
        return out

    def __getitem__(self, n: int) -> int:
        for m, e in self._items:
            if m == n:
                return e
        return 0

    def __contains__(self, n: object) -> bool:
        return any(m == n for m, _ in self._items)

    def __iter__(self) -> Iterator[int]:
        return (n for n, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, MultiIndex):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self == MultiIndex(other)
        return NotImplemented

    def __lt__(self, other: "MultiIndex") -> bool:
        return self._items < other._items

    def __repr__(self) -> str:
        return f"MultiIndex({dict(self._items)})"

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(list(self._items) + list(other._items))

    def minimum(self, other: "MultiIndex") -> "MultiIndex":
        """Pointwise minimum ``k ∧ k'``."""
        return MultiIndex((n, min(e, other[n])) for n, e in self._items)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        """Pointwise difference; raises if any exponent would go negative."""
        modes = set(self) | set(other)
        return MultiIndex((n, self[n] - other[n]) for n in modes)

    @property
    def degree(self) -> int:
        return sum(e for _, e in self._items)

    @property
    def max_mode(self) -> int:
        return self._items[-1][0] if self._items else 0


def _as_mi(x) -> MultiIndex:
    return x if isinstance(x, MultiIndex) else MultiIndex(x)


def rearrangement(a, k, kp) -> tuple[int, ...]:
    """Nonincreasing listing of modes ``n`` repeated ``2 a_n + k_n + k'_n`` times.

    >>> rearrangement({2: 1}, {5: 1}, {5: 2})
    (5, 5, 5, 2, 2)
    """
    a, k, kp = _as_mi(a), _as_mi(k), _as_mi(kp)
    mult: dict[int, int] = {}
    for n, e in a.items():
        mult[n] = mult.get(n, 0) + 2 * e
    for src in (k, kp):
        for n, e in src.items():
            mult[n] = mult.get(n, 0) + e
    out: list[int] = []
    for n in sorted(mult, reverse=True):
        out.extend([n] * mult[n])
    return tuple(out)


def starred_rearrangement(k, kp) -> tuple[int, ...]:
    """Nonincreasing listing of modes ``n`` repeated ``|k_n - k'_n|`` times.

    ``k`` may also be a signed difference map when ``kp`` is empty.
    """
    k = dict(k.items()) if isinstance(k, Mapping) else dict(k)
    kp = dict(kp.items()) if isinstance(kp, Mapping) else dict(kp)
    out: list[int] = []
    for n in sorted(set(k) | set(kp), reverse=True):
        out.extend([n] * abs(k.get(n, 0) - kp.get(n, 0)))
    return tuple(out)


def gap_terms(a, k, kp, theta: float) -> tuple[float, float]:
    """Both sides of the gap inequality for the triple ``(a, k, k')``.

    Returns ``(lhs, rhs)`` with
    ``lhs = sum_n (2a_n + k_n + k'_n) n^theta - 2 n_1^theta`` and
    ``rhs = (2 - 2^theta) sum_{i>=3} n_i^theta``.  The inequality
    ``lhs >= rhs`` holds whenever the rearrangement admits a signed zero sum
    (see :func:`admits_zero_sum`).  For the empty multiset ``n_1^theta`` is 0.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    seq = rearrangement(a, k, kp)
    if not seq:
        return 0.0, 0.0
    powers = [n ** theta for n in seq]
    lhs = math.fsum(powers) - 2.0 * powers[0]
    rhs = (2.0 - 2.0 ** theta) * math.fsum(powers[2:])
    return lhs, rhs


def admits_zero_sum(seq: Iterable[int], max_len: int = 20) -> bool:
    """Whether signs ``mu_i = ±1`` exist with ``sum mu_i n_i = 0``.

    Exact subset-sum over a bitset (equivalent to exhaustive sign search).
    Sequences longer than ``max_len`` are rejected.
    """
    seq = list(seq)
    if len(seq) > max_len:
        raise ValueError(f"sequence of length {len(seq)} exceeds max_len={max_len}")
    total = sum(seq)
    if total % 2:
        return False
    reach = 1
    for n in seq:
        reach |= reach << n
    return bool((reach >> (total // 2)) & 1)
