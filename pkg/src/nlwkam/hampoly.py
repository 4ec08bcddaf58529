"""Sparse Hamiltonian polynomials over monomial keys.

Two bases are supported:

``plain``
    keys ``(a, k, k')`` for ``prod I_n(0)^a_n z_n^k_n zbar_n^k'_n``.
``adapted``
    keys ``(a, b, l, l')`` for ``prod I_n(0)^a_n J_n^b_n z_n^l_n zbar_n^l'_n``
    with ``J_n = |z_n|^2 - I_n(0)`` and ``l_n l'_n = 0``.

Terms are held as a dense integer exponent table (one row per key, blocks of
``n_modes`` columns per multi-index) plus a complex coefficient vector.  Rows
are kept sorted lexicographically and unique, so every reduction runs in a
fixed order.  The degree of a key is ``sum(2a + k + k')`` (plain) or
``sum(2a + 2b + l + l')`` (adapted); it is invariant under basis conversion.
"""

from __future__ import annotations

import json
import math
from collections import namedtuple
from typing import Mapping

import numpy as np

from .multiindex import MultiIndex

__all__ = [
    "PLAIN",
    "ADAPTED",
    "MonomialKey",
    "AdaptedKey",
    "mono",
    "amono",
    "TruncationError",
    "HamiltonianPoly",
    "NormPlus",
    "to_adapted",
    "to_plain",
    "class_split",
    "norm_rho",
    "norm_plus",
    "evaluate",
    "vector_field",
    "CompiledField",
]

PLAIN = "plain"
ADAPTED = "adapted"
_BLOCKS = {PLAIN: 3, ADAPTED: 4}

MonomialKey = namedtuple("MonomialKey", ["a", "k", "kp"])
AdaptedKey = namedtuple("AdaptedKey", ["a", "b", "l", "lp"])


def mono(a=None, k=None, kp=None) -> MonomialKey:
    """Plain key from mode maps, e.g. ``mono(k={1: 1}, kp={1: 1})`` for ``|z_1|^2``."""
    return MonomialKey(MultiIndex(a), MultiIndex(k), MultiIndex(kp))


def amono(a=None, b=None, l=None, lp=None) -> AdaptedKey:
    """Adapted key from mode maps, e.g. ``amono(b={1: 1})`` for ``J_1``."""
    return AdaptedKey(MultiIndex(a), MultiIndex(b), MultiIndex(l), MultiIndex(lp))


class TruncationError(ValueError):
    """A key falls outside the (maxMode, maxDegree) truncation."""


def _binom_table(n: int) -> np.ndarray:
    t = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(i + 1):
            t[i, j] = math.comb(i, j)
    return t


def _group_sum(rows: np.ndarray, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort rows lexicographically, merge duplicates, drop exact zeros."""
    if rows.shape[0] == 0:
        return rows, coeffs
    order = np.lexsort(rows.T[::-1])
    rows = rows[order]
    coeffs = coeffs[order]
    new = np.empty(rows.shape[0], dtype=bool)
    new[0] = True
    new[1:] = np.any(rows[1:] != rows[:-1], axis=1)
    starts = np.flatnonzero(new)
    group = np.cumsum(new) - 1
    n = starts.size
    re = np.bincount(group, weights=coeffs.real, minlength=n)
    im = np.bincount(group, weights=coeffs.imag, minlength=n)
    out = re + 1j * im
    keep = out != 0
    return rows[starts][keep], out[keep]


class _Radix:
    """Mixed-radix int64 codes for exponent rows of a fixed truncation.

    Codes are additive (code(x) + code(y) == code(x + y) whenever the sum is
    in range) and sort in the same order as the rows.
    """

    def __init__(self, basis: str, n_modes: int, max_degree: int):
        half = max_degree // 2 + 1
        full = max_degree + 1
        if basis == PLAIN:
            bases = [half] * n_modes + [full] * (2 * n_modes)
        else:
            bases = [half] * (2 * n_modes) + [full] * (2 * n_modes)
        total = 1
        for b in bases:
            total *= b
        self.fits = total < 2**62
        mult = []
        acc = 1
        for b in reversed(bases):
            mult.append(acc)
            acc *= b
        self.bases = np.array(bases, dtype=np.int64)
        self.mult = np.array(mult[::-1], dtype=np.int64) if self.fits else None

    def encode(self, rows: np.ndarray) -> np.ndarray:
        return rows.astype(np.int64) @ self.mult

    def decode(self, codes: np.ndarray) -> np.ndarray:
        out = np.empty((codes.size, self.bases.size), dtype=np.int64)
        rem = codes.copy()
        for c in range(self.bases.size):
            out[:, c], rem = np.divmod(rem, self.mult[c])
        return out


def _code_sum(codes: np.ndarray, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inv = np.unique(codes, return_inverse=True)
    re = np.bincount(inv, weights=coeffs.real, minlength=uniq.size)
    im = np.bincount(inv, weights=coeffs.imag, minlength=uniq.size)
    out = re + 1j * im
    keep = out != 0
    return uniq[keep], out[keep]


class HamiltonianPoly:
    """Immutable sparse polynomial with a hard (maxMode, maxDegree) truncation.

    Parameters
    ----------
    exps : (T, blocks * n_modes) int array
        Exponent rows.  Plain rows are ``[a | k | k']``, adapted rows are
        ``[a | b | l | l']``; column ``i`` of a block is mode ``i + 1``.
    coeffs : (T,) complex array
    n_modes, max_degree : int
        Truncation.  Keys outside it raise :class:`TruncationError`.
    basis : {"plain", "adapted"}
    dropped : float
        Coefficient mass discarded by truncation in the operation that
        produced this polynomial; sums add it up (diagnostic only).
    """

    __slots__ = ("exps", "coeffs", "n_modes", "max_degree", "basis", "dropped", "_cache")

    def __init__(self, exps, coeffs, n_modes: int, max_degree: int, basis: str = PLAIN,
                 dropped: float = 0.0, *, canonical: bool = False):
        if basis not in _BLOCKS:
            raise ValueError(f"unknown basis {basis!r}")
        width = _BLOCKS[basis] * n_modes
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, width)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if exps.shape[0] != coeffs.shape[0]:
            raise ValueError("exps and coeffs disagree in length")
        if not canonical:
            if np.any(exps < 0):
                raise ValueError("negative exponent")
            exps, coeffs = _group_sum(exps, coeffs)
            if basis == ADAPTED:
                l, lp = exps[:, 2 * n_modes:3 * n_modes], exps[:, 3 * n_modes:]
                if np.any((l > 0) & (lp > 0)):
                    raise ValueError("adapted keys need l_n * l'_n == 0")
            deg = _degrees(exps, basis, n_modes)
            if deg.size and deg.max() > max_degree:
                raise TruncationError(f"degree {deg.max()} exceeds maxDegree={max_degree}")
        exps.setflags(write=False)
        coeffs.setflags(write=False)
        self.exps = exps
        self.coeffs = coeffs
        self.n_modes = int(n_modes)
        self.max_degree = int(max_degree)
        self.basis = basis
        self.dropped = float(dropped)
        self._cache = {}

    # -- construction -----------------------------------------------------
    @classmethod
    def zero(cls, n_modes: int, max_degree: int, basis: str = PLAIN) -> "HamiltonianPoly":
        return cls(np.zeros((0, _BLOCKS[basis] * n_modes), dtype=np.int64), [], n_modes,
                   max_degree, basis, canonical=True)

    @classmethod
    def from_terms(cls, terms, n_modes: int, max_degree: int,
                   basis: str = PLAIN) -> "HamiltonianPoly":
        """Build from ``{key: coeff}`` or an iterable of ``(key, coeff)`` pairs.

        Plain keys are ``(a, k, k')`` and adapted keys ``(a, b, l, l')``; each
        part may be a :class:`MultiIndex` or a plain ``dict``.  Repeated keys
        are summed.
        """
        nb = _BLOCKS[basis]
        rows, cs = [], []
        items = terms.items() if isinstance(terms, Mapping) else terms
        for key, c in items:
            if len(key) != nb:
                raise ValueError(f"{basis} keys have {nb} parts, got {len(key)}")
            row = []
            for part in key:
                mi = part if isinstance(part, MultiIndex) else MultiIndex(part)
                if mi.max_mode > n_modes:
                    raise TruncationError(f"mode {mi.max_mode} exceeds maxMode={n_modes}")
                row.extend(mi.to_dense(n_modes))
            rows.append(row)
            cs.append(c)
        rows = np.array(rows, dtype=np.int64).reshape(-1, nb * n_modes)
        return cls(rows, np.array(cs, dtype=complex), n_modes, max_degree, basis)

    def _new(self, exps, coeffs, dropped: float = 0.0, basis: str | None = None,
             canonical: bool = True) -> "HamiltonianPoly":
        return HamiltonianPoly(exps, coeffs, self.n_modes, self.max_degree,
                               basis or self.basis, dropped, canonical=canonical)

    # -- views --------------------------------------------------------------
    def __len__(self) -> int:
        return self.coeffs.size

    def block(self, i: int) -> np.ndarray:
        n = self.n_modes
        return self.exps[:, i * n:(i + 1) * n]

    @property
    def degrees(self) -> np.ndarray:
        if "deg" not in self._cache:
            self._cache["deg"] = _degrees(self.exps, self.basis, self.n_modes)
        return self._cache["deg"]

    def multiplicities(self) -> np.ndarray:
        """Per-key mode multiplicities ``2a + k + k'`` (adapted: ``2a + 2b + l + l'``)."""
        if self.basis == PLAIN:
            return 2 * self.block(0) + self.block(1) + self.block(2)
        return 2 * self.block(0) + 2 * self.block(1) + self.block(2) + self.block(3)

    def keys(self) -> list:
        make = MonomialKey if self.basis == PLAIN else AdaptedKey
        nb = _BLOCKS[self.basis]
        return [make(*(MultiIndex.from_dense(row[i * self.n_modes:(i + 1) * self.n_modes])
                       for i in range(nb))) for row in self.exps]

    def terms(self) -> dict:
        return dict(zip(self.keys(), self.coeffs.tolist()))

    def coeff(self, key) -> complex:
        nb = _BLOCKS[self.basis]
        row = []
        for part in key:
            mi = part if isinstance(part, MultiIndex) else MultiIndex(part)
            if mi.max_mode > self.n_modes:
                return 0j
            row.extend(mi.to_dense(self.n_modes))
        if len(row) != nb * self.n_modes:
            raise ValueError("key does not match basis")
        hit = np.flatnonzero(np.all(self.exps == np.array(row), axis=1))
        return complex(self.coeffs[hit[0]]) if hit.size else 0j

    def select(self, mask) -> "HamiltonianPoly":
        mask = np.asarray(mask, dtype=bool)
        return self._new(self.exps[mask], self.coeffs[mask])

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def _radix(self) -> _Radix:
        key = ("radix",)
        if key not in self._cache:
            self._cache[key] = _Radix(self.basis, self.n_modes, self.max_degree)
        return self._cache[key]

    def codes(self) -> np.ndarray:
        if "codes" not in self._cache:
            self._cache["codes"] = self._radix().encode(self.exps)
        return self._cache["codes"]

    # -- arithmetic ---------------------------------------------------------
    def _check_compatible(self, other: "HamiltonianPoly") -> None:
        if (self.basis, self.n_modes, self.max_degree) != (other.basis, other.n_modes,
                                                            other.max_degree):
            raise ValueError("polynomials differ in basis or truncation")

    def __add__(self, other):
        if not isinstance(other, HamiltonianPoly):
            if other == 0:
                return self
            return NotImplemented
        self._check_compatible(other)
        rows = np.vstack([self.exps, other.exps])
        cs = np.concatenate([self.coeffs, other.coeffs])
        rows, cs = _group_sum(rows, cs)
        return self._new(rows, cs, self.dropped + other.dropped)

    __radd__ = __add__

    def __neg__(self):
        return self._new(self.exps, -self.coeffs, self.dropped)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, HamiltonianPoly):
            return poly_product(self, other)
        c = complex(other)
        if c == 0:
            return HamiltonianPoly.zero(self.n_modes, self.max_degree, self.basis)
        return self._new(self.exps, self.coeffs * c, self.dropped * abs(c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / complex(other))

    def conjugate_swap(self) -> "HamiltonianPoly":
        """Polynomial with conjugated coefficients and ``k <-> k'`` (``l <-> l'``)."""
        n = self.n_modes
        if self.basis == PLAIN:
            rows = np.hstack([self.block(0), self.block(2), self.block(1)])
        else:
            rows = np.hstack([self.block(0), self.block(1), self.block(3), self.block(2)])
        rows, cs = _group_sum(rows, np.conj(self.coeffs))
        return self._new(rows, cs)

    def is_real_symmetric(self, rtol: float = 1e-12) -> bool:
        other = self.conjugate_swap()
        diff = (self - other).max_abs()
        return diff <= rtol * max(self.max_abs(), 1e-300)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HamiltonianPoly):
            return NotImplemented
        return (self.basis == other.basis and self.n_modes == other.n_modes
                and self.max_degree == other.max_degree
                and np.array_equal(self.exps, other.exps)
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"HamiltonianPoly(basis={self.basis!r}, n_modes={self.n_modes}, "
                f"max_degree={self.max_degree}, terms={len(self)})")

    # -- serialization ----------------------------------------------------
    def to_json_dict(self) -> dict:
        names = ["a", "k", "k'"] if self.basis == PLAIN else ["a", "b", "l", "l'"]
        terms = []
        for row, c in zip(self.exps.tolist(), self.coeffs.tolist()):
            t = {}
            for i, name in enumerate(names):
                blk = row[i * self.n_modes:(i + 1) * self.n_modes]
                t[name] = {str(n + 1): e for n, e in enumerate(blk) if e}
            t["re"] = c.real
            t["im"] = c.imag
            terms.append(t)
        return {"basis": self.basis, "maxMode": self.n_modes,
                "maxDegree": self.max_degree, "terms": terms}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "HamiltonianPoly":
        basis = d["basis"]
        names = ["a", "k", "k'"] if basis == PLAIN else ["a", "b", "l", "l'"]
        terms = {}
        for t in d["terms"]:
            key = tuple(MultiIndex({int(n): e for n, e in t[name].items()}) for name in names)
            terms[key] = complex(t["re"], t["im"])
        return cls.from_terms(terms, d["maxMode"], d["maxDegree"], basis)

    @classmethod
    def from_json(cls, s: str) -> "HamiltonianPoly":
        return cls.from_json_dict(json.loads(s))


def _degrees(exps: np.ndarray, basis: str, n: int) -> np.ndarray:
    if exps.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if basis == PLAIN:
        return 2 * exps[:, :n].sum(1) + exps[:, n:].sum(1)
    return 2 * exps[:, :2 * n].sum(1) + exps[:, 2 * n:].sum(1)


def poly_product(p: HamiltonianPoly, q: HamiltonianPoly) -> HamiltonianPoly:
    """Plain-basis product; keys beyond ``max_degree`` are dropped and tallied."""
    p._check_compatible(q)
    if p.basis != PLAIN:
        raise ValueError("products are defined in the plain basis")
    if len(p) == 0 or len(q) == 0:
        return HamiltonianPoly.zero(p.n_modes, p.max_degree)
    dsum = p.degrees[:, None] + q.degrees[None, :]
    keep = dsum <= p.max_degree
    mag = np.abs(p.coeffs)[:, None] * np.abs(q.coeffs)[None, :]
    dropped = float(mag[~keep].sum())
    i, j = np.nonzero(keep)
    rows = p.exps[i] + q.exps[j]
    rows, cs = _group_sum(rows, p.coeffs[i] * q.coeffs[j])
    return p._new(rows, cs, dropped)


# -- basis conversion --------------------------------------------------------

def to_adapted(H: HamiltonianPoly) -> HamiltonianPoly:
    """Rewrite ``I_n^b = (I_n(0) + J_n)^b`` with ``b = k ∧ k'``."""
    if H.basis != PLAIN:
        raise ValueError("to_adapted expects a plain polynomial")
    n = H.n_modes
    a, k, kp = H.block(0), H.block(1), H.block(2)
    b = np.minimum(k, kp)
    rows = np.hstack([a, np.zeros_like(b), k - b, kp - b])
    coeffs = H.coeffs.copy()
    pending = b.copy()
    binom = _binom_table(H.max_degree)
    for m in range(n):
        beta = pending[:, m]
        top = int(beta.max()) if beta.size else 0
        if top == 0:
            continue
        parts_r, parts_c, parts_p = [], [], []
        for c in range(top + 1):
            sel = beta >= c
            r = rows[sel].copy()
            r[:, n + m] = c
            r[:, m] += beta[sel] - c
            parts_r.append(r)
            parts_c.append(coeffs[sel] * binom[beta[sel], c])
            parts_p.append(pending[sel])
        rows = np.vstack(parts_r)
        coeffs = np.concatenate(parts_c)
        pending = np.vstack(parts_p)
    rows, coeffs = _group_sum(rows, coeffs)
    deg = _degrees(rows, ADAPTED, n)
    if deg.size and deg.max() > H.max_degree:
        raise TruncationError("adapted key exceeds maxDegree")
    return HamiltonianPoly(rows, coeffs, n, H.max_degree, ADAPTED, H.dropped, canonical=True)


def _expand_J(a, b, l, lp, coeffs, binom):
    """Expand ``J^b = (I - I(0))^b`` into plain rows ``[a | k | k']``."""
    n = a.shape[1]
    rows = np.hstack([a, l, lp])
    pending = b.copy()
    for m in range(n):
        beta = pending[:, m]
        top = int(beta.max()) if beta.size else 0
        if top == 0:
            continue
        parts_r, parts_c, parts_p = [], [], []
        for e in range(top + 1):
            sel = beta >= e
            r = rows[sel].copy()
            r[:, n + m] += e
            r[:, 2 * n + m] += e
            r[:, m] += beta[sel] - e
            sign = np.where((beta[sel] - e) % 2, -1.0, 1.0)
            parts_r.append(r)
            parts_c.append(coeffs[sel] * binom[beta[sel], e] * sign)
            parts_p.append(pending[sel])
        rows = np.vstack(parts_r)
        coeffs = np.concatenate(parts_c)
        pending = np.vstack(parts_p)
    return rows, coeffs


def to_plain(H: HamiltonianPoly) -> HamiltonianPoly:
    """Inverse of :func:`to_adapted`: ``J_n = z_n zbar_n - I_n(0)``."""
    if H.basis != ADAPTED:
        raise ValueError("to_plain expects an adapted polynomial")
    binom = _binom_table(H.max_degree)
    rows, coeffs = _expand_J(H.block(0), H.block(1), H.block(2), H.block(3), H.coeffs, binom)
    rows, coeffs = _group_sum(rows, coeffs)
    return HamiltonianPoly(rows, coeffs, H.n_modes, H.max_degree, PLAIN, H.dropped,
                           canonical=True)


def class_split(H: HamiltonianPoly) -> tuple[HamiltonianPoly, HamiltonianPoly, HamiltonianPoly]:
    """Split an adapted polynomial into ``(R0, R1, R2)`` by ``sum(b)`` = 0, 1, >= 2."""
    if H.basis != ADAPTED:
        raise ValueError("class_split expects an adapted polynomial")
    cls = H.block(1).sum(1)
    return H.select(cls == 0), H.select(cls == 1), H.select(cls >= 2)


# -- norms ------------------------------------------------------------------

def _log_weights(mult: np.ndarray, coeffs: np.ndarray, rho: float, theta: float,
                 extra_log: np.ndarray | float = 0.0,
                 extra_exp: np.ndarray | float = 0.0) -> np.ndarray:
    """``log`` of ``prod n^(mult/2) |B| e^{-rho(sum mult n^theta + extra_exp - 2 n_1^theta)}``."""
    n = mult.shape[1]
    modes = np.arange(1, n + 1, dtype=float)
    logn = np.log(modes)
    npow = modes ** theta
    present = mult > 0
    n1 = np.where(present.any(1), n - np.argmax(present[:, ::-1], axis=1), 0)
    n1pow = np.where(n1 > 0, n1.astype(float) ** theta, 0.0)
    expo = mult @ npow + extra_exp - 2.0 * n1pow
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(coeffs))
    return 0.5 * (mult @ logn) + logc + extra_log - rho * expo


def norm_rho(H: HamiltonianPoly, rho: float, theta: float) -> float:
    """Weighted sup norm of a plain polynomial (0 for the zero polynomial)."""
    if H.basis != PLAIN:
        raise ValueError("norm_rho expects a plain polynomial")
    if len(H) == 0:
        return 0.0
    lw = _log_weights(H.multiplicities(), H.coeffs, rho, theta)
    return float(np.exp(lw.max()))


NormPlus = namedtuple("NormPlus", ["r0", "r1", "r2", "max"])


def _class2_inner(H2: HamiltonianPoly):
    """Canonical ``J_{m1} J_{m2} * (plain monomial)`` form of class >= 2 terms.

    ``m1 <= m2`` are the two smallest modes in the J multiset; remaining J
    factors are expanded into plain ``I`` and ``I(0)`` powers.  Returns
    ``(m1, m2, inner_rows, coeffs)`` with identical triples merged.
    """
    n = H2.n_modes
    b = H2.block(1).copy()
    first = np.argmax(b > 0, axis=1)
    b[np.arange(b.shape[0]), first] -= 1
    second = np.argmax(b > 0, axis=1)
    b[np.arange(b.shape[0]), second] -= 1
    binom = _binom_table(H2.max_degree)
    tag = np.column_stack([first + 1, second + 1])
    # carry the (m1, m2) tag through the expansion as extra "a" columns
    a_ext = np.hstack([H2.block(0), tag])
    zeros2 = np.zeros((b.shape[0], 2), dtype=np.int64)
    rows, cs = _expand_J(a_ext, np.hstack([b, zeros2]), np.hstack([H2.block(2), zeros2]),
                         np.hstack([H2.block(3), zeros2]), H2.coeffs, binom)
    rows, cs = _group_sum(rows, cs)
    w = n + 2
    a_part = rows[:, :w]
    m1, m2 = a_part[:, n], a_part[:, n + 1]
    inner = np.hstack([a_part[:, :n], rows[:, w:w + n], rows[:, 2 * w:2 * w + n]])
    return m1, m2, inner, cs


def norm_plus(H: HamiltonianPoly, rho: float, theta: float) -> NormPlus:
    """Class-wise weighted norms of an adapted polynomial and their max.

    Class-1 terms ``J_m M`` carry weight ``m |B|`` and exponent surcharge
    ``2 m^theta``; class-2 terms ``J_m1 J_m2 M`` carry ``m1 m2 |B|`` and
    ``2 m1^theta + 2 m2^theta``.  Keys with three or more J factors are put in
    canonical class-2 form first (see :func:`_class2_inner`).
    """
    if H.basis != ADAPTED:
        raise ValueError("norm_plus expects an adapted polynomial")
    n = H.n_modes
    R0, R1, R2 = class_split(H)
    out = []
    if len(R0):
        mult = 2 * R0.block(0) + R0.block(2) + R0.block(3)
        out.append(float(np.exp(_log_weights(mult, R0.coeffs, rho, theta).max())))
    else:
        out.append(0.0)
    if len(R1):
        m = np.argmax(R1.block(1), axis=1) + 1
        mult = 2 * R1.block(0) + R1.block(2) + R1.block(3)
        lw = _log_weights(mult, R1.coeffs, rho, theta, np.log(m), 2.0 * m ** theta)
        out.append(float(np.exp(lw.max())))
    else:
        out.append(0.0)
    if len(R2):
        m1, m2, inner, cs = _class2_inner(R2)
        if cs.size:
            mult = 2 * inner[:, :n] + inner[:, n:2 * n] + inner[:, 2 * n:]
            mf1, mf2 = m1.astype(float), m2.astype(float)
            lw = _log_weights(mult, cs, rho, theta, np.log(mf1 * mf2),
                              2.0 * mf1 ** theta + 2.0 * mf2 ** theta)
            out.append(float(np.exp(lw.max())))
        else:
            out.append(0.0)
    else:
        out.append(0.0)
    return NormPlus(out[0], out[1], out[2], max(out))


# -- evaluation -------------------------------------------------------------

def _state_arrays(H: HamiltonianPoly, z, I0):
    z = np.asarray(z, dtype=complex)
    I0 = np.asarray(I0, dtype=float)
    if z.shape[-1] < H.n_modes or I0.shape[-1] < H.n_modes:
        raise ValueError(f"state must cover modes 1..{H.n_modes}")
    return z[..., :H.n_modes], I0[..., :H.n_modes]


def _powers(x: np.ndarray, top: int) -> np.ndarray:
    out = np.ones((top + 1,) + x.shape, dtype=x.dtype)
    for e in range(1, top + 1):
        out[e] = out[e - 1] * x
    return out


def _monomials(exps_blocks, bases, top):
    """Evaluate ``prod_blocks prod_n base_n^exp`` for each row."""
    T = exps_blocks[0].shape[0]
    n = exps_blocks[0].shape[1]
    cols = np.arange(n)
    val = np.ones(T, dtype=complex)
    for e, base in zip(exps_blocks, bases):
        P = _powers(base, top)
        val = val * np.prod(P[e, cols[None, :]], axis=1)
    return val


def evaluate(H: HamiltonianPoly, z, I0) -> complex:
    """Value of ``H`` at the state ``z`` given torus actions ``I0``."""
    z, I0 = _state_arrays(H, z, I0)
    if len(H) == 0:
        return 0j
    top = H.max_degree
    if H.basis == PLAIN:
        blocks = [H.block(0), H.block(1), H.block(2)]
        bases = [I0.astype(complex), z, np.conj(z)]
    else:
        J = (np.abs(z) ** 2 - I0).astype(complex)
        blocks = [H.block(0), H.block(1), H.block(2), H.block(3)]
        bases = [I0.astype(complex), J, z, np.conj(z)]
    return complex(np.dot(H.coeffs, _monomials(blocks, bases, top)))


class CompiledField:
    """Vector field ``zdot_n = -i dH/dzbar_n`` with ``I(0)`` substituted.

    Precomputes derivative tables once, so repeated evaluation (integrators,
    Jacobians) costs a few vectorized gathers per call.
    """

    def __init__(self, H: HamiltonianPoly, I0):
        if H.basis == ADAPTED:
            H = to_plain(H)
        n = H.n_modes
        self.n_modes = n
        I0 = np.asarray(I0, dtype=float)[:n]
        self.I0 = I0
        a, k, kp = H.block(0), H.block(1), H.block(2)
        base = H.coeffs * np.prod(I0[None, :] ** a, axis=1)
        rows, cs = _group_sum(np.hstack([k, kp]), base)
        self.k, self.kp, self.c = rows[:, :n], rows[:, n:], cs
        self.top = int(rows.max()) if rows.size else 0
        # first derivatives wrt zbar_n
        tgt, dk, dkp, dc = [], [], [], []
        for m in range(n):
            sel = self.kp[:, m] > 0
            r = self.kp[sel].copy()
            r[:, m] -= 1
            tgt.append(np.full(sel.sum(), m))
            dk.append(self.k[sel])
            dkp.append(r)
            dc.append(-1j * self.c[sel] * self.kp[sel, m])
        self._f = (np.concatenate(tgt), np.vstack(dk), np.vstack(dkp), np.concatenate(dc))
        # second derivatives: d zdot_n / d z_m and d zdot_n / d zbar_m
        ta, ak, akp, ac = [], [], [], []
        tb, bk, bkp, bc = [], [], [], []
        f_t, f_k, f_kp, f_c = self._f
        for m in range(n):
            sel = f_k[:, m] > 0
            r = f_k[sel].copy()
            r[:, m] -= 1
            ta.append(f_t[sel] * n + m)
            ak.append(r)
            akp.append(f_kp[sel])
            ac.append(f_c[sel] * f_k[sel, m])
            sel = f_kp[:, m] > 0
            r = f_kp[sel].copy()
            r[:, m] -= 1
            tb.append(f_t[sel] * n + m)
            bk.append(f_k[sel])
            bkp.append(r)
            bc.append(f_c[sel] * f_kp[sel, m])
        self._A = (np.concatenate(ta), np.vstack(ak), np.vstack(akp), np.concatenate(ac))
        self._B = (np.concatenate(tb), np.vstack(bk), np.vstack(bkp), np.concatenate(bc))

    def _eval(self, table, z, size):
        tgt, k, kp, c = table
        if c.size == 0:
            return np.zeros(size, dtype=complex)
        n = self.n_modes
        cols = np.arange(n)
        P = _powers(z, self.top)
        Q = np.conj(P)
        mono = np.prod(P[k, cols[None, :]], axis=1) * np.prod(Q[kp, cols[None, :]], axis=1)
        v = c * mono
        re = np.bincount(tgt, weights=v.real, minlength=size)
        im = np.bincount(tgt, weights=v.imag, minlength=size)
        return re + 1j * im

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self._eval(self._f, z, self.n_modes)

    def jacobian(self, z) -> tuple[np.ndarray, np.ndarray]:
        """``(d zdot/dz, d zdot/dzbar)`` as two ``n x n`` complex matrices."""
        z = np.asarray(z, dtype=complex)
        n = self.n_modes
        A = self._eval(self._A, z, n * n).reshape(n, n)
        B = self._eval(self._B, z, n * n).reshape(n, n)
        return A, B

    def value(self, z) -> complex:
        z = np.asarray(z, dtype=complex)
        if self.c.size == 0:
            return 0j
        n = self.n_modes
        cols = np.arange(n)
        P = _powers(z, self.top)
        Q = np.conj(P)
        mono = np.prod(P[self.k, cols[None, :]], axis=1) * np.prod(Q[self.kp, cols[None, :]], axis=1)
        return complex(np.dot(self.c, mono))


def vector_field(H: HamiltonianPoly, z, I0) -> np.ndarray:
    """``zdot_n = -i dH/dzbar_n`` at the state ``z``."""
    z, I0 = _state_arrays(H, z, I0)
    return CompiledField(H, I0)(z)
