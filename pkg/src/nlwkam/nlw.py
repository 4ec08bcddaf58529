"""Truncated nonlinear wave equation ``u_tt - u_xx + V u + eps u^3 = 0`` on ``[0, pi]``.

In the Dirichlet eigenbasis ``phi_n = sqrt(2/pi) sin(n x)`` with
``q_n = (z_n + zbar_n) / sqrt(2 lambda_n)`` the Hamiltonian becomes

    H = sum lambda_n |z_n|^2 + eps/16 sum_{ijkl} G_ijkl prod (z + zbar)

where ``G_ijkl = (lambda_i lambda_j lambda_k lambda_l)^(-1/2) int phi_i phi_j phi_k phi_l``.
The module also carries the verification side: a symplectic integrator for
``zdot = -i dH/dzbar``, a torus-persistence check and a Floquet probe.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .hampoly import PLAIN, CompiledField, HamiltonianPoly, to_plain
from .resonance import FrequencyModel

__all__ = [
    "NlwConfig",
    "IntegratorError",
    "sine_integral",
    "coupling",
    "build_hamiltonian",
    "initial_torus",
    "Trajectory",
    "flow",
    "torus_residual",
    "TorusReport",
    "linear_stability",
    "StabilityReport",
    "trajectory_csv",
]

# fourth-order symmetric composition of a second-order symmetric step
_CBRT2 = 2.0 ** (1.0 / 3.0)
_YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


class IntegratorError(RuntimeError):
    """The implicit step failed to converge, or the step violates stability."""


@dataclass
class NlwConfig:
    """Truncation and verification parameters.

    ``r > 100 rho / (2 - 2^theta)`` is the domain hypothesis; ``h`` must
    satisfy ``h * max lambda < 0.5``.
    """

    max_mode: int = 6
    epsilon: float = 1e-6
    r: float = 1.0
    theta: float = 0.5
    V: tuple = field(default_factory=tuple)
    h: float = 0.01
    T: float = 100.0
    max_degree: int = 6

    def __post_init__(self):
        if self.max_mode < 1:
            raise ValueError("max_mode must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.max_degree < 4:
            raise ValueError("max_degree must admit the quartic term")
        if not self.V:
            self.V = (0.0,) * self.max_mode
        self.V = tuple(float(v) for v in self.V)
        if len(self.V) != self.max_mode:
            raise ValueError("V must have one entry per mode")

    def check_domain(self, rho: float) -> bool:
        return self.r > 100.0 * rho / (2.0 - 2.0 ** self.theta)

    def check_step(self, lam) -> bool:
        return self.h * float(np.max(lam)) < 0.5


def sine_integral(i: int, j: int, k: int, l: int) -> float:
    """``int_0^pi phi_i phi_j phi_k phi_l dx`` in closed form.

    Writing each sine as a difference of exponentials, only the sign
    patterns ``sigma`` with ``sigma . (i, j, k, l) = 0`` survive integration,
    each contributing ``pi/16 * prod sigma``.
    """
    modes = (i, j, k, l)
    if min(modes) < 1:
        raise ValueError("modes must be >= 1")
    total = 0
    for sig in itertools.product((1, -1), repeat=4):
        if sum(s * m for s, m in zip(sig, modes)) == 0:
            total += sig[0] * sig[1] * sig[2] * sig[3]
    return (math.pi / 16.0) * total * (2.0 / math.pi) ** 2


def coupling(i: int, j: int, k: int, l: int, fm=None) -> float:
    """``G_ijkl = (lambda_i lambda_j lambda_k lambda_l)^(-1/2) int phi_i phi_j phi_k phi_l``.

    ``fm`` defaults to ``V = 0`` (``lambda_n = n``).

    >>> round(coupling(1, 1, 1, 1), 6)
    0.477465
    """
    S = sine_integral(i, j, k, l)
    if S == 0.0:
        return 0.0
    if fm is None:
        lam = [float(m) for m in (i, j, k, l)]
    else:
        lams = fm.lam
        if max(i, j, k, l) > lams.size:
            raise ValueError("mode outside the frequency model")
        lam = [float(lams[m - 1]) for m in (i, j, k, l)]
    return S / math.sqrt(lam[0] * lam[1] * lam[2] * lam[3])


def _expand_quartic(N: int, eps: float, fm) -> dict:
    """``eps/16 sum G_ijkl prod (z + zbar)`` as ``{(k, k'): coeff}`` on dense tuples."""
    out: dict = {}
    for quad in itertools.combinations_with_replacement(range(1, N + 1), 4):
        G = coupling(*quad, fm)
        if G == 0.0:
            continue
        # number of ordered tuples with this multiset
        counts = {m: quad.count(m) for m in set(quad)}
        perms = math.factorial(4)
        for c in counts.values():
            perms //= math.factorial(c)
        w = eps / 16.0 * G * perms
        # prod (z_m + zbar_m)^c_m = prod sum_j binom(c, j) z^j zbar^(c - j)
        modes = sorted(counts)
        for js in itertools.product(*(range(counts[m] + 1) for m in modes)):
            k = [0] * N
            kp = [0] * N
            c = w
            for m, j in zip(modes, js):
                k[m - 1] = j
                kp[m - 1] = counts[m] - j
                c *= math.comb(counts[m], j)
            key = (tuple(k), tuple(kp))
            out[key] = out.get(key, 0.0) + c
    return out


def build_hamiltonian(cfg: NlwConfig, fm=None) -> HamiltonianPoly:
    """Plain polynomial ``sum lambda_n |z_n|^2 + eps/16 sum G prod (z + zbar)``.

    ``fm`` defaults to ``FrequencyModel(cfg.V)``.
    """
    fm = FrequencyModel(cfg.V) if fm is None else fm
    N = cfg.max_mode
    lam = fm.lam
    rows, cs = [], []
    zero = [0] * N
    for n in range(N):
        e = [0] * N
        e[n] = 1
        rows.append(zero + e + e)
        cs.append(lam[n])
    if cfg.epsilon != 0.0:
        for (k, kp), c in _expand_quartic(N, cfg.epsilon, fm).items():
            rows.append(zero + list(k) + list(kp))
            cs.append(c)
    return HamiltonianPoly(np.array(rows), np.array(cs, dtype=complex), N, cfg.max_degree, PLAIN)


def initial_torus(cfg: NlwConfig, scaled: bool = False) -> np.ndarray:
    """Torus actions ``I_n(0)``.

    Working (scaled) coordinates use ``3/4 e^{-2 r n^theta}``; unscaled
    amplitudes carry the extra factor ``eps^2``.
    """
    n = np.arange(1, cfg.max_mode + 1, dtype=float)
    I = 0.75 * np.exp(-2.0 * cfg.r * n ** cfg.theta)
    return I if scaled else cfg.epsilon ** 2 * I


# -- integration ------------------------------------------------------------

class _SplitField:
    """``zdot = -i lambda z + g(z)`` with the diagonal rotation split off.

    The midpoint equation ``z1 = z0 + h f((z0 + z1)/2)`` is rearranged as
    ``z1 = c z0 + h g(m) / (1 + i h lambda/2)`` with the Cayley factor
    ``c = (1 - i h lambda/2) / (1 + i h lambda/2)``, so fixed-point iteration
    only has to contract the (small) nonlinear part.
    """

    def __init__(self, H, I0):
        H = to_plain(H) if H.basis != PLAIN else H
        n = H.n_modes
        a, k, kp = H.block(0), H.block(1), H.block(2)
        diag = (~a.any(1)) & (k.sum(1) == 1) & np.all(k == kp, axis=1)
        lam = np.zeros(n)
        np.add.at(lam, np.argmax(k[diag], axis=1), H.coeffs[diag].real)
        rest = H.select(~diag)
        self.lam = lam
        self.n_modes = n
        self.full = CompiledField(H, I0)
        self.g = CompiledField(rest, I0) if len(rest) else None

    def __call__(self, z):
        return self.full(z)

    def jacobian(self, z):
        return self.full.jacobian(z)

    def value(self, z):
        return self.full.value(z)

    def step(self, z, h, tol, max_iter):
        half = 0.5j * h * self.lam
        c = (1.0 - half) / (1.0 + half)
        lin = c * z
        if self.g is None:
            return lin
        scale = h / (1.0 + half)
        znew = lin + scale * self.g(z)
        for _ in range(max_iter):
            nxt = lin + scale * self.g(0.5 * (z + znew))
            err = np.max(np.abs(nxt - znew))
            znew = nxt
            if err <= tol * max(1e-300, np.max(np.abs(znew))):
                return znew
        raise IntegratorError(f"implicit midpoint did not converge in {max_iter} iterations")


def _field_of(H, I0):
    if isinstance(H, (CompiledField, _SplitField)):
        return H
    return _SplitField(H, I0)


def _midpoint(f, z, h, tol, max_iter):
    if isinstance(f, _SplitField):
        return f.step(z, h, tol, max_iter)
    znew = z + h * f(z)
    for _ in range(max_iter):
        nxt = z + h * f(0.5 * (z + znew))
        err = np.max(np.abs(nxt - znew))
        znew = nxt
        if err <= tol * max(1.0, np.max(np.abs(znew))):
            return znew
    raise IntegratorError(f"implicit midpoint did not converge in {max_iter} iterations")


def _substeps(h: float, order: int):
    if order == 2:
        return (h,)
    if order == 4:
        return tuple(c * h for c in _YOSHIDA)
    raise ValueError("order must be 2 or 4")


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray

    @property
    def actions(self) -> np.ndarray:
        return np.abs(self.z) ** 2

    @property
    def phases(self) -> np.ndarray:
        return np.unwrap(np.angle(self.z), axis=0)


def flow(H, z0, h: float, T: float, I0=None, *, order: int = 4, tol: float = 1e-14,
         max_iter: int = 60, every: int = 1) -> Trajectory:
    """Integrate ``zdot = -i dH/dzbar`` with the implicit midpoint rule.

    ``order=4`` composes three midpoint substeps (triple jump), which keeps
    the scheme symmetric and symplectic.  Negative ``T`` runs backwards.
    Samples every ``every`` steps, plus the endpoint.
    """
    z = np.asarray(z0, dtype=complex).copy()
    I0 = np.zeros(z.size) if I0 is None else I0
    f = _field_of(H, I0)
    steps = int(round(abs(T) / h))
    if steps == 0:
        return Trajectory(np.zeros(1), z[None, :])
    hs = math.copysign(abs(T) / steps, T)
    subs = _substeps(hs, order)
    ts, zs = [0.0], [z.copy()]
    for i in range(1, steps + 1):
        for hh in subs:
            z = _midpoint(f, z, hh, tol, max_iter)
        if i % every == 0 or i == steps:
            ts.append(i * hs)
            zs.append(z.copy())
    return Trajectory(np.array(ts), np.array(zs))


def _torus_point(I0) -> np.ndarray:
    return np.sqrt(np.asarray(I0, dtype=float)).astype(complex)


def _fit_frequencies(traj: Trajectory) -> np.ndarray:
    """Least-squares slope of the unwrapped phase; ``zdot = -i lambda z`` gives ``-slope``."""
    t = traj.t
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, traj.phases, rcond=None)
    return -coef[0]


@dataclass
class TorusReport:
    max_action_drift: float
    freq_error: float
    frequencies: list
    target: list
    h: float
    T: float

    def to_dict(self) -> dict:
        return {"max_action_drift": self.max_action_drift, "freq_error": self.freq_error,
                "frequencies": list(self.frequencies), "target": list(self.target),
                "h": self.h, "T": self.T}


def torus_residual(H, I0, h: float, T: float, target=None, *, order: int = 4,
                   traj: Trajectory | None = None) -> TorusReport:
    """Start on ``|z_n|^2 = I_n(0)`` and measure action drift and frequency error.

    Drift is ``max_n max_t ||z_n(t)|^2 - I_n(0)| / I_n(0)``; the frequency
    error compares the fitted frequencies with ``target`` (default: the
    diagonal quadratic coefficients of ``H``).
    """
    I0 = np.asarray(I0, dtype=float)
    if traj is None:
        traj = flow(H, _torus_point(I0), h, T, I0, order=order)
    drift = float(np.max(np.abs(traj.actions - I0) / I0))
    freqs = _fit_frequencies(traj)
    if target is None:
        target = _diagonal_frequencies(H)
    target = np.asarray(target, dtype=float)
    err = float(np.max(np.abs(freqs - target)))
    return TorusReport(drift, err, freqs.tolist(), target.tolist(), h, T)


def _diagonal_frequencies(H: HamiltonianPoly) -> np.ndarray:
    Hp = to_plain(H) if H.basis != PLAIN else H
    n = Hp.n_modes
    out = np.zeros(n)
    a, k, kp = Hp.block(0), Hp.block(1), Hp.block(2)
    for m in range(n):
        e = np.zeros(n, dtype=np.int64)
        e[m] = 1
        hit = (~a.any(1)) & np.all(k == e, axis=1) & np.all(kp == e, axis=1)
        out[m] = float(Hp.coeffs[hit].real.sum())
    return out


@dataclass
class StabilityReport:
    moduli: list
    max_deviation: float
    period: float
    h: float

    def to_dict(self) -> dict:
        return {"moduli": list(self.moduli), "max_deviation": self.max_deviation,
                "period": self.period, "h": self.h}


def _real_jacobian(f: CompiledField, z) -> np.ndarray:
    A, B = f.jacobian(z)
    return np.block([[(A + B).real, -(A - B).imag], [(A + B).imag, (A - B).real]])


def linear_stability(H, I0, h: float = 0.001, *, order: int = 4, period=None) -> StabilityReport:
    """Floquet moduli of the tangent map along the torus trajectory.

    The tangent map of each midpoint substep is the Cayley transform
    ``(I - h A/2)^-1 (I + h A/2)`` with ``A`` the real ``2n x 2n`` Jacobian
    at the midpoint.  Integrates over one period of the fastest mode.
    """
    I0 = np.asarray(I0, dtype=float)
    f = _field_of(H, I0)
    freqs = np.abs(_diagonal_frequencies(H)) if isinstance(H, HamiltonianPoly) else None
    if period is None:
        if freqs is None or not np.any(freqs):
            raise ValueError("period needed when H has no diagonal frequencies")
        period = 2.0 * math.pi / float(freqs.max())
    steps = max(1, int(math.ceil(period / h)))
    hs = period / steps
    n = f.n_modes
    E = np.eye(2 * n)
    M = np.eye(2 * n)
    z = _torus_point(I0)
    for _ in range(steps):
        for hh in _substeps(hs, order):
            znew = _midpoint(f, z, hh, 1e-14, 60)
            A = _real_jacobian(f, 0.5 * (z + znew))
            M = np.linalg.solve(E - 0.5 * hh * A, (E + 0.5 * hh * A) @ M)
            z = znew
    mod = np.abs(np.linalg.eigvals(M))
    return StabilityReport(sorted(mod.tolist()), float(np.max(np.abs(mod - 1.0))), period, hs)


def trajectory_csv(traj: Trajectory) -> str:
    """CSV text: ``t`` then ``action_n`` and ``phase_n`` per mode."""
    n = traj.z.shape[1]
    head = ["t"] + [f"action_{m}" for m in range(1, n + 1)] + [f"phase_{m}" for m in range(1, n + 1)]
    data = np.column_stack([traj.t, traj.actions, traj.phases])
    lines = [",".join(head)]
    for row in data:
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"
