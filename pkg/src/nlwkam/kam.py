"""Newton-type KAM iteration with frequency freezing.

A state is ``H_s = N_s + c_s + R_s`` with ``N_s = sum (n + o_n) |z_n|^2`` kept as
the offset array ``o``, the constant ``c_s`` kept in a ledger and ``R_s`` a
plain polynomial.  One step splits ``R_s`` by the number of ``J`` factors,
solves the homological equations, applies the time-one map of ``F`` as a
Lie series and moves the averages into ``N`` and the ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .hampoly import (ADAPTED, PLAIN, CompiledField, HamiltonianPoly, class_split, norm_plus,
                      to_adapted, to_plain)
from .homological import averages, solve
from .poisson import lie_compose

__all__ = [
    "KamSchedule",
    "KamState",
    "ContractionError",
    "initial_state",
    "normal_form_poly",
    "kam_step",
    "frequency_shift",
    "freeze_parameters",
    "FreezeInfo",
    "phi_displacement",
    "run",
    "KamResult",
    "STEP_COLUMNS",
    "steps_csv",
]

STEP_COLUMNS = ("step", "rho_s", "B_s", "norm_r0", "norm_r1", "norm_r2", "max_shift",
                "v_drift", "dropped_mass")


class ContractionError(RuntimeError):
    """Norm targets missed twice in a row, or the freezing map is not dominant."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class KamSchedule:
    """Iteration parameters, indexed from ``s = 0``.

    ``delta_s = rho0 / (s+1)^2``, ``rho_{s+1} = rho_s + 3 delta_s``,
    ``eps_s = eps0^(1.5^s)``, ``d_{s+1} = d_s + 1/(pi^2 (s+1)^2)`` and
    ``B_s = (s+1)^2 ln(1/eps_{s+1}) / ((2 - 2^theta) rho0)``.
    """

    rho0: float
    eps0: float
    theta: float = 0.5
    omega_sup: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if not 0.0 <= self.eps0 < 1.0:
            raise ValueError("eps0 must lie in [0, 1)")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")

    def delta(self, s: int) -> float:
        return self.rho0 / (s + 1) ** 2

    def rho(self, s: int) -> float:
        return self.rho0 + 3.0 * math.fsum(self.delta(j) for j in range(s))

    def eps(self, s: int) -> float:
        return self.eps0 ** (1.5 ** s)

    def d(self, s: int) -> float:
        return math.fsum(1.0 / (math.pi ** 2 * (j + 1) ** 2) for j in range(s))

    def B(self, s: int) -> float:
        e = self.eps(s + 1)
        if e <= 0.0:
            return math.inf
        return (s + 1) ** 2 * math.log(1.0 / e) / ((2.0 - 2.0 ** self.theta) * self.rho0)

    def lam(self, s: int) -> float:
        e = self.eps(s + 1)
        if e <= 0.0:
            return 0.0
        return math.exp(-self.C * math.log(1.0 / e) ** (4.0 / (self.theta + 4.0)))

    def eta(self, s: int) -> float:
        out = 1.1 - self.omega_sup
        for j in range(s):
            out *= self.lam(j) / 20.0
        return out

    def targets(self, s: int) -> tuple[float, float, float]:
        """Norm bounds for ``(R0, R1, R2)`` at step ``s``."""
        e = self.eps(s)
        return e, e ** 0.6, (1.0 + self.d(s)) * self.eps0


@dataclass
class KamState:
    step: int
    offsets: np.ndarray
    R: HamiltonianPoly
    I0: np.ndarray
    constant: float = 0.0
    V: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.R.n_modes

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1) + self.offsets

    @property
    def Vtilde(self) -> np.ndarray:
        """``V~`` with ``sqrt(n^2 + V~_n) = n + o_n``."""
        n = np.arange(1, self.n_modes + 1)
        return 2 * n * self.offsets + self.offsets ** 2


def normal_form_poly(offsets, n_modes: int, max_degree: int) -> HamiltonianPoly:
    """``sum (n + o_n) z_n zbar_n`` as a plain polynomial."""
    rows = np.zeros((n_modes, 3 * n_modes), dtype=np.int64)
    for m in range(n_modes):
        rows[m, n_modes + m] = 1
        rows[m, 2 * n_modes + m] = 1
    lam = np.arange(1, n_modes + 1) + np.asarray(offsets, dtype=float)
    return HamiltonianPoly(rows, lam.astype(complex), n_modes, max_degree, PLAIN, canonical=True)


def initial_state(H0: HamiltonianPoly, I0, offsets=None, V=None) -> KamState:
    """Split ``H0`` into its diagonal quadratic part and the remainder.

    ``offsets`` (``lambda_n - n``) may be given exactly; otherwise they are
    read off the diagonal coefficients.
    """
    if H0.basis != PLAIN:
        H0 = to_plain(H0)
    n = H0.n_modes
    a, k, kp = H0.block(0), H0.block(1), H0.block(2)
    diag = (~a.any(1)) & (k.sum(1) == 1) & np.all(k == kp, axis=1)
    lam = np.zeros(n)
    idx = np.argmax(k[diag], axis=1)
    np.add.at(lam, idx, H0.coeffs[diag].real)
    if offsets is None:
        offsets = lam - np.arange(1, n + 1)
    R = H0.select(~diag)
    return KamState(0, np.asarray(offsets, dtype=float).copy(), R,
                    np.asarray(I0, dtype=float), 0.0,
                    None if V is None else np.asarray(V, dtype=float))


def frequency_shift(R1_avg: HamiltonianPoly, I0, n: int | None = None):
    """Per-mode shift ``sum_a B^(n)_{a00} prod I_m(0)^a_m`` of an averaged class-1 polynomial.

    Returns the full array, or the entry for mode ``n`` when given.
    """
    if R1_avg.basis != ADAPTED:
        raise ValueError("frequency_shift expects an adapted polynomial")
    if len(R1_avg):
        if np.any(R1_avg.block(1).sum(1) != 1) or R1_avg.block(2).any() or R1_avg.block(3).any():
            raise ValueError("input is not an averaged class-1 polynomial")
    I0 = np.asarray(I0, dtype=float)[:R1_avg.n_modes]
    out = np.zeros(R1_avg.n_modes)
    if len(R1_avg):
        m = np.argmax(R1_avg.block(1), axis=1)
        vals = (R1_avg.coeffs * np.prod(I0[None, :] ** R1_avg.block(0), axis=1)).real
        np.add.at(out, m, vals)
    return out if n is None else float(out[n - 1])


def _constant_part(A: HamiltonianPoly, I0) -> float:
    """Value at ``J = 0``, ``z = 0`` of an adapted class-0/1 polynomial (averaged)."""
    if not len(A):
        return 0.0
    keep = ~A.block(1).any(1)
    vals = A.coeffs[keep] * np.prod(np.asarray(I0)[None, :] ** A.block(0)[keep], axis=1)
    return float(vals.real.sum())


def _split(state: KamState):
    A = to_adapted(state.R)
    R0, R1, R2 = class_split(A)
    avg0, avg1, R0n, R1n = averages(R0, R1)
    return R0, R1, R2, avg0, avg1, R0n, R1n


def kam_step(state: KamState, sched: KamSchedule, *, lie_order: int = 2,
             displacement_samples: int = 0, seed: int = 0) -> KamState:
    """One iteration ``H_s -> H_s o X_F^1 = N_{s+1} + c_{s+1} + R_{s+1}``.

    Norms of the new remainder are measured at ``rho_{s+1}`` and compared
    with the schedule targets; ``diagnostics["accepted"]`` records the
    outcome (the caller decides what a miss means).  With
    ``displacement_samples > 0`` the time-one map is also applied
    numerically to that many states to measure ``||Phi - id||``.
    """
    s = state.step
    n, D = state.R.n_modes, state.R.max_degree
    if len(state.R) == 0:
        diag = _diagnostics(sched, s + 1, 0.0, 0.0, 0.0, 0.0, 0.0, True, {})
        diag["phi_displacement"] = 0.0
        return replace(state, step=s + 1, diagnostics=diag)
    R0, R1, R2, avg0, avg1, R0n, R1n = _split(state)
    sol = solve(state.offsets, R0n, R1n, sched.B(s), sched.theta)
    F = to_plain(sol.F0 + sol.F1)
    Np = normal_form_poly(state.offsets, n, D)
    tol = 1e-2 * sched.eps(s + 1)
    composed, info = lie_compose(Np + state.R, F, lie_order, tol=tol, info=True)
    Rnew = composed - Np - to_plain(avg0) - to_plain(avg1)
    shift = frequency_shift(avg1, state.I0)
    const = state.constant + _constant_part(avg0, state.I0) + _constant_part(
        to_adapted(to_plain(avg1)), state.I0)
    norms = norm_plus(to_adapted(Rnew), sched.rho(s + 1), sched.theta)
    t0, t1, t2 = sched.targets(s + 1)
    accepted = norms.r0 <= t0 and norms.r1 <= t1 and norms.r2 <= t2
    diag = _diagnostics(sched, s + 1, norms.r0, norms.r1, norms.r2,
                        float(np.max(np.abs(shift))), info.dropped, accepted, sol.cases)
    diag["lie_order"] = info.order
    diag["deferred_keys"] = len(sol.deferred)
    if displacement_samples:
        diag["phi_displacement"] = phi_displacement(F, state.I0, displacement_samples,
                                                    seed=seed + s)
    return KamState(s + 1, state.offsets + shift, Rnew, state.I0, const, state.V, diag)


def _diagnostics(sched, s, r0, r1, r2, max_shift, dropped, accepted, cases) -> dict:
    t0, t1, t2 = sched.targets(s)
    return {"step": s, "rho_s": sched.rho(s), "B_s": sched.B(s - 1) if s else sched.B(0),
            "norm_r0": r0, "norm_r1": r1, "norm_r2": r2, "target_r0": t0,
            "target_r1": t1, "target_r2": t2, "max_shift": max_shift,
            "dropped_mass": dropped, "accepted": bool(accepted), "cases": dict(cases)}


def phi_displacement(F: HamiltonianPoly, I0, samples: int = 100, r: float = 1.0,
                     theta: float = 0.5, seed: int = 0, spread: float = 0.5) -> float:
    """Sup over sampled states of ``||X_F^1(z) - z||`` with weights ``e^{r n^theta}``.

    States have ``|z_n|^2 = I_n(0)(1 + u)``, ``u ~ U[-spread, spread]``, and
    uniform phases.  The flow is integrated with an adaptive Runge-Kutta
    method at tight tolerance.
    """
    I0 = np.asarray(I0, dtype=float)
    f = CompiledField(F, I0)
    n = f.n_modes
    w = np.exp(r * np.arange(1, n + 1) ** theta)
    rng = np.random.default_rng(seed)

    def rhs(_t, y):
        dz = f(y[:n] + 1j * y[n:])
        return np.concatenate([dz.real, dz.imag])

    worst = 0.0
    for _ in range(samples):
        act = I0[:n] * (1.0 + rng.uniform(-spread, spread, n))
        z0 = np.sqrt(act) * np.exp(1j * rng.uniform(0, 2 * np.pi, n))
        y0 = np.concatenate([z0.real, z0.imag])
        sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=1e-12, atol=1e-15)
        z1 = sol.y[:n, -1] + 1j * sol.y[n:, -1]
        worst = max(worst, float(np.max(np.abs(z1 - z0) * w)))
    return worst


@dataclass
class FreezeInfo:
    iterations: int
    residual: float
    jacobian_defect: float


def freeze_parameters(Vtilde: Callable[[np.ndarray], np.ndarray], omega, tol: float = 1e-12,
                      V0=None, h: float = 1e-7, max_iter: int = 20):
    """Solve ``sqrt(n^2 + V~_n(V)) = n + omega_n`` for ``V``.

    Chord-Newton with a forward-difference Jacobian (step ``h``), which must
    satisfy ``||dV~/dV - I||_inf < 1/2``.  Returns ``(V*, FreezeInfo)``.

    Raises
    ------
    ContractionError
        If the Jacobian is not dominated by the identity, or Newton fails.
    """
    omega = np.asarray(omega, dtype=float)
    n = np.arange(1, omega.size + 1)
    target = 2 * n * omega + omega ** 2
    V = target.copy() if V0 is None else np.asarray(V0, dtype=float).copy()

    def resid(Vt):
        # cancellation-free sqrt(n^2 + V~) - n - omega
        return Vt / (np.sqrt(n * n + Vt) + n) - omega

    Vt = np.asarray(Vtilde(V), dtype=float)
    J = np.empty((V.size, V.size))
    for j in range(V.size):
        step = h * max(1.0, abs(V[j]))
        Vp = V.copy()
        Vp[j] += step
        J[:, j] = (np.asarray(Vtilde(Vp), dtype=float) - Vt) / step
    defect = float(np.max(np.abs(J - np.eye(V.size)).sum(1)))
    if defect >= 0.5:
        raise ContractionError(f"freezing map not dominant: ||dV~/dV - I|| = {defect:.3g}")
    res = float(np.max(np.abs(resid(Vt))))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ContractionError(f"freezing did not converge (residual {res:.3g})")
        V = V - np.linalg.solve(J, Vt - target)
        Vt = np.asarray(Vtilde(V), dtype=float)
        res = float(np.max(np.abs(resid(Vt))))
        it += 1
    return V, FreezeInfo(it, res, defect)


@dataclass
class KamResult:
    state: KamState
    rows: list
    V_star: np.ndarray | None
    report: dict

    @property
    def frequencies(self) -> np.ndarray:
        return self.state.frequencies

    @property
    def R2(self) -> HamiltonianPoly:
        """Class >= 2 part of the final remainder (adapted)."""
        if len(self.state.R) == 0:
            return HamiltonianPoly.zero(self.state.R.n_modes, self.state.R.max_degree, ADAPTED)
        return class_split(to_adapted(self.state.R))[2]

    def normal_form(self) -> HamiltonianPoly:
        """``N_* + R2_*`` as a plain polynomial (the torus-verification system)."""
        st = self.state
        return normal_form_poly(st.offsets, st.R.n_modes, st.R.max_degree) + to_plain(self.R2)


def _advance(state: KamState, sched: KamSchedule, steps: int, **kw) -> KamState:
    for _ in range(steps):
        state = kam_step(state, sched, **kw)
    return state


def _shifted_Vtilde(make, sched, s: int):
    """``V -> V~_{s+1}(V)``: run ``s`` steps from ``make(V)`` and add the next shift."""

    def Vt(V):
        st = _advance(make(V), sched, s)
        if len(st.R):
            avg1 = _split(st)[4]
            st = replace(st, offsets=st.offsets + frequency_shift(avg1, st.I0))
        return st.Vtilde

    return Vt


def run(initial, sched: KamSchedule, max_steps: int, omega=None, *, tol: float = 1e-12,
        displacement_samples: int = 0, seed: int = 0, r: float = 1.0) -> KamResult:
    """Outer KAM loop.

    ``initial`` is either a :class:`KamState` (no freezing) or a callable
    ``V -> KamState``.  In the latter case ``omega`` is the prescribed offset
    vector, and before step ``s+1`` the potential is frozen so that
    ``N_{s+1}`` has frequencies ``n + omega_n``.

    Stops after ``max_steps``, when the remainder vanishes, or when
    ``||R0||`` underflows.  Two consecutive norm-target misses raise
    :class:`ContractionError`.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    freezing = callable(initial) and not isinstance(initial, KamState)
    if freezing and omega is None:
        raise ValueError("omega is required when freezing")
    omega = None if omega is None else np.asarray(omega, dtype=float)
    if freezing:
        nn = np.arange(1, omega.size + 1)
        V_prev = 2 * nn * omega + omega ** 2
        V0 = V_prev.copy()
        state = initial(V_prev)
    else:
        V_prev = V0 = None
        state = initial
    rows, misses, drift_total = [], 0, 0.0
    freeze_log = []
    for s in range(max_steps):
        if len(state.R) == 0:
            break
        if freezing:
            V_star, finfo = freeze_parameters(_shifted_Vtilde(initial, sched, s), omega, tol,
                                              V0=V_prev)
            v_drift = float(np.max(np.abs(V_star - V_prev)))
            drift_total += v_drift
            state = _advance(initial(V_star), sched, s)
            freeze_log.append({"step": s + 1, "iterations": finfo.iterations,
                               "residual": finfo.residual,
                               "jacobian_defect": finfo.jacobian_defect, "v_drift": v_drift,
                               "V_star": V_star.tolist()})
            V_prev = V_star
        else:
            v_drift = 0.0
        state = kam_step(state, sched, displacement_samples=displacement_samples, seed=seed)
        diag = state.diagnostics
        if freezing:
            nn = np.arange(1, omega.size + 1)
            Vt = state.Vtilde
            diag["freq_residual"] = float(np.max(np.abs(Vt / (np.sqrt(nn * nn + Vt) + nn) - omega)))
            freeze_log[-1]["freq_residual"] = diag["freq_residual"]
        diag["v_drift"] = v_drift
        rows.append(dict(diag))
        misses = 0 if diag["accepted"] else misses + 1
        if misses >= 2:
            raise ContractionError("norm targets missed at two consecutive steps", rows)
        if diag["norm_r0"] < 1e-300:
            break
    result = KamResult(state, rows, V_prev, {})
    R2n = norm_plus(result.R2, 10 * sched.rho0, sched.theta).max if len(result.R2) else 0.0
    result.report = {
        "steps": len(rows),
        "frequencies": state.frequencies.tolist(),
        "offsets": state.offsets.tolist(),
        "constant": state.constant,
        "norm_r2_final": R2n,
        "norm_r2_bound": sched.eps0 ** 0.4,
        "V_star": None if V_prev is None else V_prev.tolist(),
        "V_star_range": None if V_prev is None else [float(V_prev.min()), float(V_prev.max())],
        "V_drift_total": drift_total,
        "V_drift_from_initial": None if V0 is None else float(np.max(np.abs(V_prev - V0))),
        "freeze": freeze_log,
        "phi_displacement": [r.get("phi_displacement") for r in rows],
        "all_accepted": all(r["accepted"] for r in rows),
    }
    return result


def steps_csv(rows) -> str:
    """Per-step CSV with the fixed column set :data:`STEP_COLUMNS`."""
    lines = [",".join(STEP_COLUMNS)]
    for r in rows:
        vals = []
        for c in STEP_COLUMNS:
            v = r.get(c, 0.0)
            vals.append(str(int(v)) if c == "step" else repr(float(v)))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
