"""Command line: ``python -m nlwkam {audit,measure,kam,verify} --config C --out DIR``.

Every run is a pure function of the JSON config.  Each JSON artifact embeds
the resolved config and a SHA-256 of its own content; ``manifest.json``
lists the hash of every file written, CSV files included.

Exit codes: 0 ok, 2 config, 3 resonance, 4 contraction, 5 integrator.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .kam import ContractionError, KamSchedule, initial_state, run, steps_csv
from .nlw import (IntegratorError, NlwConfig, build_hamiltonian, initial_torus,
                  linear_stability, flow, torus_residual, trajectory_csv)
from .resonance import (FrequencyModel, ResonanceError, check_condition_1, check_condition_2,
                        enumerate_l, measure_estimate, sample_omega)

__all__ = ["main", "ConfigError", "load_config", "resolve_config", "DEFAULTS",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_RESONANCE", "EXIT_CONTRACTION", "EXIT_INTEGRATOR"]

EXIT_OK, EXIT_CONFIG, EXIT_RESONANCE, EXIT_CONTRACTION, EXIT_INTEGRATOR = 0, 2, 3, 4, 5

SCHEMA = 1

DEFAULTS = {
    "theta": 0.5,
    "r": 1.0,
    "rho": 0.005,
    "gamma": 0.1,
    "epsilon": 1e-6,
    "maxMode": 6,
    "maxDegree": 6,
    "maxSteps": 3,
    "seed": 1,
    "tolerances": {"newton": 1e-12, "residual": 1e-12, "drift": 1e-3},
    "integrator": {"h": 0.01, "T": 100.0},
    "measure": {"L": 3, "S": 3, "samples": 100000, "gammas": [0.02, 0.05, 0.1]},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _num(cfg, key, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    v = cfg[key]
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        raise ConfigError(key, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(key, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(key, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
    return v


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        name = f"{path}{k}"
        if k not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(name, "expected an object")
            out[k] = _merge(base[k], v, name + ".")
        else:
            out[k] = v
    return out


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; raises :class:`ConfigError` naming the bad field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    _num(cfg, "theta", 0.0, 1.0, lo_open=True, hi_open=True)
    _num(cfg, "r", 0.0, lo_open=True)
    _num(cfg, "rho", 0.0, lo_open=True)
    _num(cfg, "gamma", 0.0, 1.0, lo_open=True)
    _num(cfg, "epsilon", 0.0, 1.0, hi_open=True)
    _num(cfg, "maxMode", 1, 64, integer=True)
    _num(cfg, "maxDegree", 4, 12, integer=True)
    _num(cfg, "maxSteps", 0, 20, integer=True)
    _num(cfg, "seed", 0, 2 ** 63 - 1, integer=True)
    if cfg["r"] <= 100.0 * cfg["rho"] / (2.0 - 2.0 ** cfg["theta"]):
        raise ConfigError("rho", "domain hypothesis r > 100 rho / (2 - 2^theta) violated")
    for k in ("newton", "residual", "drift"):
        _num(cfg["tolerances"], k, 0.0, lo_open=True)
    _num(cfg["integrator"], "h", 0.0, lo_open=True)
    _num(cfg["integrator"], "T", 0.0, lo_open=True)
    m = cfg["measure"]
    _num(m, "L", 1, 10, integer=True)
    _num(m, "S", 1, 6, integer=True)
    _num(m, "samples", 1000, integer=True)
    if not isinstance(m["gammas"], list) or not m["gammas"]:
        raise ConfigError("measure.gammas", "expected a non-empty list")
    for g in m["gammas"]:
        if isinstance(g, bool) or not isinstance(g, (int, float)) or not 0 < g <= 1:
            raise ConfigError("measure.gammas", f"entries must lie in (0, 1], got {g!r}")
    # canonical float form so equal configs hash equally
    return json.loads(json.dumps(cfg, sort_keys=True))


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return resolve_config(raw)


# -- serialization -------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class _Writer:
    def __init__(self, out: Path, cfg: dict, command: str):
        self.out = out
        self.cfg = cfg
        self.command = command
        self.files: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, results) -> None:
        results = _clean(results)
        body = {"schema": SCHEMA, "command": self.command, "version": __version__,
                "config": self.cfg, "config_hash": _sha(_canon(self.cfg)), "results": results}
        body["content_hash"] = _sha(_canon(body))
        self.text(name, json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n")

    def text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files[name] = _sha(text)

    def manifest(self, status: int, error: str | None = None) -> None:
        self.json("manifest.json", {"status": status, "error": error, "files": dict(self.files)})


# -- scenarios -------------------------------------------------------------

def _omega(cfg) -> np.ndarray:
    return sample_omega(cfg["seed"], cfg["maxMode"])


def _audit(cfg, omega):
    """Check both conditions for every enumerated ``l``; returns the report dict."""
    m = cfg["measure"]
    lset = enumerate_l(cfg["maxMode"], m["L"], m["S"])
    fails, min1, min2, n2 = [], math.inf, math.inf, 0
    for row in lset:
        l = {j + 1: int(v) for j, v in enumerate(row) if v}
        c1 = check_condition_1(omega, l, cfg["gamma"])
        c2 = check_condition_2(omega, l, cfg["gamma"])
        min1 = min(min1, c1.margin)
        if c2.applicable:
            n2 += 1
            min2 = min(min2, c2.margin)
        if not c1.passed or not c2.passed:
            fails.append({"l": {str(k): v for k, v in l.items()},
                          "condition": 1 if not c1.passed else 2,
                          "margin": c1.margin if not c1.passed else c2.margin})
    fm = FrequencyModel.from_omega(omega)
    return {"omega": omega, "V": list(fm.V), "V_range": [min(fm.V), max(fm.V)],
            "checked": int(lset.shape[0]), "condition2_applicable": n2,
            "min_margin_1": min1, "min_margin_2": min2, "failures": fails[:50],
            "failure_count": len(fails), "passed": not fails}


def _kam(cfg, omega):
    nlw = NlwConfig(max_mode=cfg["maxMode"], epsilon=cfg["epsilon"], r=cfg["r"],
                    theta=cfg["theta"], h=cfg["integrator"]["h"], T=cfg["integrator"]["T"],
                    max_degree=cfg["maxDegree"])
    I0 = initial_torus(nlw, scaled=True)

    def make(V):
        fm = FrequencyModel(V)
        return initial_state(build_hamiltonian(nlw, fm), I0, offsets=fm.omega, V=V)

    sched = KamSchedule(cfg["rho"], cfg["epsilon"], cfg["theta"], float(np.max(omega)))
    result = run(make, sched, cfg["maxSteps"], omega, tol=cfg["tolerances"]["newton"],
                 displacement_samples=100, seed=cfg["seed"], r=cfg["r"])
    return nlw, I0, result


def _cmd_audit(cfg, w: _Writer) -> int:
    rep = _audit(cfg, _omega(cfg))
    w.json("audit.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_RESONANCE


def _cmd_measure(cfg, w: _Writer) -> int:
    m = cfg["measure"]
    reps = measure_estimate(m["gammas"], cfg["maxMode"], m["L"], m["S"], m["samples"],
                            cfg["seed"])
    lines = ["gamma,fraction,ci"]
    for r in reps:
        lines.append(f"{r.gamma!r},{r.fraction!r},{r.ci!r}")
    w.text("measure.csv", "\n".join(lines) + "\n")
    ratios = [r.fraction / r.gamma for r in reps]
    w.json("measure.json", {"reports": [r.to_dict() for r in reps], "ratio_f_over_gamma": ratios})
    return EXIT_OK


def _kam_report(result, audit):
    rep = dict(result.report)
    rep["audit"] = {k: audit[k] for k in ("passed", "checked", "min_margin_1", "min_margin_2")}
    rep["rows"] = result.rows
    return rep


def _cmd_kam(cfg, w: _Writer) -> int:
    omega = _omega(cfg)
    audit = _audit(cfg, omega)
    if not audit["passed"]:
        w.json("report.json", {"error": "omega fails the nonresonance audit", "audit": audit})
        return EXIT_RESONANCE
    _, _, result = _kam(cfg, omega)
    w.text("steps.csv", steps_csv(result.rows))
    w.json("report.json", _kam_report(result, audit))
    return EXIT_OK if result.report["all_accepted"] else EXIT_CONTRACTION


def _cmd_verify(cfg, w: _Writer) -> int:
    omega = _omega(cfg)
    audit = _audit(cfg, omega)
    if not audit["passed"]:
        w.json("torus.json", {"error": "omega fails the nonresonance audit", "audit": audit})
        return EXIT_RESONANCE
    nlw, I0, result = _kam(cfg, omega)
    H = result.normal_form()
    h, T = cfg["integrator"]["h"], cfg["integrator"]["T"]
    if not nlw.check_step(result.frequencies):
        raise IntegratorError(f"h * max lambda = {h * float(np.max(result.frequencies)):.3g} >= 0.5")
    target = np.arange(1, cfg["maxMode"] + 1) + omega
    traj = flow(H, np.sqrt(I0).astype(complex), h, T, I0)
    tor = torus_residual(H, I0, h, T, target, traj=traj)
    half = torus_residual(H, I0, h / 2, T, target)
    tol = cfg["tolerances"]["drift"]
    stab = linear_stability(H, I0, h)
    stab_half = linear_stability(H, I0, h / 2)
    w.text("steps.csv", steps_csv(result.rows))
    w.text("trajectory.csv", trajectory_csv(traj))
    w.json("spectrum.json", {"h": stab.to_dict(), "h_half": stab_half.to_dict()})
    ok = (tor.max_action_drift <= tol and half.max_action_drift <= tol
          and abs(tor.max_action_drift - half.max_action_drift) < 0.1 * tol)
    w.json("torus.json", {"h": tor.to_dict(), "h_half": half.to_dict(), "drift_tolerance": tol,
                          "step_halving_ok": ok, "kam": _kam_report(result, audit)})
    return EXIT_OK if ok else EXIT_INTEGRATOR


COMMANDS = {"audit": _cmd_audit, "measure": _cmd_measure, "kam": _cmd_kam, "verify": _cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlwkam", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("audit", "check both nonresonance conditions for the sampled omega"),
                        ("measure", "Monte Carlo resonant-set fraction versus gamma"),
                        ("kam", "run the KAM iteration with frequency freezing"),
                        ("verify", "run KAM, then integrate the normal form on the torus")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads (results do not depend on it)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    w = _Writer(Path(args.out), cfg, args.command)
    try:
        status = COMMANDS[args.command](cfg, w)
        error = None
    except ResonanceError as exc:
        status, error = EXIT_RESONANCE, str(exc)
    except ContractionError as exc:
        status, error = EXIT_CONTRACTION, str(exc)
    except IntegratorError as exc:
        status, error = EXIT_INTEGRATOR, str(exc)
    w.manifest(status, error)
    if error:
        print(f"{args.command} failed: {error}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
