import json
import subprocess
import sys

import pytest

from nlwkam import ContractionError, cli
from nlwkam.cli import (DEFAULTS, EXIT_CONFIG, EXIT_CONTRACTION, EXIT_INTEGRATOR, EXIT_OK,
                        EXIT_RESONANCE, ConfigError, main, resolve_config)

SMALL = {"maxMode": 4, "maxDegree": 4, "maxSteps": 2,
         "measure": {"L": 2, "S": 2, "samples": 1000, "gammas": [0.05, 0.1]},
         "integrator": {"h": 0.01, "T": 1.0}}


def _run(tmp_path, command, cfg, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out)]), out


def _files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_resolve_config_defaults_and_errors():
    cfg = resolve_config({})
    assert cfg["theta"] == DEFAULTS["theta"] and cfg["measure"]["gammas"] == [0.02, 0.05, 0.1]
    with pytest.raises(ConfigError) as err:
        resolve_config({"theta": 1.5})
    assert err.value.field == "theta"
    with pytest.raises(ConfigError) as err:
        resolve_config({"integrator": {"dt": 0.1}})
    assert err.value.field == "integrator.dt"
    with pytest.raises(ConfigError) as err:
        resolve_config({"rho": 0.02})
    assert err.value.field == "rho"
    with pytest.raises(ConfigError):
        resolve_config({"maxMode": 2.5})


def test_bad_config_exit_code(tmp_path, capsys):
    status, _ = _run(tmp_path, "audit", {"theta": 1.5})
    assert status == EXIT_CONFIG
    assert "theta" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["audit", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


@pytest.mark.parametrize("command, files", [
    ("audit", {"audit.json"}),
    ("measure", {"measure.csv", "measure.json"}),
    ("kam", {"steps.csv", "report.json"}),
    ("verify", {"steps.csv", "trajectory.csv", "spectrum.json", "torus.json"}),
])
def test_commands_succeed_and_are_deterministic(tmp_path, command, files):
    status, out1 = _run(tmp_path, command, SMALL, "a")
    assert status == EXIT_OK
    assert set(_files(out1)) == files | {"manifest.json"}
    status, out2 = _run(tmp_path, command, SMALL, "b")
    assert _files(out1) == _files(out2)


def test_artifacts_embed_config_and_hashes(tmp_path):
    _, out = _run(tmp_path, "measure", SMALL)
    body = json.loads((out / "measure.json").read_text())
    assert body["schema"] == 1 and body["command"] == "measure"
    assert body["config"]["maxMode"] == 4 and len(body["content_hash"]) == 64
    assert (out / "measure.csv").read_text().splitlines()[0] == "gamma,fraction,ci"
    manifest = json.loads((out / "manifest.json").read_text())["results"]
    assert manifest["status"] == 0 and set(manifest["files"]) == {"measure.csv", "measure.json"}


def test_failure_exit_codes(tmp_path, monkeypatch):
    status, out = _run(tmp_path, "kam", {**SMALL, "gamma": 0.99}, "res")
    assert status == EXIT_RESONANCE
    # the truncated NLW contracts for every admissible epsilon, so force a miss
    def miss(*args, **kwargs):
        raise ContractionError("norm targets missed at two consecutive steps")

    monkeypatch.setattr(cli, "run", miss)
    status, out = _run(tmp_path, "kam", SMALL, "con")
    assert status == EXIT_CONTRACTION
    monkeypatch.undo()
    assert json.loads((out / "manifest.json").read_text())["results"]["error"]
    status, _ = _run(tmp_path, "verify", {**SMALL, "integrator": {"h": 0.2, "T": 1.0}}, "int")
    assert status == EXIT_INTEGRATOR


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"theta": 1.5}))
    proc = subprocess.run([sys.executable, "-m", "nlwkam", "audit", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "theta: must be < 1.0" in proc.stderr
