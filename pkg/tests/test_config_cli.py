import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cornerwaves import cli, config
from cornerwaves.errors import ConfigError, SolverError

SHORT = """
[time]
t_end = 0.01
[output]
high_energy_every = 4
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_validate():
    cfg = config.RunConfig().validate()
    assert cfg.discretization.contact_mode == "angle"
    assert len(cfg.hash) == 16


def test_hash_tracks_content(tmp_path):
    a = config.load(_write(tmp_path, SHORT))
    b = config.load(_write(tmp_path, SHORT, "copy.toml"))
    c = config.load(_write(tmp_path, SHORT.replace("0.01", "0.02"), "other.toml"))
    assert a.hash == b.hash != c.hash


def test_json_and_toml_agree(tmp_path):
    a = config.load(_write(tmp_path, SHORT))
    b = config.load(_write(tmp_path, json.dumps({"time": {"t_end": 0.01},
                                                 "output": {"high_energy_every": 4}}), "r.json"))
    assert a.hash == b.hash


@pytest.mark.parametrize("text", ["[nonsense]\na = 1", "[time]\nbogus = 1", "[time]\nt_end = -1",
                                  "[physics]\nomega_s = 0.6", "[discretization]\nn_markers = 3",
                                  "[discretization]\ncontact_mode = 'sticky'", "[time\n"])
def test_bad_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        config.load(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "absent.toml")


def test_simulate_writes_outputs(tmp_path):
    cfgp = _write(tmp_path, SHORT)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(cfgp), "--out-dir", str(out)]) == 0
    text = (out / "energy.csv").read_text().splitlines()
    head = [ln for ln in text if ln.startswith("#")]
    assert any("config_hash" in ln for ln in head)
    rows = list(csv.DictReader(ln for ln in text if not ln.startswith("#")))
    assert list(rows[0]) == list(cli.CSV_COLUMNS)
    assert np.isfinite(float(rows[0]["E_high"]))
    fs = json.loads((out / "final_state.json").read_text())
    assert fs["header"]["config_hash"] == config.load(cfgp).hash
    assert abs(fs["volume_drift"]) < 1e-3
    # deterministic rerun
    out2 = tmp_path / "o2"
    cli.main(["simulate", "--config", str(cfgp), "--out-dir", str(out2)])
    strip = lambda p: [ln for ln in p.read_text().splitlines() if "config_source" not in ln]  # noqa: E731
    assert strip(out / "energy.csv") == strip(out2 / "energy.csv")


def test_guard_exit_code(tmp_path):
    cfgp = _write(tmp_path, "[initial]\nd_omega = 0.2617\npsi_kick = -3.0\n")
    assert cli.main(["simulate", "--config", str(cfgp), "--out-dir", str(tmp_path)]) == 2
    assert json.loads((tmp_path / "final_state.json").read_text())["error"]


def test_config_exit_code(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "none.toml")]) == 1
    assert cli.main(["norms", "--samples", str(tmp_path / "none.json"),
                     "--out-dir", str(tmp_path)]) == 1


def test_solver_exit_code(tmp_path, monkeypatch):
    from cornerwaves import dynamics

    def boom(*a, **k):
        raise SolverError("factorisation failed")

    monkeypatch.setattr(dynamics, "run", boom)
    assert cli.main(["simulate", "--out-dir", str(tmp_path)]) == 3


def test_audit_exit_codes(tmp_path):
    assert cli.main(["audit", "--which", "none", "--out-dir", str(tmp_path)]) == 0
    cfgp = _write(tmp_path, "[audit]\nsurface_laplacian_form = 'derived'\n")
    assert cli.main(["audit", "--config", str(cfgp), "--which", "harmonic,curvature",
                     "--out-dir", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "audit.json").read_text())
    assert "header" in res
    assert cli.main(["audit", "--which", "harmonic", "--corrupt-rhs",
                     "--out-dir", str(tmp_path)]) == 4


def test_norms_command(tmp_path):
    r = np.linspace(0, 1, 64) ** 2
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"rho": r.tolist(), "values": (np.sqrt(r) * (1 - r)).tolist()}))
    assert cli.main(["norms", "--samples", str(s), "--out-dir", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "norms.json").read_text())
    assert body["tilde_half"]["diverges"] is False
    c = tmp_path / "s.csv"
    np.savetxt(c, np.column_stack([r, np.ones_like(r)]), delimiter=",")
    assert cli.main(["norms", "--samples", str(c), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "norms.json").read_text())["tilde_half"]["diverges"] is True


def test_benchmark_none(tmp_path):
    assert cli.main(["benchmark", "--which", "none", "--out-dir", str(tmp_path)]) == 0


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "cornerwaves", "audit", "--which", "none",
                        "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert p.returncode == 0
    p = subprocess.run([sys.executable, "-m", "cornerwaves", "--help"], capture_output=True,
                       text=True)
    assert all(c in p.stdout for c in ("simulate", "audit", "benchmark", "norms"))
