import json
import os
import subprocess
import sys

import pytest

from besovns import cli, io, verify
from besovns.config import ExperimentConfig, parse_text

BASE = """
grid.n = 16
solver.dt = 0.01
solver.t_end = 0.1
solver.n_snapshots = 8
data.kind = random_besov
data.amplitude = 1.0
data.kmax = 2.5
seed = 1
"""


def write_cfg(tmp_path, extra="", name="run.cfg"):
    out = tmp_path / "out"
    path = tmp_path / name
    path.write_text(BASE + extra + f"\noutputs.dir = {json.dumps(str(out))}\n")
    return str(path), out


def test_norm_ids():
    assert cli.parse_norm_id("L2") is not None
    assert cli.parse_norm_id("B(-0.25, 4, inf)") is not None
    for bad in ("X2", "Lp", "B(1,2)", "B(0,0.5,2)"):
        with pytest.raises(cli.ConfigError):
            cli.parse_norm_id(bad)


def test_simulate_writes_norms_and_snapshots(tmp_path):
    path, out = write_cfg(tmp_path, "outputs.snapshots = true\noutputs.cadence = 4\n")
    assert cli.main(["simulate", path]) == 0
    rows = io.read_norms_csv(str(out / "norms.csv"))
    assert {r[1] for r in rows} == set(cli.DEFAULT_NORMS)
    assert sorted(os.listdir(out / "snapshots")) == ["snapshot_00000.bns", "snapshot_00004.bns",
                                                     "snapshot_00008.bns"]
    assert "energy_residual" in json.loads((out / "diagnostics.json").read_text())


def test_norm_command(tmp_path):
    path, out = write_cfg(tmp_path, 'outputs.norms = ["L4"]\n')
    assert cli.main(["norm", path]) == 0
    (row,) = io.read_norms_csv(str(out / "norms.csv"))
    assert row[0] == 0.0 and row[1] == "L4" and row[2] > 0


def test_decompose_identities(tmp_path):
    path, out = write_cfg(tmp_path)
    assert cli.main(["decompose", path]) == 0
    reports = json.loads((out / "identities.json").read_text())
    assert len(reports) == 5 and all(r["sup_residual"] <= cli.IDENTITY_TOL for r in reports)


def test_verify_outputs(tmp_path):
    path, out = write_cfg(tmp_path, "verify = energy_inequality, w2_identity\n")
    assert cli.main(["verify", path]) == 0
    report = json.loads((out / "reports" / "energy_inequality.json").read_text())
    assert report["pass"] is True and report["inequality_id"] == "energy_inequality"
    assert (out / "summary.csv").read_text().startswith("verification,pass")
    assert not (out / "error.json").exists()


def test_configuration_error_exit_code(tmp_path, capsys):
    path, _ = write_cfg(tmp_path, "grid.m = 3\n")
    assert cli.main(["simulate", path]) == cli.EXIT_CONFIG
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError" and record["exit_code"] == 2


def test_missing_verifications_is_config_error(tmp_path):
    path, out = write_cfg(tmp_path)
    assert cli.main(["verify", path]) == cli.EXIT_CONFIG
    assert json.loads((out / "error.json").read_text())["exit_code"] == 2


def test_resolution_exit_code(tmp_path):
    path, out = write_cfg(tmp_path, "", name="rough.cfg")
    text = open(path).read().replace("data.kind = random_besov", "data.kind = oscillatory")
    text = text.replace("data.kmax = 2.5", "data.carrier = 3\ndata.width = 0.05")
    open(path, "w").write(text)
    assert cli.main(["simulate", path]) == cli.EXIT_RESOLUTION
    assert json.loads((out / "error.json").read_text())["error"] == "ResolutionExceeded"


def test_verification_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(verify, "load_frozen", lambda path=None: {"w3_bound(p=4,q=5)": 1e-12})
    path, out = write_cfg(tmp_path, "verify = w3_bound\n")
    cfg = ExperimentConfig.from_mapping(parse_text(open(path).read()))
    assert cli.run_experiment(cfg, "verify") == cli.EXIT_VERIFY
    assert json.loads((out / "reports" / "w3_bound.json").read_text())["pass"] is False
    assert json.loads((out / "error.json").read_text())["error"] == "VerificationFailed"


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    path = tmp_path / "io.cfg"
    path.write_text(BASE + f"outputs.dir = {json.dumps(str(blocker / 'sub'))}\n")
    assert cli.main(["norm", str(path)]) == cli.EXIT_IO


def test_override_and_worst_exit_code(tmp_path):
    good, out = write_cfg(tmp_path)
    bad = tmp_path / "bad.cfg"
    bad.write_text("grid.n = 12\n")
    assert cli.main(["norm", good, str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["norm", good, "--set", "grid.n=32", "--set", "solver.dt=0.005"]) == 0


def test_sample_bilinear_command(tmp_path):
    path, out = write_cfg(tmp_path, "bilinear.lemma = heat_cross_l3\nbilinear.samples = 2\n")
    assert cli.main(["sample-bilinear", path]) in (0, cli.EXIT_VERIFY)
    report = json.loads((out / "bilinear_heat_cross_l3.json").read_text())
    assert report["n_samples"] == 2


def test_console_entry_point(tmp_path):
    path, out = write_cfg(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "besovns.cli", "norm", path], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "norms.csv").exists()
