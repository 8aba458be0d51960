import json
from pathlib import Path

import numpy as np
import pytest

from obslab import cli
from obslab.io import sha256_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(args):
    return cli.main(args)


def test_missing_config_is_usage_error(tmp_path):
    assert run(["reconstruct", "--out", str(tmp_path)]) == 2


def test_unknown_command_is_usage_error(tmp_path):
    assert run(["frobnicate", "--out", str(tmp_path)]) == 2


def test_schema_violation(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"schema_version": 1, "equation": "wave"}))
    rc = run(["eig", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"]["type"] == "validation"


def test_rejected_expression(tmp_path):
    cfg = {
        "schema_version": 1,
        "equation": "wave",
        "domain": {"length": np.pi, "n_interior": 40},
        "time": {"tau": 7.0, "n_steps": 100},
        "coefficients": {"q0": "__import__('os').getcwd()"},
        "probes": {"K": 3},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert run(["eig", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_k_exceeding_grid(tmp_path):
    cfg = {
        "schema_version": 1,
        "equation": "wave",
        "domain": {"length": np.pi, "n_interior": 10},
        "time": {"tau": 7.0, "n_steps": 50},
        "coefficients": {"q0": "0"},
        "probes": {"K": 50},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    rc = run(["eig", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2
    msg = json.loads((tmp_path / "o" / "error.json").read_text())["error"]["message"]
    assert "exceeds" in msg


def test_eig_wave_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["eig", "--config", str(CONFIGS / "eig-wave-demo.json"), "--out", str(out), "--quiet"]) == 0
    rows = (out / "eigs.csv").read_text().strip().splitlines()
    assert rows[0] == "k,eigenvalue"
    lam = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.allclose(lam, np.arange(1, 11) ** 2, rtol=1e-4)
    weyl = json.loads((out / "weyl.json").read_text())
    assert weyl["ok"] and weyl["c"] < 1.01


def test_eig_beam_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["eig", "--config", str(CONFIGS / "eig-beam-demo.json"), "--out", str(out), "--quiet"]) == 0
    rows = (out / "eigs.csv").read_text().strip().splitlines()
    rho1 = float(rows[1].split(",")[2])
    assert rho1 == pytest.approx(22.3733, rel=1e-3)


def test_observability_warning_recorded(tmp_path):
    out = tmp_path / "o"
    assert run(["observability", "--config", str(CONFIGS / "obs-wave-demo.json"), "--out", str(out), "--quiet"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert any("threshold" in w for w in manifest["warnings"])
    kap = json.loads((out / "kappa.json").read_text())
    assert kap["equation"] == "wave"


def test_margin_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["observability", "--config", str(CONFIGS / "obs-margin-demo.json"), "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "margin.json").read_text())
    ratios = [row["ratio"] for row in rep["rows"]]
    assert ratios[0] >= 0.5
    assert all(b <= a * (1 + 1e-9) for a, b in zip(ratios, ratios[1:]))


def test_reconstruct_wave_pot_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["reconstruct", "--config", str(CONFIGS / "wave-pot-demo.json"), "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["errors"]["rel_l2_q"] <= 1e-2
    assert (out / "field_q.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {e["path"] for e in manifest["outputs"]}
    assert {"probes.csv", "field_q.csv", "report.json"} <= listed
    for entry in manifest["outputs"]:
        assert sha256_file(out / entry["path"]) == entry["sha256"]


def test_stability_heat_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["stability", "--config", str(CONFIGS / "heat-fd-demo.json"), "--out", str(out), "--quiet"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["monotone"] and fit["envelope_holds"]
    assert fit["exponent_p"] == 1.0
    lines = (out / "stability.csv").read_text().strip().splitlines()
    assert lines[0].startswith("epsilon,delta_lambda_norm,error_l2")
    assert len(lines) == 5


def test_forward_demo(tmp_path):
    out = tmp_path / "o"
    assert run(["forward", "--config", str(CONFIGS / "wave-forward-demo.json"), "--out", str(out), "--quiet"]) == 0
    lines = (out / "trace.csv").read_text().strip().splitlines()
    assert lines[0] == "t,y_left"
    first = float(lines[1].split(",")[1])
    assert first == pytest.approx(-1.0, rel=1e-2)  # -d/dx sin at 0


def test_probe_command(tmp_path):
    cfg = json.loads((CONFIGS / "wave-pot-demo.json").read_text())
    cfg["domain"]["n_interior"] = 120
    cfg["time"]["n_steps"] = 700
    cfg["probes"]["k_list"] = [2]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    assert run(["probe", "--config", str(p), "--out", str(out), "--quiet"]) == 0
    rows = (out / "probes.csv").read_text().strip().splitlines()
    k, re_c, *_ = rows[1].split(",")
    assert int(k) == 2
    assert abs(float(re_c)) <= 0.02  # truth has no phi_2 content


def test_compute_error_exit_code(tmp_path):
    # rank-deficient heat dictionary: compute error, exit 1
    cfg = {
        "schema_version": 1,
        "equation": "heat",
        "domain": {"length": np.pi, "n_interior": 150},
        "time": {"tau": 0.05, "n_steps": 60},
        "boundary": ["left"],
        "coefficients": {"q0": "0", "q": "0.01*sin(x)"},
        "probes": {"kind": "heat", "K": 3, "k_dict": 14},
        "truncation": {"mode": "fixed", "lambda_cutoff": 9.5},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    assert run(["reconstruct", "--config", str(p), "--out", str(out), "--quiet"]) == 1
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["type"] == "compute"


def test_determinism_byte_identical(tmp_path):
    for cfg in ("eig-wave-demo.json", "heat-fd-demo.json"):
        cmd = "eig" if cfg.startswith("eig") else "stability"
        outs = []
        for run_dir in ("a", "b"):
            out = tmp_path / cfg / run_dir
            assert run([cmd, "--config", str(CONFIGS / cfg), "--out", str(out), "--quiet"]) == 0
            outs.append(out)
        manifest = json.loads((outs[0] / "manifest.json").read_text())
        for entry in manifest["outputs"]:
            a = (outs[0] / entry["path"]).read_bytes()
            b = (outs[1] / entry["path"]).read_bytes()
            assert a == b, f"{entry['path']} differs between runs"


def test_selftest_passes(capsys):
    assert cli.cmd_selftest(quiet=True) == 0


def test_selftest_hook_failure():
    cli.EXTRA_CHECKS.append(("corrupted", lambda: (False, "injected corruption")))
    try:
        assert cli.cmd_selftest(quiet=True) == 1
    finally:
        cli.EXTRA_CHECKS.clear()


def test_seed_override(tmp_path):
    out = tmp_path / "o"
    assert run(["eig", "--config", str(CONFIGS / "eig-wave-demo.json"), "--out", str(out), "--seed", "42", "--quiet"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 42
