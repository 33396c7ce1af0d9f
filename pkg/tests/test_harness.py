import json
import os

import pytest

from dualporo import cli
from dualporo.config import DEFAULTS, validate_config
from dualporo.errors import ConfigError
from dualporo.harness import run


def test_minimal_config_gets_defaults():
    cfg = validate_config({"experiment": "simulate"})
    assert cfg.experiment == "simulate"
    assert cfg["time"]["dt"] == DEFAULTS["time"]["dt"]
    assert cfg.system.fracture.phi == DEFAULTS["rocks"]["fracture"]["phi"]


def test_porosity_out_of_range_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config({"experiment": "simulate",
                         "rocks": {"fracture": {"phi": 1.2}}})
    assert any("phi" in v and "(0, 1)" in v for v in exc.value.violations)


def test_boundary_theta_above_cap_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config({"experiment": "simulate",
                         "boundary": {"theta_gamma": 10.0}})
    assert any("theta_star" in v for v in exc.value.violations)


def test_all_violations_reported_at_once():
    with pytest.raises(ConfigError) as exc:
        validate_config({
            "experiment": "simulate",
            "rocks": {"fracture": {"phi": 1.2}, "matrix": {"k": -1.0}},
            "time": {"dt": -0.5},
            "grid": {"nx": 0},
        })
    assert len(exc.value.violations) >= 4


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError):
        validate_config({"experiment": "frobnicate"})


def test_inconsistent_initial_matrix_saturation_rejected(system):
    from dualporo import constitutive as law
    good = float(law.matching_P(system, 0.2))
    validate_config({"experiment": "simulate",
                     "initial": {"s_f0": 0.2, "s_m0": good}})
    with pytest.raises(ConfigError) as exc:
        validate_config({"experiment": "simulate",
                         "initial": {"s_f0": 0.2, "s_m0": good + 0.05}})
    assert any("capillary" in v for v in exc.value.violations)


def test_invalid_config_writes_no_files(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(ConfigError):
        run({"experiment": "simulate", "time": {"dt": -1.0}}, str(out))
    assert not out.exists()


def test_kernel_check_outputs_and_metrics(tmp_path):
    out = tmp_path / "kernel"
    record = run({"experiment": "kernel-check"}, str(out))
    assert record.all_pass
    assert (out / "kernel_check.csv").exists()
    assert (out / "inputs.json").exists()
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["experiment"] == "kernel-check"
    assert len(meta["input_hash"]) == 64
    assert meta["wall_clock_s"] > 0.0
    assert meta["flags"]["linear_exact"]


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run({"experiment": "kernel-check", "seed": 7}, str(out))
        outs.append((out / "kernel_check.csv").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_small_run_outputs(tmp_path, system):
    out = tmp_path / "sim"
    raw = {
        "experiment": "simulate",
        "grid": {"nx": 10, "ny": 5},
        "time": {"dt": 0.02, "nsteps": 10},
    }
    record = run(raw, str(out))
    assert record.all_pass
    lines = (out / "timeseries.csv").read_text().strip().splitlines()
    assert lines[0] == "t,mass,source_total,grad_P_norm,grad_theta_norm"
    assert len(lines) == 11
    snap = (out / "snapshots" / "S_f_0.csv").read_text().splitlines()
    assert snap[0].startswith("# 10,5,")
    assert len(snap) == 6
    assert len(snap[1].split(",")) == 10


def test_cli_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"time": {"dt": -1}}))
    code = cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2


def test_cli_kernel_check_passes(tmp_path, capsys):
    code = cli.main(["kernel-check", "--out", str(tmp_path / "k")])
    assert code == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_cell_perm_flag_overrides(tmp_path):
    out = tmp_path / "cp"
    cli.main(["cell-perm", "--out", str(out), "--n", "128",
              "--delta", "0.2,0.1", "--kf", "2.0"])
    lines = (out / "cellperm.csv").read_text().strip().splitlines()
    assert lines[0].startswith("delta,n,K11")
    assert len(lines) == 3
    echoed = json.loads((out / "inputs.json").read_text())
    assert echoed["cell"]["n"] == 128
