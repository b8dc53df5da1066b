import json

import numpy as np
import pytest

from switchflow import cli
from switchflow.fields import ALPHA, BETA
from switchflow.grid import DensityGrid

CONST_FIELDS = {
    "u0": {"kind": "constant", "vector": [1.0, ALPHA]},
    "u1": {"kind": "constant", "vector": [-BETA, 1.0]},
}


def write_cfg(tmp_path, name="cfg.json", **overrides):
    cfg = {"fields": CONST_FIELDS, "lambda": 1.0, "grid_n": 16, "seed": 42}
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(cmd, cfg_path, out, extra=()):
    return cli.main([cmd, "--config", str(cfg_path), "--out", str(out),
                     *extra])


def test_simulate_writes_unit_mass_grids(tmp_path):
    cfg = write_cfg(tmp_path, simulate={"n_switches": 2000,
                                        "n_trajectories": 16})
    out = tmp_path / "out"
    assert run("simulate", cfg, out) == 0
    for m in (0, 1):
        g = DensityGrid.from_csv(out / f"occupation_mode{m}.csv")
        assert g.mass() == pytest.approx(1.0, abs=1e-12)
        assert (out / f"occupation_mode{m}.pgm").exists()
    summary = json.loads((out / "simulate_summary.json").read_text())
    assert summary["n_switches"] >= 2000
    assert "wall_time" in summary


def test_simulate_deterministic_outputs(tmp_path):
    cfg = write_cfg(tmp_path, simulate={"n_switches": 500,
                                        "n_trajectories": 8})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run("simulate", cfg, out1) == 0
    assert run("simulate", cfg, out2) == 0
    for name in ("occupation_mode0.csv", "occupation_mode1.csv",
                 "occupation_mode0.pgm"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_seed_override_changes_grids(tmp_path):
    cfg = write_cfg(tmp_path, simulate={"n_switches": 500,
                                        "n_trajectories": 8})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run("simulate", cfg, out1) == 0
    assert run("simulate", cfg, out2, extra=["--seed", "7"]) == 0
    assert (out1 / "occupation_mode0.csv").read_bytes() \
        != (out2 / "occupation_mode0.csv").read_bytes()


def test_missing_field_spec_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"fields": {"u0": CONST_FIELDS["u0"]},
                                "grid_n": 16}))
    assert run("simulate", path, tmp_path / "o") == 2
    assert "fields.u1" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, typo_key=1)
    assert run("solve", cfg, tmp_path / "o") == 2
    assert "typo_key" in capsys.readouterr().err


def test_invalid_json_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run("solve", path, tmp_path / "o") == 2


def test_solve_constant_pair(tmp_path):
    cfg = write_cfg(tmp_path, quadrature={"kind": "laguerre", "m": 8},
                    solve={"tol": 1e-10, "max_iter": 50, "start": "perturbed"})
    out = tmp_path / "out"
    assert run("solve", cfg, out) == 0
    rho0 = DensityGrid.from_csv(out / "rho0.csv")
    assert np.abs(rho0.values - 1).max() < 1e-6
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["converged"] and rep["residual"] < 1e-6
    assert (out / "rho1.csv").exists() and (out / "rho1.pgm").exists()


def test_solve_nonconverged_exit_4(tmp_path):
    cfg = write_cfg(tmp_path, quadrature={"kind": "laguerre", "m": 8},
                    solve={"tol": 1e-300, "max_iter": 1,
                           "start": "perturbed"})
    out = tmp_path / "out"
    assert run("solve", cfg, out) == 4
    # files still written, flagged in the report
    assert (out / "rho0.csv").exists()
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["converged"] is False


def test_solve_tol_zero_runs_max_iter(tmp_path):
    cfg = write_cfg(tmp_path, quadrature={"kind": "laguerre", "m": 8},
                    solve={"tol": 0.0, "max_iter": 7, "start": "uniform"})
    out = tmp_path / "out"
    assert run("solve", cfg, out) == 4   # tol 0 is unreachable by design
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["iterations"] == 7
    assert len(rep["residual_history"]) == 7


def test_verify_all_pass(tmp_path):
    cfg = write_cfg(
        tmp_path, grid_n=32,
        quadrature={"kind": "panel", "points_per_panel": 12},
        verify={"samples": 10, "st_max": 2.0})
    out = tmp_path / "out"
    assert run("verify-ibp", cfg, out) == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["checks"]["transversality"]["passed"]
    assert rep["checks"]["magic_identity"]["passed"]
    assert rep["checks"]["ibp_gradient"]["passed"]
    assert rep["checks"]["special_flow"]["passed"]
    assert "thresholds" in rep and "magic_residual_max" in rep["thresholds"]
    assert rep["checks"]["ibp_gradient"]["K_hat"] > 0


def test_verify_parallel_fields_exit_5(tmp_path):
    cfg = write_cfg(tmp_path, fields={
        "u0": {"kind": "constant", "vector": [1.0, 0.5]},
        "u1": {"kind": "constant", "vector": [2.0, 1.0]},
    })
    out = tmp_path / "out"
    assert run("verify-ibp", cfg, out) == 5
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["checks"]["transversality"]["passed"] is False


def test_check_transversality(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run("check-transversality", cfg, tmp_path / "o") == 0
    bad = write_cfg(tmp_path, name="bad.json", fields={
        "u0": {"kind": "constant", "vector": [1.0, 0.0]},
        "u1": {"kind": "constant", "vector": [1.0, 0.0]},
    })
    assert run("check-transversality", bad, tmp_path / "o2") == 5


def test_smoothing_command(tmp_path):
    cfg = write_cfg(tmp_path, quadrature={"kind": "laguerre", "m": 8},
                    smoothing={"n_applications": 1,
                               "test_function": "indicator"})
    out = tmp_path / "out"
    assert run("smoothing", cfg, out) == 0
    assert (out / "smoothing_profile.csv").exists()
    rep = json.loads((out / "smoothing_report.json").read_text())
    assert len(rep["norms"]["order0"]) == 2


def test_special_flow_command(tmp_path):
    cfg = write_cfg(tmp_path, special_flow={"t_max": 50, "n_samples": 16})
    out = tmp_path / "out"
    assert run("special-flow", cfg, out) == 0
    rep = json.loads((out / "special_report.json").read_text())
    assert rep["fitted_exponent"] <= 1.1
    assert (out / "special_growth.csv").exists()
