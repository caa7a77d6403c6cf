import os

import numpy as np
import pytest
import yaml

import eulervisc.config as cfgmod
import eulervisc.io as eio
import eulervisc.scenarios as scn
import eulervisc.stepper as st
from eulervisc.cli import main
from eulervisc.grid_ops import Grid


# ---------------------------------------------------------------------------
# config


def test_config_round_trip_identity_all_presets():
    for name in scn.builtin_names():
        c1 = cfgmod.parse(scn.builtin_text(name))
        c2 = cfgmod.parse(cfgmod.serialize(c1))
        assert c1 == c2, name


def test_config_rejects_unknown_keys():
    raw = yaml.safe_load(scn.builtin_text("rest_state"))
    raw["grandfather"] = 1
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.ScenarioConfig.from_dict(raw)
    raw = yaml.safe_load(scn.builtin_text("rest_state"))
    raw["material"]["viscosity_typo"] = 1.0
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.ScenarioConfig.from_dict(raw)


def test_overrides_dotted_paths():
    raw = yaml.safe_load(scn.builtin_text("rest_state"))
    cfgmod.apply_overrides(raw, ["tau=0.002", "material.nu=1e-4",
                                 "solver.transport_scheme=central"])
    cfg = cfgmod.ScenarioConfig.from_dict(raw)
    assert cfg.tau == 0.002
    assert cfg.material["nu"] == 1e-4
    assert cfg.solver["transport_scheme"] == "central"


def test_preset_library_complete():
    names = scn.builtin_names()
    for required in ("rest_state", "gravity_settling", "shear_creep",
                     "rigid_rotation_0d", "two_phase_inclusion",
                     "damage_bar", "diffusion_swelling"):
        assert required in names


# ---------------------------------------------------------------------------
# ledger CSV and snapshots


def test_ledger_golden_header():
    """Frozen column contract; changing it breaks downstream parsers."""
    assert eio.LEDGER_COLUMNS == (
        "step", "t", "tau",
        "kinetic", "stored", "total",
        "diss_stokes", "diss_hyper", "diss_plastic", "diss_damage",
        "diss_diffusion", "power_gravity",
        "residual", "cum_residual",
        "min_rho", "min_detFe", "max_absFe", "max_inv_detFe",
        "trunc_active_frac", "newton_iters", "transport_iters",
    )


def test_snapshot_round_trip_bit_exact(tmp_path):
    grid = Grid((6, 7), (1.0, 1.3), "slip-box")
    state = st.State.rest(grid)
    rng = np.random.default_rng(3)
    state.rho += rng.uniform(0.1, 0.2, grid.shape)
    state.v[:] = rng.normal(size=state.v.shape)
    state.Fe += 0.01 * rng.normal(size=state.Fe.shape)
    state.mu = rng.normal(size=grid.shape)
    path = tmp_path / "snap.dat"
    eio.write_snapshot(path, state, grid)
    meta, fields = eio.read_snapshot(path)
    assert meta["dims"] == grid.shape
    assert meta["time"] == state.t
    for name in ("rho", "v", "Fe", "xi", "alpha", "mu"):
        stored = fields[name]
        original = getattr(state, name)
        assert stored.shape == original.shape
        assert np.array_equal(stored, original)  # bit-exact


def test_ledger_reader_rejects_foreign_header(tmp_path):
    path = tmp_path / "ledger.csv"
    path.write_text("time,energy\n0,1\n")
    with pytest.raises(ValueError):
        eio.read_ledger(path)


# ---------------------------------------------------------------------------
# CLI end to end


def run_dir(tmp_path, name):
    return str(tmp_path / name)


def test_cli_run_rest_state(tmp_path, capsys):
    out = run_dir(tmp_path, "rest")
    assert main(["run", "--config", "rest_state", "--out", out]) == 0
    led = eio.read_ledger(os.path.join(out, "ledger.csv"))
    assert len(led["step"]) == 10
    assert np.max(np.abs(led["residual"])) <= 1e-12
    assert np.all(np.diff(led["t"]) > 0)
    # snapshots present and loadable
    meta, fields = eio.read_snapshot(os.path.join(out, "snap_final.dat"))
    assert np.all(fields["rho"] == 1.0)


def test_cli_rejects_zero_density(tmp_path, capsys):
    code = main(["run", "--config", "rest_state", "--set", "initial.rho0=0.0",
                 "--out", run_dir(tmp_path, "bad")])
    assert code == 1
    assert "positive" in capsys.readouterr().err


def test_cli_rejects_unknown_preset(tmp_path, capsys):
    assert main(["run", "--config", "not_a_scenario",
                 "--out", run_dir(tmp_path, "x")]) == 1


def test_cli_step_failure_exit_2(tmp_path, capsys):
    code = main([
        "run", "--config", "shear_creep",
        "--set", "initial.v0.amplitude=80.0",
        "--set", "solver.retry_budget=0",
        "--set", "solver.max_newton=3",
        "--set", "solver.continuation_stages=0",
        "--out", run_dir(tmp_path, "blow"),
    ])
    assert code == 2
    assert "step" in capsys.readouterr().err


def test_cli_env_var_overrides_out(tmp_path, monkeypatch, capsys):
    target = run_dir(tmp_path, "env")
    monkeypatch.setenv("EULERVISC_OUT", target)
    assert main(["run", "--config", "rest_state",
                 "--out", run_dir(tmp_path, "ignored")]) == 0
    assert os.path.exists(os.path.join(target, "ledger.csv"))
    assert not os.path.exists(run_dir(tmp_path, "ignored"))


def test_cli_shear_creep_plastic_dissipation_positive(tmp_path, capsys):
    out = run_dir(tmp_path, "creep")
    assert main(["run", "--config", "shear_creep", "--set", "T=0.04",
                 "--out", out]) == 0
    led = eio.read_ledger(os.path.join(out, "ledger.csv"))
    assert np.all(led["diss_plastic"] > 0.0)


def test_cli_report(tmp_path, capsys):
    out = run_dir(tmp_path, "rep")
    assert main(["run", "--config", "rest_state", "--out", out]) == 0
    capsys.readouterr()
    assert main(["report", out]) == 0
    text = capsys.readouterr().out
    assert "min rho" in text and "max |residual|" in text
    assert main(["report", run_dir(tmp_path, "missing")]) == 1


def test_cli_converge_exact_scenario(tmp_path, capsys):
    out = run_dir(tmp_path, "conv")
    assert main(["converge", "--config", "translation", "--out", out]) == 0
    text = capsys.readouterr().out
    assert "exact" in text
    rows = eio.read_convergence_csv(os.path.join(out, "convergence.csv"))
    assert any(r[0] == "v" and r[3] <= 1e-12 for r in rows)


def test_cli_converge_needs_three_levels(tmp_path, capsys):
    assert main(["converge", "--config", "translation", "--levels", "2",
                 "--out", run_dir(tmp_path, "c2")]) == 1


def test_cli_check_material(capsys):
    assert main(["check-material", "--config", "rest_state"]) == 0
    text = capsys.readouterr().out
    assert "fd_derivative_F" in text and "FAIL" not in text


def test_cli_oracle0d_rigid_rotation(capsys):
    assert main(["oracle0d", "--config", "rigid_rotation_0d"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_oracle0d_fails_on_impossible_tolerance(capsys):
    code = main(["oracle0d", "--config", "extension_0d",
                 "--set", "oracle.det_law_tol=1e-30"])
    assert code == 1
    assert "FAIL" in capsys.readouterr().err


def test_cli_run_0d_writes_trajectory(tmp_path, capsys):
    out = run_dir(tmp_path, "mx")
    assert main(["run", "--config", "maxwell_shear_0d", "--out", out]) == 0
    path = os.path.join(out, "trajectory.csv")
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data["t"][-1] == pytest.approx(0.4)
    assert np.all(np.isfinite(data["det_Fe"]))
