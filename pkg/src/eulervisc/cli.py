"""Batch command-line interface.

Subcommands: run, converge, oracle0d, check-material, report.
Exit codes: 0 success, 1 configuration/validation error or failed
check, 2 step-failure abort of the time loop.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from . import config as cfgmod
from . import material as mat
from . import scenarios as scn
from . import stepper as st
from .config import ConfigError
from .grid_ops import GridOps
from .io import RunWriter, write_convergence_csv
from .oracle import Oracle0DConfig, integrate_0d_reference
from .stepper import StepFailure

__all__ = ["main"]

ENV_OUT = "EULERVISC_OUT"


def _load_config(args):
    path = args.config
    if os.path.exists(path):
        with open(path) as fh:
            text = fh.read()
    else:
        text = scn.builtin_text(path)
    raw = yaml.safe_load(text)
    if getattr(args, "set", None):
        raw = cfgmod.apply_overrides(raw, args.set)
    cfg = cfgmod.ScenarioConfig.from_dict(raw)
    if getattr(args, "tau", None) is not None:
        cfg.tau = float(args.tau)
    return cfg


def _out_dir(args, cfg):
    base = os.environ.get(ENV_OUT) or getattr(args, "out", None)
    if base is None:
        base = os.path.join("runs", cfg.name)
    return base


def _build_grid_problem(cfg):
    grid = scn.build_grid(cfg)
    ops = GridOps(grid)
    model = scn.build_material(cfg)
    state = scn.build_state(cfg, grid)
    state.validate()
    model.truncation.check_initial(state.Fe)
    return grid, ops, model, state


# ---------------------------------------------------------------------------
# run


def _run_0d(cfg, out_dir):
    model = scn.build_material(cfg)
    drive = scn.drive_function(cfg)
    traj = st.kinematic_drive(
        model, drive, Fe0=scn.initial_fe_0d(cfg),
        alpha0=float(cfg.initial["alpha0"]), tau=cfg.tau, T=cfg.T,
        cfg=scn.build_step_config(cfg),
    )
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "trajectory.csv")
    cols = ["t"] + ["Fe_%d%d" % (i, j) for i in range(3) for j in range(3)] \
        + ["alpha", "det_Fe", "energy"]
    data = np.column_stack([
        traj["t"], traj["Fe"].reshape(-1, 9), traj["alpha"],
        traj["det_Fe"], traj["energy"],
    ])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")
    print("wrote %s (%d steps)" % (path, len(traj["t"]) - 1))
    return 0


def cmd_run(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg)
    if cfg.mode == "0d":
        return _run_0d(cfg, out_dir)
    grid, ops, model, state = _build_grid_problem(cfg)
    step_cfg = scn.build_step_config(cfg)
    writer = RunWriter(out_dir, grid, cfg.output["snapshot_every"])
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        fh.write(cfgmod.serialize(cfg))
    writer.write_state(state, tag="000000")
    try:
        final = st.run(state, model, np.asarray(cfg.gravity, dtype=float),
                       step_cfg, cfg.T, ops=ops, sink=writer.sink)
    except StepFailure as fail:
        steps = writer.step
        writer.close()
        print("step failure at step %d (stage %s): %s"
              % (steps + 1, fail.stage, fail), file=sys.stderr)
        return 2
    writer.write_state(final, tag="final")
    steps = writer.step
    writer.close()
    print("completed %d steps to t=%.6g; outputs in %s"
          % (steps, final.t, out_dir))
    return 0


# ---------------------------------------------------------------------------
# converge

_EXACT_FLOOR = 1e-12


def _state_fields(state):
    return {"rho": state.rho, "v": state.v, "Fe": state.Fe, "alpha": state.alpha}


def _order_line(diffs, scale):
    """Observed order from successive Richardson ratios; 'exact' at round-off."""
    diffs = [d for d in diffs if np.isfinite(d)]
    if len(diffs) >= 1 and all(d <= _EXACT_FLOOR * scale for d in diffs):
        return "exact", float("nan")
    ratios = [
        np.log2(diffs[i] / diffs[i + 1])
        for i in range(len(diffs) - 1)
        if diffs[i + 1] > 0
    ]
    if not ratios:
        return "n/a", float("nan")
    order = float(np.mean(ratios))
    return "%.3f" % order, order


def cmd_converge(args):
    cfg = _load_config(args)
    levels = int(args.levels)
    if levels < 3:
        raise ConfigError("converge needs at least 3 levels")
    out_dir = _out_dir(args, cfg)
    os.makedirs(out_dir, exist_ok=True)
    taus = [cfg.tau / 2 ** i for i in range(levels)]

    failed_at = None
    if cfg.mode == "0d":
        model = scn.build_material(cfg)
        drive = scn.drive_function(cfg)
        finals, resids = [], []
        for tau in taus:
            traj = st.kinematic_drive(
                model, drive, Fe0=scn.initial_fe_0d(cfg),
                alpha0=float(cfg.initial["alpha0"]), tau=tau, T=cfg.T,
            )
            finals.append({"Fe": traj["Fe"][-1], "alpha": np.atleast_1d(traj["alpha"][-1])})
        norms = {name: lambda a: float(np.sqrt(np.sum(a * a)))
                 for name in ("Fe", "alpha")}
        errors = {}
        if "tau_fine" in cfg.oracle:
            ref = integrate_0d_reference(Oracle0DConfig(
                model=model, grad_v=drive, Fe0=scn.initial_fe_0d(cfg),
                alpha0=float(cfg.initial["alpha0"]), T=cfg.T,
                tau_fine=float(cfg.oracle["tau_fine"]), tau_test=taus[-1],
            ))
            errors["oracle_error"] = [
                float(np.max(np.abs(f["Fe"] - ref["Fe"][-1]))
                      + np.max(np.abs(f["alpha"] - ref["alpha"][-1])))
                for f in finals
            ]
    else:
        grid, ops, model, state0 = _build_grid_problem(cfg)
        g = np.asarray(cfg.gravity, dtype=float)
        finals, resids = [], []
        for tau in taus:
            acc = {"max_absR": 0.0}

            def sink(s, rep, led, acc=acc):
                acc["max_absR"] = max(acc["max_absR"], abs(led.residual))

            step_cfg = scn.build_step_config(cfg, tau=tau)
            try:
                final = st.run(state0.copy(), model, g, step_cfg, cfg.T,
                               ops=ops, sink=sink)
            except StepFailure as fail:
                failed_at = (tau, str(fail))
                break
            finals.append(_state_fields(final))
            resids.append(acc["max_absR"])
        norms = {name: (lambda a, _ops=ops: float(_ops.norm(a)))
                 for name in ("rho", "v", "Fe", "alpha")}
        errors = {"energy_residual": resids} if resids else {}

    rows, table = [], []
    n_ok = len(finals)
    for name in (finals[0] if finals else {}):
        diffs = [norms[name](finals[i + 1][name] - finals[i][name])
                 for i in range(n_ok - 1)]
        scale = max(1.0, norms[name](np.asarray(finals[0][name], dtype=float)))
        label, order = _order_line(diffs, scale)
        table.append((name, diffs, label))
        for i, dv in enumerate(diffs):
            rows.append((name, i, taus[i], dv, order))
    for name, errs in errors.items():
        label, order = _order_line(errs, 1.0)
        table.append((name, errs, label))
        for i, err in enumerate(errs):
            rows.append((name, i, taus[i], err, order))

    print("tau levels:", " ".join("%.3g" % t for t in taus[:n_ok]))
    print("%-16s %-40s %s" % ("field", "diffs (coarse->fine)", "order"))
    for name, diffs, label in table:
        print("%-16s %-40s %s"
              % (name, " ".join("%.4e" % d for d in diffs), label))
    csv_path = os.path.join(out_dir, "convergence.csv")
    write_convergence_csv(csv_path, rows)
    print("wrote %s" % csv_path)
    if failed_at is not None:
        print("PARTIAL: level tau=%.4g failed: %s" % failed_at, file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# oracle0d


def cmd_oracle0d(args):
    cfg = _load_config(args)
    if cfg.mode != "0d":
        raise ConfigError("oracle0d needs a 0d-mode config")
    model = scn.build_material(cfg)
    drive = scn.drive_function(cfg)
    Fe0 = scn.initial_fe_0d(cfg)
    alpha0 = float(cfg.initial["alpha0"])
    tau_fine = float(cfg.oracle.get("tau_fine", cfg.tau / 200.0))
    ref = integrate_0d_reference(Oracle0DConfig(
        model=model, grad_v=drive, Fe0=Fe0, alpha0=alpha0, T=cfg.T,
        tau_fine=tau_fine,
    ))
    failures = []

    drift = float(np.max(np.abs(ref["energy"] - ref["energy"][0]))) / cfg.T
    print("energy drift per unit time: %.3e" % drift)
    if "energy_drift_tol" in cfg.oracle and drift > float(cfg.oracle["energy_drift_tol"]):
        failures.append("energy drift %.3e > %.3e"
                        % (drift, float(cfg.oracle["energy_drift_tol"])))

    if cfg.drive.get("kind") == "extension":
        a = float(cfg.drive.get("a", 0.3))
        exact = ref["det_Fe"][0] * np.exp(a * ref["t"])
        det_err = float(np.max(np.abs(ref["det_Fe"] - exact)))
        print("det-law error: %.3e" % det_err)
        if "det_law_tol" in cfg.oracle and det_err > float(cfg.oracle["det_law_tol"]):
            failures.append("det-law error %.3e > %.3e"
                            % (det_err, float(cfg.oracle["det_law_tol"])))

    if tau_fine <= cfg.tau / 100.0:
        traj = st.kinematic_drive(model, drive, Fe0=Fe0, alpha0=alpha0,
                                  tau=cfg.tau, T=cfg.T)
        err = float(np.max(np.abs(traj["Fe"][-1] - ref["Fe"][-1]))
                    + abs(traj["alpha"][-1] - ref["alpha"][-1]))
        print("stepper-vs-reference final error at tau=%.3g: %.3e"
              % (cfg.tau, err))
        if "stepper_error_tol" in cfg.oracle and err > float(cfg.oracle["stepper_error_tol"]):
            failures.append("stepper error %.3e > %.3e"
                            % (err, float(cfg.oracle["stepper_error_tol"])))

    if failures:
        for line in failures:
            print("FAIL:", line, file=sys.stderr)
        return 1
    print("PASS")
    return 0


# ---------------------------------------------------------------------------
# check-material / report


def cmd_check_material(args):
    cfg = _load_config(args)
    model = scn.build_material(cfg)
    report = mat.check_material(model)
    ok = True
    for name, (passed, worst) in report.items():
        shown = worst if isinstance(worst, str) else "%.3e" % worst
        print("%-24s %s  (worst %s)" % (name, "PASS" if passed else "FAIL", shown))
        ok = ok and passed
    return 0 if ok else 1


def cmd_report(args):
    path = os.path.join(args.run_dir, "ledger.csv")
    if not os.path.exists(path):
        print("no ledger.csv in %s" % args.run_dir, file=sys.stderr)
        return 1
    from .io import read_ledger

    led = read_ledger(path)
    n = len(led["step"])
    print("run directory: %s" % args.run_dir)
    print("steps: %d, time: %.6g -> %.6g" % (n, led["t"][0] - led["tau"][0], led["t"][-1]))
    print("total energy: %.9g -> %.9g" % (led["total"][0], led["total"][-1]))
    print("max |residual|: %.3e, cumulative: %.3e"
          % (np.max(np.abs(led["residual"])), led["cum_residual"][-1]))
    print("min rho: %.6g, min det Fe: %.6g"
          % (np.min(led["min_rho"]), np.min(led["min_detFe"])))
    print("max truncation activation: %.3g" % np.max(led["trunc_active_frac"]))
    print("max Newton iterations: %d" % int(np.max(led["newton_iters"])))
    return 0


# ---------------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(
        prog="eulervisc",
        description="Staggered Eulerian finite-strain visco-elastodynamics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, tau=True):
        sp.add_argument("--config", required=True,
                        help="config file path or built-in preset name")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path config override (repeatable)")
        sp.add_argument("--out", default=None,
                        help="output directory (env %s overrides)" % ENV_OUT)
        if tau:
            sp.add_argument("--tau", type=float, default=None,
                            help="override the base time step")

    sp = sub.add_parser("run", help="integrate a scenario, write ledger and snapshots")
    add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("converge", help="tau-refinement study")
    add_common(sp)
    sp.add_argument("--levels", type=int, default=3, help="refinement levels (>= 3)")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("oracle0d", help="reference-trajectory checks for 0d scenarios")
    add_common(sp)
    sp.set_defaults(func=cmd_oracle0d)

    sp = sub.add_parser("check-material", help="sampled material contract checks")
    add_common(sp, tau=False)
    sp.set_defaults(func=cmd_check_material)

    sp = sub.add_parser("report", help="summarize a run directory")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
