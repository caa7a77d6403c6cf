"""Acceptance gate: every top-level criterion, one pass/fail line each.

Run with `pytest -v tests/test_acceptance.py`; each test emits a single
PASS/FAIL line (visible with -s or in the captured output on failure)
and asserts it.
"""

import os

import numpy as np
import pytest
import scipy.optimize

import eulervisc.diagnostics as dg
import eulervisc.material as mat
import eulervisc.stepper as st
import eulervisc.tensor_core as tc
from eulervisc.cli import main as cli_main
from eulervisc.grid_ops import Grid, GridOps
from eulervisc.io import read_ledger
from eulervisc.oracle import Oracle0DConfig, fd_stress_check, integrate_0d_reference

rng = np.random.default_rng(12)
X2 = np.zeros(2)

GRID_PRESETS = (
    "rest_state", "gravity_settling", "shear_creep", "two_phase_inclusion",
    "damage_bar", "diffusion_swelling", "translation",
)


def _criterion(name, ok, detail=""):
    tag = " [%s]" % detail if detail else ""
    line = "%s: %s%s" % ("PASS" if ok else "FAIL", name, tag)
    print(line)
    assert ok, line


def default_model(**kw):
    args = dict(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.2),
        mu_visc=0.5, lam_visc=0.2, nu=1e-3,
    )
    args.update(kw)
    return mat.MaterialModel(**args)


@pytest.fixture(scope="module")
def scenario_ledgers(tmp_path_factory):
    """Run every shipped grid scenario end to end through the CLI."""
    base = tmp_path_factory.mktemp("accept_runs")
    ledgers = {}
    for name in GRID_PRESETS:
        out = str(base / name)
        code = cli_main(["run", "--config", name, "--out", out])
        assert code == 0, "scenario %s aborted" % name
        ledgers[name] = read_ledger(os.path.join(out, "ledger.csv"))
    return ledgers


# ---------------------------------------------------------------------------


def test_constitutive_derivative_check():
    model = default_model(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0, g_c=0.05, c_alpha=0.5, a0=0.4))
    report = fd_stress_check(model, n_samples=120, seed=3)
    worst = max(report["worst_dF"], report["worst_dalpha"])
    _criterion(
        "constitutive derivatives vs finite differences, all branches, "
        "rel err <= 1e-6 over >= 100 samples",
        report["n_total"] >= 100 and worst <= 1e-6,
        "worst %.2e over %d samples" % (worst, report["n_total"]),
    )


def test_truncation_seam_continuity():
    lam = 4.0
    phi = mat.NeoHookean(mu=1.0, kappa=2.0)
    worst = 0.0
    for _ in range(60):
        F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
        targets_frob = (lam, 2.0 * lam)
        targets_det = (1.0 / lam, 1.0 / (2.0 * lam))
        seams = [F * (t / tc.frob(F)) for t in targets_frob]
        seams += [F * (t / tc.det(F)) ** (1.0 / 3.0) for t in targets_det]
        for Fs in seams:
            lo = mat.truncate_energy(phi, lam, X2, (1 - 1e-9) * Fs, 0.8)
            hi = mat.truncate_energy(phi, lam, X2, (1 + 1e-9) * Fs, 0.8)
            worst = max(worst, abs(hi - lo) / max(1.0, abs(lo)))
    _criterion(
        "stored-energy cutoff continuous at all four seams, jump <= 1e-6",
        worst <= 1e-6, "worst %.2e" % worst,
    )


def test_conjugate_round_trip():
    X = rng.uniform(size=(40, 2))
    M = tc.dev(rng.normal(scale=1.5, size=(40, 3, 3)))
    worst = 0.0
    for zeta in (mat.QuadraticViscoplastic(theta=0.3),
                 mat.QuarticViscoplastic(a=0.5, b=2.0)):
        L = mat.conjugate_rate(zeta, X, M)
        worst = max(worst, float(np.max(tc.frob(zeta.d_L(X, L) - M))))
    _criterion(
        "flow-rule round-trip residual <= 1e-10, quadratic and quartic",
        worst <= 1e-10, "worst %.2e" % worst,
    )


@pytest.mark.parametrize("bc", ["periodic", "slip-box"])
def test_exact_mass_conservation(bc):
    grid = Grid((8, 8), (1.0, 1.0), bc)
    ops = GridOps(grid)
    model = default_model()
    s = st.State.rest(grid)
    g = np.zeros(2)
    if bc == "periodic":
        X = grid.coords()
        s.v[..., 0] = 0.03 * np.sin(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
        s.v[..., 1] = 0.03 * np.cos(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    else:
        g = np.array([0.0, -0.1])
    cfg = st.StepConfig(tau=5e-3)
    m0 = ops.integrate(s.rho)
    for _ in range(200):
        s, _ = st.step(s, model, g, cfg, ops)
    drift = abs(ops.integrate(s.rho) - m0) / m0
    _criterion(
        "exact discrete mass conservation over 200 steps (%s) <= 1e-12" % bc,
        drift <= 1e-12, "relative drift %.2e" % drift,
    )


def test_positivity_invariants_all_scenarios(scenario_ledgers):
    worst_rho = min(np.min(led["min_rho"]) for led in scenario_ledgers.values())
    worst_det = min(np.min(led["min_detFe"]) for led in scenario_ledgers.values())
    _criterion(
        "positivity: min rho > 0 and min det Fe > 0 on every accepted step "
        "of every shipped scenario",
        worst_rho > 0 and worst_det > 0,
        "min rho %.3g, min det Fe %.3g" % (worst_rho, worst_det),
    )


def test_0d_oracle_agreement_maxwell():
    model = default_model()
    G = np.zeros((3, 3))
    G[0, 1] = 0.3

    def drive(t):
        return G

    taus = [2e-2, 1e-2, 5e-3]
    ref = integrate_0d_reference(Oracle0DConfig(
        model=model, grad_v=drive, T=0.4, tau_fine=5e-5, tau_test=taus[-1]))
    errs = []
    for tau in taus:
        traj = st.kinematic_drive(model, drive, tau=tau, T=0.4)
        errs.append(float(np.max(np.abs(traj["Fe"][-1] - ref["Fe"][-1]))))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(errs[i + 1] < errs[i] for i in range(2)) \
        and all(0.8 <= o <= 1.2 for o in orders)
    _criterion(
        "0D stepper vs RK4 reference: error decreasing with tau-order in "
        "[0.8, 1.2] over 3 levels",
        ok, "errors %s, orders %s"
        % (["%.2e" % e for e in errs], ["%.3f" % o for o in orders]),
    )


def test_rigid_rotation_energy_drift():
    model = default_model(zeta_vp=mat.QuadraticViscoplastic(theta=0.0))
    omega = 0.7
    W = np.array([[0.0, -omega, 0.0], [omega, 0.0, 0.0], [0.0, 0.0, 0.0]])
    T = 1.0
    ref = integrate_0d_reference(Oracle0DConfig(
        model=model, grad_v=lambda t: W, Fe0=np.diag([1.2, 0.9, 1.0]),
        T=T, tau_fine=1e-3))
    drift = float(np.max(np.abs(ref["energy"] - ref["energy"][0]))) / T
    _criterion(
        "rigid-rotation stored-energy drift <= 1e-10 per unit time at tau=1e-3",
        drift <= 1e-10, "drift %.2e" % drift,
    )


def test_det_fe_law_exponential():
    model = default_model()
    a = 0.3
    ref = integrate_0d_reference(Oracle0DConfig(
        model=model, grad_v=lambda t: (a / 3.0) * np.eye(3), T=0.5,
        tau_fine=1e-3))
    exact = ref["det_Fe"][0] * np.exp(a * ref["t"])
    err = float(np.max(np.abs(ref["det_Fe"] - exact)))
    _criterion(
        "constant-div drive reproduces det Fe = det Fe(0) exp(a t) to 1e-9",
        err <= 1e-9, "max error %.2e" % err,
    )


def _energy_residual_orders(p_hyper):
    grid = Grid((16, 16), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = default_model(p_hyper=p_hyper)
    s0 = st.State.rest(grid)
    X = grid.coords()
    s0.v[..., 0] = 0.05 * np.sin(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    s0.v[..., 1] = 0.05 * np.cos(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    maxima = []
    for tau in (8e-3, 4e-3, 2e-3):
        acc = {"max": 0.0}

        def sink(s, rep, led, acc=acc):
            acc["max"] = max(acc["max"], abs(led.residual))

        cfg = st.StepConfig(tau=tau, transport_scheme="central")
        st.run(s0.copy(), model, np.zeros(2), cfg, 0.16, ops=ops, sink=sink)
        maxima.append(acc["max"])
    return [np.log2(maxima[i] / maxima[i + 1]) for i in range(2)], maxima


@pytest.mark.parametrize("p_hyper", [2.0, 4.0])
def test_energy_inequality_residual_order(p_hyper):
    orders, maxima = _energy_residual_orders(p_hyper)
    ok = all(maxima[i + 1] < maxima[i] for i in range(2)) \
        and all(o >= 0.9 for o in orders)
    _criterion(
        "energy-balance residual decreases under tau-refinement at order "
        ">= 0.9 on the smooth shear scenario (p=%g, 16^2)" % p_hyper,
        ok, "orders %s" % ["%.3f" % o for o in orders],
    )


def test_truncation_elimination():
    def run(lam):
        grid = Grid((12, 12), (1.0, 1.0), "periodic")
        ops = GridOps(grid)
        model = default_model(truncation=mat.TruncationParams(lam))
        s = st.State.rest(grid)
        X = grid.coords()
        s.v[..., 0] = 0.05 * np.sin(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
        s.v[..., 1] = 0.05 * np.cos(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
        cfg = st.StepConfig(tau=5e-3, transport_scheme="central")
        frac = 0.0
        for _ in range(40):
            s, rep = st.step(s, model, np.zeros(2), cfg, ops)
            frac = max(frac, rep.monitors["trunc_active_frac"])
        return s, frac

    s1, f1 = run(4.0)
    s2, f2 = run(8.0)
    diff = max(float(np.max(np.abs(s1.v - s2.v))),
               float(np.max(np.abs(s1.Fe - s2.Fe))),
               float(np.max(np.abs(s1.rho - s2.rho))))
    tol = 10.0 * st.StepConfig().tol_momentum
    _criterion(
        "truncation elimination: zero activation on the benign scenario and "
        "lam vs 2 lam trajectories within 10x solver tolerance",
        f1 == 0.0 and f2 == 0.0 and diff <= tol,
        "activation %g/%g, trajectory diff %.2e" % (f1, f2, diff),
    )


def test_discrete_gronwall_certificate():
    grng = np.random.default_rng(77)
    ok = True
    for _ in range(1000):
        n = int(grng.integers(1, 25))
        tau = float(grng.uniform(0.01, 0.2))
        a = grng.uniform(0.0, 0.9 / tau, size=n)
        b = grng.uniform(0.0, 2.0, size=n)
        C = float(grng.uniform(0.0, 3.0))
        slack = grng.uniform(0.0, 1.0, size=n)
        y = np.zeros(n)
        acc_ay = acc_b = 0.0
        for k in range(n):
            acc_b += tau * b[k]
            y[k] = slack[k] * (C + acc_ay + acc_b) / (1.0 - tau * a[k])
            acc_ay += tau * a[k] * y[k]
        cert = dg.gronwall_bound(C, tau, a, b)
        ok = ok and bool(np.all(y <= cert.bounds * (1 + 1e-12) + 1e-12))
    cert = dg.gronwall_bound(1.0, 0.1, np.ones(10), np.zeros(10))
    worked = abs(cert.bound_at(10) - 3.375) < 1e-3
    _criterion(
        "discrete Gronwall: 1000 random recursions respect the bound; worked "
        "example (C=1, a=1, tau=0.1, k=10) = 3.375 to 1e-3",
        ok and worked, "worked example %.6f" % cert.bound_at(10),
    )


def test_damage_criteria(scenario_ledgers):
    # grid: monotone, bounded, dissipation column nonnegative
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = default_model(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0, g_c=0.05),
        zeta_dm=mat.DamagePotential(G=5.0, mode="unidirectional"))
    s = st.State.rest(grid)
    s.Fe[...] = np.diag([1.25, 0.85, 1.0])
    cfg = st.StepConfig(tau=5e-3)
    prev = s.alpha.copy()
    mono = bounds = True
    for _ in range(20):
        s, _ = st.step(s, model, np.zeros(2), cfg, ops)
        mono = mono and bool(np.all(s.alpha <= prev + 1e-12))
        bounds = bounds and bool(np.all((s.alpha >= -1e-10) & (s.alpha <= 1 + 1e-10)))
        prev = s.alpha.copy()
    led = scenario_ledgers["damage_bar"]
    diss_ok = bool(np.all(led["diss_damage"] >= 0.0))

    # 0D trajectory vs an independent backward-Euler oracle
    Fe0 = np.diag([1.3, 0.8, 1.0])
    tau, n = 5e-3, 40
    traj = st.kinematic_drive(model, lambda t: np.zeros((3, 3)), Fe0=Fe0,
                              tau=tau, T=tau * n)
    Fe, alpha = Fe0.copy(), 1.0
    for _ in range(n):
        def res_fe(u, Fe=Fe, alpha=alpha):
            F = u.reshape(3, 3)
            L = mat.truncated_plastic_rate_L(
                model.phi, model.zeta_vp, model.lam, X2[None], F[None],
                np.array([alpha]))[0]
            return (F - Fe - tau * (-F @ L)).ravel()

        u, _, okf, _ = scipy.optimize.fsolve(res_fe, Fe.ravel(), full_output=True)
        assert okf == 1
        Fe = u.reshape(3, 3)

        def res_a(a):
            r = mat.damage_rate_D(model.phi, model.zeta_dm, model.lam,
                                  X2[None], Fe[None], np.array([a]))[0]
            return a - alpha - tau * r

        if res_a(alpha) * res_a(0.0) < 0:
            alpha = scipy.optimize.brentq(res_a, 0.0, alpha, xtol=1e-14)
    err0d = max(float(np.max(np.abs(traj["Fe"][-1] - Fe))),
                abs(float(traj["alpha"][-1]) - alpha))
    _criterion(
        "damage: unidirectional monotonicity, bounds in [0,1], nonnegative "
        "dissipation column, 0D trajectory matches oracle to 1e-8",
        mono and bounds and diss_ok and err0d <= 1e-8 and np.min(prev) < 1.0,
        "0D error %.2e" % err0d,
    )


def test_diffusion_criteria(scenario_ledgers):
    grid = Grid((10, 10), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    a0 = mat.two_phase_disk(0.25, 1.15, (0.5, 0.5), 0.22)
    model = mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=1.0, c_alpha=2.0, a0=a0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.1),
        diffusion=mat.DiffusionLaw(m0=1.0, m1=0.5),
        mu_visc=0.5, lam_visc=0.2, nu=1e-3,
    )
    s = st.State.rest(grid)
    s.alpha[...] = 0.6
    cfg = st.StepConfig(tau=0.01, freeze_momentum=True)
    total0 = ops.integrate(s.alpha)
    worst_comp = worst_cons = 0.0
    for _ in range(20):
        s, rep = st.step(s, model, np.zeros(2), cfg, ops)
        worst_comp = max(worst_comp, rep.complementarity_residual)
        worst_cons = max(worst_cons, abs(ops.integrate(s.alpha) - total0) / total0)
    led = scenario_ledgers["diffusion_swelling"]
    diss_ok = bool(np.all(led["diss_diffusion"] >= 0.0))
    _criterion(
        "diffusion: complementarity residual <= 1e-9 every step, diffusant "
        "total conserved with v = 0, dissipation >= 0",
        worst_comp <= 1e-9 and worst_cons <= 1e-11 and diss_ok,
        "complementarity %.2e, conservation %.2e" % (worst_comp, worst_cons),
    )


def test_spatial_order_manufactured():
    from eulervisc.oracle import manufactured_order

    report = manufactured_order(ns=(16, 32, 64))
    orders = [o for key in ("continuity", "momentum")
              for o in report["orders"][key]]
    ok = all(1.8 <= o <= 2.2 for o in orders)
    _criterion(
        "manufactured-solution spatial residual order in [1.8, 2.2]",
        ok, "orders %s" % ["%.3f" % o for o in orders],
    )
