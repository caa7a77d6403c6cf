import numpy as np
import pytest
import scipy.optimize

import eulervisc.material as mat
import eulervisc.stepper as st
import eulervisc.tensor_core as tc
from eulervisc.grid_ops import Grid, GridOps


def default_model(**kw):
    args = dict(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.2),
        mu_visc=0.5, lam_visc=0.2, nu=1e-3,
    )
    args.update(kw)
    return mat.MaterialModel(**args)


def smooth_shear_state(grid, a=0.05):
    s = st.State.rest(grid)
    X = grid.coords()
    s.v[..., 0] = a * np.sin(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    s.v[..., 1] = a * np.cos(2 * np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    return s


def test_state_validation():
    grid = Grid((6, 6), (1.0, 1.0), "periodic")
    s = st.State.rest(grid)
    s.rho[0, 0] = 0.0
    with pytest.raises(ValueError):
        s.validate()
    s = st.State.rest(grid)
    s.alpha[0, 0] = 1.5
    with pytest.raises(ValueError):
        s.validate()


def test_rest_state_is_fixed_point():
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    s = st.State.rest(grid)
    new, rep = st.step(s, default_model(), np.zeros(2), st.StepConfig(tau=0.01), ops)
    assert np.max(np.abs(new.v)) < 1e-13
    assert np.max(np.abs(new.rho - 1.0)) < 1e-13
    assert np.max(np.abs(new.Fe - np.eye(3))) < 1e-13


@pytest.mark.parametrize("bc,g", [("periodic", (0.0, 0.0)),
                                  ("slip-box", (0.0, -0.1))])
def test_mass_conserved_200_steps(bc, g):
    grid = Grid((8, 8), (1.0, 1.0), bc)
    ops = GridOps(grid)
    s = smooth_shear_state(grid, a=0.03) if bc == "periodic" else st.State.rest(grid)
    model = default_model()
    cfg = st.StepConfig(tau=5e-3)
    m0 = ops.integrate(s.rho)
    for _ in range(200):
        s, _ = st.step(s, model, np.asarray(g), cfg, ops)
    assert abs(ops.integrate(s.rho) - m0) <= 1e-12 * m0


def test_slip_box_wall_normal_velocity_zero():
    grid = Grid((8, 8), (1.0, 1.0), "slip-box")
    ops = GridOps(grid)
    s = st.State.rest(grid)
    model = default_model()
    for _ in range(5):
        s, _ = st.step(s, model, np.array([0.0, -0.2]), st.StepConfig(tau=5e-3), ops)
    for axis in range(2):
        assert np.max(np.abs(s.v[..., axis][grid.wall_mask(axis)])) == 0.0


def test_xi_transport_exact_for_uniform_velocity():
    grid = Grid((10, 10), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    s = st.State.rest(grid)
    s.v[..., 0], s.v[..., 1] = 0.3, -0.2
    model = default_model()
    cfg = st.StepConfig(tau=0.01)
    new, _ = st.step(s, model, np.zeros(2), cfg, ops)
    expect = grid.coords() - cfg.tau * np.array([0.3, -0.2])
    assert np.max(np.abs(new.xi - expect)) < 1e-11
    assert np.max(np.abs(new.v - s.v)) < 1e-12  # translation is exact


def test_trajectory_self_convergence_first_order():
    grid = Grid((12, 12), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = default_model()
    s0 = smooth_shear_state(grid)
    finals = []
    for tau in (8e-3, 4e-3, 2e-3):
        cfg = st.StepConfig(tau=tau, transport_scheme="central")
        finals.append(st.run(s0.copy(), model, np.zeros(2), cfg, 0.08, ops=ops))
    e0 = ops.norm(finals[0].v - finals[1].v) + ops.norm(finals[0].Fe - finals[1].Fe)
    e1 = ops.norm(finals[1].v - finals[2].v) + ops.norm(finals[1].Fe - finals[2].Fe)
    assert 0.8 <= np.log2(e0 / e1) <= 1.4


def test_admissibility_rejected():
    grid = Grid((8, 8), (1.0, 1.0), "slip-box")
    s = st.State.rest(grid)
    with pytest.raises(ValueError):
        st.run(s, default_model(), np.array([0.0, -5.0]), st.StepConfig(tau=0.5),
               1.0, grid=grid)


def test_retry_budget_reported():
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    s = st.State.rest(grid)
    s.v[..., 0] = 50.0 * np.sin(2 * np.pi * grid.coords()[..., 0])  # violent
    cfg = st.StepConfig(tau=0.05, retry_budget=0, max_newton=3,
                        continuation_stages=0)
    with pytest.raises(st.StepFailure):
        st.run(s, default_model(), np.zeros(2), cfg, 0.5, grid=grid)


# ---------------------------------------------------------------------------
# 0D staggering vs independent backward-Euler oracles


def _independent_be_fe(model, Gv, Fe0, alpha, tau, n):
    """Backward Euler on Fe via scipy fsolve (independent of the
    stepper's Newton implementation)."""
    X = np.zeros(2)
    Fe = Fe0.copy()
    for _ in range(n):
        def res(u):
            F = u.reshape(3, 3)
            L = mat.truncated_plastic_rate_L(
                model.phi, model.zeta_vp, model.lam, X[None], F[None],
                np.array([alpha]))[0]
            return (F - Fe - tau * (Gv @ F - F @ L)).ravel()

        u, info, ok, msg = scipy.optimize.fsolve(res, Fe.ravel(), full_output=True)
        assert ok == 1, msg
        Fe = u.reshape(3, 3)
    return Fe


def test_kinematic_drive_matches_independent_be():
    model = default_model()
    G = np.zeros((3, 3))
    G[0, 1] = 0.4
    tau, n = 5e-3, 40
    traj = st.kinematic_drive(model, lambda t: G, tau=tau, T=tau * n)
    ref = _independent_be_fe(model, G, np.eye(3), 1.0, tau, n)
    assert np.max(np.abs(traj["Fe"][-1] - ref)) < 1e-9


def test_damage_0d_matches_independent_be():
    model = default_model(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0, g_c=0.05),
        zeta_dm=mat.DamagePotential(G=5.0, mode="unidirectional"),
    )
    Fe0 = np.diag([1.3, 0.8, 1.0])
    tau, n = 5e-3, 40
    traj = st.kinematic_drive(model, lambda t: np.zeros((3, 3)), Fe0=Fe0,
                              tau=tau, T=tau * n)
    # independent BE staggering: fsolve for Fe, brentq for alpha
    X = np.zeros(2)
    Fe, alpha = Fe0.copy(), 1.0
    for _ in range(n):
        Fe = _independent_be_fe(model, np.zeros((3, 3)), Fe, alpha, tau, 1)

        def res_a(a):
            r = mat.damage_rate_D(model.phi, model.zeta_dm, model.lam,
                                  X[None], Fe[None], np.array([a]))[0]
            return a - alpha - tau * r

        if res_a(alpha) * res_a(0.0) < 0:
            alpha = scipy.optimize.brentq(res_a, 0.0, alpha, xtol=1e-14)
    assert abs(traj["alpha"][-1] - alpha) < 1e-8
    assert np.max(np.abs(traj["Fe"][-1] - Fe)) < 1e-8
    assert np.all(np.diff(traj["alpha"]) <= 1e-12)  # unidirectional


# ---------------------------------------------------------------------------
# damage and diffusion grid updates


def damage_model(**kw):
    return default_model(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0, g_c=0.05),
        zeta_dm=mat.DamagePotential(G=5.0, mode="unidirectional"), **kw)


@pytest.mark.parametrize("coupling", ["gauss-seidel", "monolithic"])
def test_damage_grid_monotone_bounded(coupling):
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    s = st.State.rest(grid)
    s.Fe[...] = np.diag([1.25, 0.85, 1.0])
    model = damage_model()
    cfg = st.StepConfig(tau=5e-3, damage_coupling=coupling)
    prev_alpha = s.alpha.copy()
    for _ in range(20):
        s, rep = st.step(s, model, np.zeros(2), cfg, ops)
        assert np.all(s.alpha <= prev_alpha + 1e-12)
        assert np.all(s.alpha >= -1e-10) and np.all(s.alpha <= 1 + 1e-10)
        prev_alpha = s.alpha.copy()
    assert np.min(s.alpha) < 1.0  # damage actually evolved


def test_damage_couplings_agree_to_first_order():
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = damage_model()
    outs = {}
    for coupling in ("gauss-seidel", "monolithic"):
        s = st.State.rest(grid)
        s.Fe[...] = np.diag([1.25, 0.85, 1.0])
        cfg = st.StepConfig(tau=5e-3, damage_coupling=coupling)
        for _ in range(10):
            s, _ = st.step(s, model, np.zeros(2), cfg, ops)
        outs[coupling] = s
    diff = np.max(np.abs(outs["gauss-seidel"].alpha - outs["monolithic"].alpha))
    assert 0 < diff < 1e-4


def diffusion_model():
    a0 = mat.two_phase_disk(0.25, 1.15, (0.5, 0.5), 0.22)
    return mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=1.0, c_alpha=2.0, a0=a0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.1),
        diffusion=mat.DiffusionLaw(m0=1.0, m1=0.5),
        mu_visc=0.5, lam_visc=0.2, nu=1e-3,
    )


def test_diffusion_conserves_and_satisfies_complementarity():
    grid = Grid((10, 10), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    s = st.State.rest(grid)
    s.alpha[...] = 0.6
    model = diffusion_model()
    cfg = st.StepConfig(tau=0.01, freeze_momentum=True)
    total0 = ops.integrate(s.alpha)
    for _ in range(20):
        s, rep = st.step(s, model, np.zeros(2), cfg, ops)
        assert rep.complementarity_residual <= 1e-9
        assert abs(ops.integrate(s.alpha) - total0) <= 1e-12 * total0
    assert np.ptp(s.alpha) > 0.1  # the diffusant actually moved


def test_diffusion_uniform_equilibrium_fixed_point():
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=1.0, c_alpha=2.0, a0=0.5),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.1),
        diffusion=mat.DiffusionLaw(m0=1.0),
    )
    s = st.State.rest(grid)
    s.alpha[...] = 0.5
    new, _ = st.step(s, model, np.zeros(2),
                     st.StepConfig(tau=0.01, freeze_momentum=True), ops)
    assert np.max(np.abs(new.alpha - 0.5)) == 0.0
    assert np.ptp(new.mu) == 0.0


def test_diffusion_active_set_pins_bounds():
    """Strong wells outside [0,1] drive alpha onto both bounds; the
    normal cone keeps it admissible."""
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    a0 = mat.two_phase_slab(-0.8, 1.8, 0, 0.5)
    model = mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=1.0, c_alpha=20.0, a0=a0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.1),
        diffusion=mat.DiffusionLaw(m0=1.0),
    )
    s = st.State.rest(grid)
    s.alpha[...] = 0.5
    cfg = st.StepConfig(tau=0.02, freeze_momentum=True)
    for _ in range(15):
        s, rep = st.step(s, model, np.zeros(2), cfg, ops)
        assert rep.complementarity_residual <= 1e-9
    assert np.any(s.alpha == 0.0)
    assert np.any(s.alpha == 1.0)
    assert np.all((s.alpha >= 0.0) & (s.alpha <= 1.0))
