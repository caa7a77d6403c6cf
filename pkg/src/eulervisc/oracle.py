"""Independent reference computations.

These were built before the solver and are kept free of solver
internals: a high-resolution 0D integrator for the constitutive
subsystem (classical RK4), central finite-difference checks of the
analytic constitutive derivatives, and a manufactured-solution residual
evaluator for the spatial assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import material as mat
from . import tensor_core as tc
from .grid_ops import Grid, GridOps

__all__ = [
    "Oracle0DConfig",
    "integrate_0d_reference",
    "fd_stress_check",
    "branch_samples",
    "manufactured_residual",
    "manufactured_order",
]


class OracleAbort(RuntimeError):
    """Reference trajectory left the admissible region."""

    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


# ---------------------------------------------------------------------------
# 0D reference integrator


@dataclass
class Oracle0DConfig:
    """Homogeneous (0D) constitutive drive for reference trajectories.

    grad_v maps time to a prescribed 3x3 velocity gradient; the
    subsystem Fe' = grad_v Fe - Fe L(X, Fe, alpha), alpha' = D(X, Fe,
    alpha) is integrated by fixed-step classical RK4.  When tau_test is
    given, tau_fine must be at least 100x finer.
    """

    model: mat.MaterialModel
    grad_v: Callable[[float], np.ndarray]
    Fe0: np.ndarray = field(default_factory=lambda: np.eye(3))
    alpha0: float = 1.0
    T: float = 1.0
    tau_fine: float = 1e-4
    X: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tau_test: float | None = None

    def __post_init__(self):
        if self.tau_test is not None and self.tau_fine > self.tau_test / 100.0:
            raise ValueError("tau_fine must satisfy tau_fine <= tau_test / 100")


def _rhs_0d(cfg: Oracle0DConfig, t, Fe, alpha):
    model = cfg.model
    X = cfg.X[None]
    Fe_b = Fe[None]
    a_b = np.array([alpha])
    L = mat.truncated_plastic_rate_L(model.phi, model.zeta_vp, model.lam, X, Fe_b, a_b)[0]
    dFe = cfg.grad_v(t) @ Fe - Fe @ L
    if model.zeta_dm is not None:
        dal = float(
            mat.damage_rate_D(
                model.phi, model.zeta_dm, model.lam, X, Fe_b, a_b,
                literal_sign=model.literal_damage_sign,
            )[0]
        )
    else:
        dal = 0.0
    return dFe, dal


def integrate_0d_reference(cfg: Oracle0DConfig):
    """RK4 reference trajectory of the homogeneous constitutive system.

    Returns dict with times, Fe, alpha, det_Fe and the truncated stored
    energy along the trajectory.  Aborts (with the failure time) if
    det Fe falls below 1e-8.
    """
    n = int(round(cfg.T / cfg.tau_fine))
    tau = cfg.T / n
    Fe = np.array(cfg.Fe0, dtype=float)
    alpha = float(cfg.alpha0)
    times = np.empty(n + 1)
    fes = np.empty((n + 1, 3, 3))
    alphas = np.empty(n + 1)
    times[0], fes[0], alphas[0] = 0.0, Fe, alpha
    for k in range(n):
        t = k * tau
        k1F, k1a = _rhs_0d(cfg, t, Fe, alpha)
        k2F, k2a = _rhs_0d(cfg, t + tau / 2, Fe + tau / 2 * k1F, alpha + tau / 2 * k1a)
        k3F, k3a = _rhs_0d(cfg, t + tau / 2, Fe + tau / 2 * k2F, alpha + tau / 2 * k2a)
        k4F, k4a = _rhs_0d(cfg, t + tau, Fe + tau * k3F, alpha + tau * k3a)
        Fe = Fe + tau / 6.0 * (k1F + 2 * k2F + 2 * k3F + k4F)
        alpha = alpha + tau / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        if tc.det(Fe) < 1e-8:
            raise OracleAbort("det Fe collapsed in reference trajectory", t=t + tau)
        times[k + 1], fes[k + 1], alphas[k + 1] = (k + 1) * tau, Fe, alpha
    energy = mat.truncate_energy(
        cfg.model.phi, cfg.model.lam, np.broadcast_to(cfg.X, (n + 1, cfg.X.size)), fes, alphas
    )
    return {
        "t": times,
        "Fe": fes,
        "alpha": alphas,
        "det_Fe": tc.det(fes),
        "energy": energy,
    }


# ---------------------------------------------------------------------------
# finite-difference constitutive check


def _seam_safe(F, lam, fd_step=1e-5, safety=50.0):
    """Mask of samples whose FD stencil cannot straddle a cutoff seam.

    A perturbation of size h in one entry moves |F| by at most h and
    det F by at most |cof F| h, so the distance to each seam must
    exceed a safety multiple of those sensitivities.
    """
    fn = tc.frob(F)
    J = tc.det(F)
    h = fd_step
    cofn = tc.frob(tc.cof(F))
    df = np.minimum(np.abs(fn - lam), np.abs(fn - 2.0 * lam))
    dd = np.minimum(np.abs(J - 1.0 / lam), np.abs(J - 0.5 / lam))
    return (df > safety * h) & (dd > safety * h * np.maximum(cofn, 1.0))


def branch_samples(lam, n_per_branch, rng, fd_margin=1e-3):
    """Random distortion samples covering every truncation branch.

    Samples keep a margin from the seams so that the central-difference
    stencil never straddles a C^1 kink.  Returns {branch: (m, 3, 3)}.
    """
    out = {}

    def _rot(k):
        A = rng.normal(size=(k, 3, 3))
        Q = np.empty_like(A)
        for i in range(k):
            q, r = np.linalg.qr(A[i])
            q = q * np.sign(np.diag(r))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            Q[i] = q
        return Q

    def _accept(F, lo_f, hi_f, lo_d, hi_d):
        fn = tc.frob(F)
        J = tc.det(F)
        band = (fn > lo_f) & (fn < hi_f) & (J > lo_d) & (J < hi_d)
        return band & _seam_safe(F, lam)

    m = fd_margin

    # untruncated: |F| < lam - m, det > 1/lam + m
    F = tc.identity((4 * n_per_branch,)) + rng.normal(scale=0.2, size=(4 * n_per_branch, 3, 3))
    keep = _accept(F, 0.0, lam - m, 1.0 / lam + m, np.inf)
    out["untruncated"] = F[keep][:n_per_branch]

    # frob blend: lam + m < |F| < 2 lam - m, det > 1/lam + m
    base = tc.identity((4 * n_per_branch,)) + rng.normal(scale=0.1, size=(4 * n_per_branch, 3, 3))
    target = rng.uniform(lam + 2 * m, 2 * lam - 2 * m, size=4 * n_per_branch)
    F = base * (target / tc.frob(base))[..., None, None]
    keep = _accept(F, lam + m, 2 * lam - m, 1.0 / lam + m, np.inf)
    out["frob_blend"] = F[keep][:n_per_branch]

    # det blend: 1/(2 lam) + m < det < 1/lam - m, |F| < lam - m
    base = tc.identity((4 * n_per_branch,)) + rng.normal(scale=0.1, size=(4 * n_per_branch, 3, 3))
    target = rng.uniform(0.5 / lam + 2 * m, 1.0 / lam - 2 * m, size=4 * n_per_branch)
    F = base * np.cbrt(target / tc.det(base))[..., None, None]
    keep = _accept(F, 0.0, lam - m, 0.5 / lam + m, 1.0 / lam - m)
    out["det_blend"] = F[keep][:n_per_branch]

    # both blends active
    k = 4 * n_per_branch
    fr = rng.uniform(lam + 2 * m, 2 * lam - 2 * m, size=k)
    dt = rng.uniform(0.5 / lam + 2 * m, 1.0 / lam - 2 * m, size=k)
    a = fr * rng.uniform(0.93, 0.99, size=k)
    rest = np.sqrt(np.maximum(fr * fr - a * a, 1e-12)) / np.sqrt(2.0)
    b = rest
    c = dt / (a * b)
    D = np.zeros((k, 3, 3))
    D[:, 0, 0], D[:, 1, 1], D[:, 2, 2] = a, b, c
    F = _rot(k) @ D @ _rot(k)
    keep = _accept(F, lam + m, 2 * lam - m, 0.5 / lam + m, 1.0 / lam - m)
    out["both_blends"] = F[keep][:n_per_branch]

    # dead zone, large |F|
    F = rng.normal(scale=2.0 * lam, size=(n_per_branch, 3, 3))
    F = F * (rng.uniform(2 * lam + 1.0, 4 * lam, size=n_per_branch) / tc.frob(F))[..., None, None]
    out["dead_frob"] = F

    # dead zone, small or negative det with small |F|
    base = tc.identity((4 * n_per_branch,)) + rng.normal(scale=0.1, size=(4 * n_per_branch, 3, 3))
    target = rng.uniform(0.05 / lam, 0.5 / lam - 2 * m, size=4 * n_per_branch)
    F = base * np.cbrt(target / tc.det(base))[..., None, None]
    keep = _accept(F, 0.0, lam - m, -np.inf, 0.5 / lam - m)
    out["dead_det"] = F[keep][:n_per_branch]

    for name, arr in out.items():
        if arr.shape[0] < max(2, n_per_branch // 2):
            raise RuntimeError("branch sampler starved for %s" % name)
    return out


def fd_stress_check(model: mat.MaterialModel, n_samples=120, seed=3, fd_step=1e-5, X_dim=2):
    """Central-difference verification of the truncated-energy derivatives.

    Compares the analytic d phi_lam / dF and d phi_lam / d alpha against
    second-order central differences on samples covering every
    truncation branch.  Relative error uses a unit absolute floor so the
    stress-free reference state is scored on an absolute scale.
    """
    rng = np.random.default_rng(seed)
    lam = model.lam
    phi = model.phi
    per = max(2, n_samples // 6)
    samples = branch_samples(lam, per, rng)

    report = {"per_branch_dF": {}, "per_branch_dalpha": {}}
    worst_dF, worst_da, worst_branch = 0.0, 0.0, "untruncated"
    for name, F in samples.items():
        m = F.shape[0]
        X = rng.uniform(0.0, 1.0, size=(m, X_dim))
        alpha = rng.uniform(0.1, 0.9, size=m)

        ana = mat.trunc_energy_dF(phi, lam, X, F, alpha)
        fd = np.zeros_like(ana)
        # 4th-order central differences: the blend polynomials carry
        # large third derivatives near the double-blend corner, where a
        # plain 3-point stencil cannot resolve the derivative to 1e-6
        h = fd_step
        for i in range(3):
            for j in range(3):
                def ev(s, i=i, j=j):
                    Fs = F.copy()
                    Fs[:, i, j] += s
                    return mat.truncate_energy(phi, lam, X, Fs, alpha)

                fd[:, i, j] = (-ev(2 * h) + 8.0 * ev(h) - 8.0 * ev(-h) + ev(-2 * h)) / (12.0 * h)
        err = tc.frob(ana - fd) / (1.0 + tc.frob(ana) + tc.frob(fd))
        e = float(np.max(err)) if m else 0.0
        report["per_branch_dF"][name] = e
        if e > worst_dF:
            worst_dF, worst_branch = e, name

        ana_a = mat.trunc_energy_dalpha(phi, lam, X, F, alpha)
        ha = fd_step

        def eva(s):
            return mat.truncate_energy(phi, lam, X, F, alpha + s)

        fd_a = (-eva(2 * ha) + 8.0 * eva(ha) - 8.0 * eva(-ha) + eva(-2 * ha)) / (12.0 * ha)
        err_a = np.abs(ana_a - fd_a) / (1.0 + np.abs(ana_a) + np.abs(fd_a))
        ea = float(np.max(err_a)) if m else 0.0
        report["per_branch_dalpha"][name] = ea
        if ea > worst_da:
            worst_da = ea
            if ea > worst_dF:
                worst_branch = name

    report["worst_dF"] = worst_dF
    report["worst_dalpha"] = worst_da
    report["worst_branch"] = worst_branch
    report["n_total"] = int(sum(v.shape[0] for v in samples.values()))
    return report


# ---------------------------------------------------------------------------
# manufactured-solution residual


def _manufactured_fields(extent):
    """Symbolically derived smooth periodic (rho, v) with their steady
    continuity and momentum sources; returns lambdified callables."""
    import sympy as sym

    x, y = sym.symbols("x y", real=True)
    Lx, Ly = extent
    kx, ky = 2 * sym.pi / Lx, 2 * sym.pi / Ly
    rho = 1 + sym.Rational(1, 5) * sym.sin(kx * x) * sym.cos(ky * y)
    vx = sym.Rational(1, 10) * sym.sin(kx * x) * sym.sin(ky * y)
    vy = sym.Rational(1, 10) * sym.cos(kx * x) * sym.sin(ky * y)
    v = sym.Matrix([vx, vy])
    X = sym.Matrix([x, y])

    def div_vec(q):
        return sum(sym.diff(q[i], X[i]) for i in range(2))

    s_rho = div_vec(sym.Matrix([rho * vx, rho * vy]))

    eps = sym.Matrix(
        [
            [
                sym.Rational(1, 2) * (sym.diff(v[i], X[j]) + sym.diff(v[j], X[i]))
                for j in range(2)
            ]
            for i in range(2)
        ]
    )
    return x, y, rho, v, s_rho, eps, X


def manufactured_residual(grid: Grid, mu_visc=1.0, lam_visc=0.3, nu=1e-2):
    """Discrete residual norms of the steady manufactured solution.

    A smooth periodic (rho, v) pair with Fe = I (stress-free reference)
    is injected; the analytic continuity and momentum sources are
    derived symbolically, and the W-norms of the discrete residuals are
    returned.  Under h-refinement they decrease at the stencil order.
    """
    import sympy as sym

    if grid.bc != "periodic":
        raise ValueError("manufactured residual needs a periodic grid")
    x, y, rho, v, s_rho, eps, X = _manufactured_fields(grid.extent)

    def div_vec(q):
        return sum(sym.diff(q[i], X[i]) for i in range(2))

    # momentum source: conservative convection + Stokes viscosity
    # + linear hyperviscosity (p = 2), gravity off
    s_m = []
    for i in range(2):
        conv = div_vec(sym.Matrix([rho * v[i] * v[0], rho * v[i] * v[1]]))
        sigma = [
            2 * mu_visc * eps[i, j] + (lam_visc * (eps[0, 0] + eps[1, 1]) if i == j else 0)
            for j in range(2)
        ]
        visc = div_vec(sym.Matrix(sigma))
        lap = lambda f: sym.diff(f, x, 2) + sym.diff(f, y, 2)
        hyper = nu * lap(lap(v[i]))
        s_m.append(conv - visc + hyper)

    f_rho = sym.lambdify((x, y), rho, "numpy")
    f_v = [sym.lambdify((x, y), v[i], "numpy") for i in range(2)]
    f_srho = sym.lambdify((x, y), s_rho, "numpy")
    f_sm = [sym.lambdify((x, y), s_m[i], "numpy") for i in range(2)]

    ops = GridOps(grid)
    c = grid.coords()
    rho_h = np.asarray(f_rho(c[..., 0], c[..., 1]), dtype=float)
    v_h = np.stack([f_v[i](c[..., 0], c[..., 1]) for i in range(2)], axis=-1)

    from .stepper import mass_momentum_residual_fields

    R_rho, R_m = mass_momentum_residual_fields(
        ops, rho_h, v_h, rho_h, rho_h[..., None] * v_h,
        T_lag=np.zeros(grid.shape + (2, 2)),
        g=np.zeros(2), tau=1.0, mu_visc=mu_visc, lam_visc=lam_visc, nu=nu, p_hyper=2.0,
    )
    R_rho = R_rho - np.asarray(f_srho(c[..., 0], c[..., 1]), dtype=float)
    R_m = R_m - np.stack([f_sm[i](c[..., 0], c[..., 1]) for i in range(2)], axis=-1)
    return {"continuity": ops.norm(R_rho), "momentum": ops.norm(R_m)}


def manufactured_order(ns=(16, 32, 64), extent=(1.0, 1.0)):
    """Observed spatial order of the manufactured residuals."""
    res = [manufactured_residual(Grid((n, n), extent, "periodic")) for n in ns]
    orders = {}
    for key in ("continuity", "momentum"):
        vals = [r[key] for r in res]
        orders[key] = [float(np.log2(vals[i] / vals[i + 1])) for i in range(len(vals) - 1)]
    return {"norms": res, "orders": orders}
