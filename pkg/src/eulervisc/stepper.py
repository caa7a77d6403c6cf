"""Staggered (fractional-step) time integration.

One step solves, in order:

1. mass-momentum: the coupled implicit system for (rho, v) with the
   conservative (Cauchy) stress lagged at the previous step, Stokes
   viscosity and 2nd-grade hyperviscosity implicit, by Newton with an
   analytic Jacobian; convection is assembled in a skew-symmetric split
   that is exactly energy-neutral under the adjoint-consistent
   operators, and the accepted density additionally satisfies the
   discrete continuity equation to direct-solver precision so total
   mass is conserved exactly;
2. return-mapping transport: implicit linear advection of xi;
3. elastic distortion: implicit transport-reaction Newton solve for Fe
   with the inelastic flow rate evaluated at the new step;
4. optionally damage (Gauss-Seidel or monolithic coupling with Fe) or
   bound-constrained diffusion (primal-dual active set).

Failure of any stage raises StepFailure; `run` halves tau up to a
retry budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import material as mat
from . import tensor_core as tc
from .grid_ops import Grid, GridOps

__all__ = [
    "State",
    "StepConfig",
    "StepReport",
    "StepFailure",
    "mass_momentum_residual_fields",
    "solve_mass_momentum",
    "update_xi",
    "update_Fe",
    "update_damage",
    "update_diffusion",
    "step",
    "run",
    "kinematic_drive",
]


class StepFailure(RuntimeError):
    """A stage of the staggered step did not converge."""

    def __init__(self, stage, msg, residual=None):
        super().__init__("%s: %s" % (stage, msg))
        self.stage = stage
        self.residual = residual


@dataclass
class State:
    """Grid fields at one time level.

    rho > 0 and det Fe > 0 are hard invariants; alpha lives in [0, 1]
    (1 = intact); p = rho v pointwise.  Fe is stored as a full 3x3
    field even in 2D (plane-strain embedding); xi and v carry d
    components.
    """

    rho: np.ndarray
    v: np.ndarray
    Fe: np.ndarray
    xi: np.ndarray
    alpha: np.ndarray
    t: float = 0.0
    mu: np.ndarray | None = None  # chemical potential of the last diffusion solve

    @property
    def p(self):
        return self.rho[..., None] * self.v

    def validate(self):
        if np.any(self.rho <= 0):
            raise ValueError("density must be positive")
        if np.any(tc.det(self.Fe) <= 0):
            raise ValueError("elastic distortion must have positive determinant")
        if np.any(self.alpha < -1e-12) or np.any(self.alpha > 1 + 1e-12):
            raise ValueError("alpha must lie in [0, 1]")

    def copy(self):
        return State(
            self.rho.copy(), self.v.copy(), self.Fe.copy(), self.xi.copy(),
            self.alpha.copy(), self.t, None if self.mu is None else self.mu.copy(),
        )

    @staticmethod
    def rest(grid: Grid, rho0=1.0, alpha0=1.0):
        """Homogeneous stress-free state with identity return mapping."""
        shape = grid.shape
        return State(
            rho=np.full(shape, float(rho0)),
            v=np.zeros(shape + (grid.d,)),
            Fe=tc.identity(shape),
            xi=grid.coords().copy(),
            alpha=np.full(shape, float(alpha0)),
        )


@dataclass
class StepConfig:
    """Solver controls for one staggered step."""

    tau: float = 1e-2
    tol_momentum: float = 1e-11
    tol_transport: float = 1e-11
    max_newton: int = 40
    eps_reg: float = 1e-2
    delta_reg: float = 1e-2
    continuation_stages: int = 4
    r_reg: float = 4.0
    damage_coupling: str = "gauss-seidel"
    transport_scheme: str = "upwind"
    retry_budget: int = 4
    freeze_momentum: bool = False
    complementarity_tol: float = 1e-9

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tol_momentum <= 0 or self.tol_transport <= 0:
            raise ValueError("tolerances must be positive")
        if self.damage_coupling not in ("gauss-seidel", "monolithic"):
            raise ValueError("unknown damage coupling %r" % self.damage_coupling)


@dataclass
class StepReport:
    """Solver statistics and stability monitors for one accepted step."""

    newton_iters: int = 0
    transport_iters: int = 0
    momentum_residual: float = 0.0
    transport_residual: float = 0.0
    complementarity_residual: float = 0.0
    continuation_used: bool = False
    tau_used: float = 0.0
    tau_admissible: bool = True
    tau_divv: float = 0.0
    monitors: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers


def _embed_grad(ops: GridOps, v):
    """Velocity gradient embedded as 3x3 (plane strain in 2D)."""
    d = ops.grid.d
    Gv = ops.grad_vec(v)
    out = np.zeros(ops.grid.shape + (3, 3))
    out[..., :d, :d] = Gv
    return out


def _lagged_stress(ops: GridOps, model: mat.MaterialModel, state: State):
    """In-plane block of the truncated Cauchy stress at a state."""
    d = ops.grid.d
    T = mat.truncated_stress_T(model.phi, model.lam, state.xi, state.Fe, state.alpha)
    return T[..., :d, :d]


def _strain_rate(ops: GridOps, v):
    Gv = ops.grad_vec(v)
    return 0.5 * (Gv + np.swapaxes(Gv, -1, -2))


def _stokes_stress(ops: GridOps, v, mu_visc, lam_visc):
    eps = _strain_rate(ops, v)
    d = ops.grid.d
    trace = np.trace(eps, axis1=-2, axis2=-1)
    out = 2.0 * mu_visc * eps
    for i in range(d):
        out[..., i, i] += lam_visc * trace
    return out


def mass_momentum_residual_fields(
    ops: GridOps, rho, v, rho_prev, p_prev, T_lag, g, tau,
    mu_visc, lam_visc, nu, p_hyper, eps_reg=0.0, delta_reg=0.0, r_reg=4.0,
):
    """Pointwise residuals of the implicit mass-momentum system.

    Continuity: (rho - rho_prev)/tau + div(rho v) = 0.
    Momentum:   (rho v - p_prev)/tau + C(rho, v)
                - div(T_lag + Stokes(v)) + hyper(v) - rho g
                (+ optional eps/delta continuation terms) = 0,
    with the convection C in the skew split
    C_i = (div(p v_i) + (p . grad) v_i + v_i div p) / 2,
    which is consistent with div(rho v (x) v) and exactly
    energy-neutral under the adjoint-consistent operators.
    """
    d = ops.grid.d
    p = rho[..., None] * v

    R_rho = (rho - rho_prev) / tau + ops.div(p)

    S = _stokes_stress(ops, v, mu_visc, lam_visc) + T_lag
    divS = ops.div_tensor(S)
    hyp = ops.hyperstress_apply(v, nu, p_hyper)

    div_p = ops.div(p)
    conv = np.empty_like(v)
    for i in range(d):
        term1 = ops.div(p * v[..., i : i + 1])
        term2 = np.sum(p * ops.grad(v[..., i]), axis=-1)
        conv[..., i] = 0.5 * (term1 + term2 + v[..., i] * div_p)

    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g_field = np.broadcast_to(g, v.shape)
    else:
        g_field = g
    R_m = (p - p_prev) / tau + conv - divS + hyp - rho[..., None] * g_field

    if eps_reg > 0.0:
        if p_hyper == 2.0:
            R_m = R_m + eps_reg * v
        else:
            vmag = np.sqrt(np.sum(v * v, axis=-1))
            R_m = R_m + eps_reg * (vmag ** (p_hyper - 2.0))[..., None] * v
    if delta_reg > 0.0:
        Gr = ops.grad(rho)
        w = np.sum(Gr * Gr, axis=-1) ** ((r_reg - 2.0) / 2.0)
        flux = delta_reg * w[..., None] * Gr
        R_rho = R_rho - ops.div(flux)
        Gv = ops.grad_vec(v)
        R_m = R_m + np.einsum("...ij,...j->...i", Gv, flux)
    return R_rho, R_m


def _hyper_matrix(ops: GridOps, v, nu, p_hyper):
    """Sparse Jacobian of the hyperviscous residual w.r.t. v (dN x dN)."""
    d = ops.grid.d
    N = ops.grid.n
    key = "_hyp_B"
    if key not in ops._full_cache:
        rows = []
        for c in range(d):
            for i in range(d):
                for j in range(d):
                    op = ops.full_op("D", i) @ ops.full_op("D", j)
                    blocks = [None] * d
                    blocks[c] = op
                    rows.append(sp.hstack(
                        [b if b is not None else sp.csr_matrix((N, N)) for b in blocks],
                        format="csr",
                    ))
        B = sp.vstack(rows, format="csr")
        rows_adj = []
        for c in range(d):
            cols = []
            for cc in range(d):
                for i in range(d):
                    for j in range(d):
                        if cc == c:
                            cols.append(ops.full_op("adj", j) @ ops.full_op("adj", i))
                        else:
                            cols.append(sp.csr_matrix((N, N)))
            rows_adj.append(sp.hstack(cols, format="csr"))
        Badj = sp.vstack(rows_adj, format="csr")
        ops._full_cache[key] = (B, Badj)
    B, Badj = ops._full_cache[key]
    m = d * d * d
    if p_hyper == 2.0:
        return (nu * (Badj @ B)).tocsr()
    H = ops.hessian(v)  # (..., c, i, j)
    Hflat = np.moveaxis(H.reshape(ops.grid.shape + (m,)), -1, 0).reshape(m, N)
    mag2 = np.sum(Hflat * Hflat, axis=0)
    mag = np.sqrt(mag2)
    w = nu * mag ** (p_hyper - 2.0)
    W = sp.diags(np.tile(w, m))
    safe = np.where(mag2 > 0, mag2, 1.0)
    coef = nu * (p_hyper - 2.0) * mag ** (p_hyper - 2.0) / safe
    # rank-one per-node coupling across hessian components
    blocks = []
    for a in range(m):
        row = [sp.diags(coef * Hflat[a] * Hflat[b]) for b in range(m)]
        blocks.append(row)
    M = W + sp.bmat(blocks, format="csr")
    return (Badj @ M @ B).tocsr()


def _mass_momentum_jacobian(
    ops: GridOps, rho, v, T_unused, g, tau, mu_visc, lam_visc, nu, p_hyper,
    eps_reg=0.0, delta_reg=0.0, r_reg=4.0,
):
    """Analytic sparse Jacobian of the (rho, v) residual, unknowns
    ordered [rho, v_0, ..., v_{d-1}] with C-order flattened fields.

    The delta continuation terms use frozen |grad rho|^{r-2} weights
    (Picard linearization); everything else is exact.
    """
    d = ops.grid.d
    N = ops.grid.n
    I = sp.identity(N, format="csr")

    def dg(x):
        return sp.diags(np.asarray(x, dtype=float).ravel())

    A = [ops.full_op("adj", j) for j in range(d)]
    D = [ops.full_op("D", j) for j in range(d)]
    vj = [v[..., j] for j in range(d)]
    g = np.asarray(g, dtype=float)
    g_field = np.broadcast_to(g, v.shape) if g.ndim == 1 else g

    J = [[None] * (d + 1) for _ in range(d + 1)]

    # continuity row
    J[0][0] = I / tau - sum(A[j] @ dg(vj[j]) for j in range(d))
    for k in range(d):
        J[0][k + 1] = -A[k] @ dg(rho)
    if delta_reg > 0.0:
        Gr = ops.grad(rho)
        w = np.sum(Gr * Gr, axis=-1) ** ((r_reg - 2.0) / 2.0)
        J[0][0] = J[0][0] + sum(A[j] @ dg(delta_reg * w) @ D[j] for j in range(d))

    # viscous + hyperviscous velocity block, component-coupled
    hyp = _hyper_matrix(ops, v, nu, p_hyper)
    visc = [[None] * d for _ in range(d)]
    sum_AD = sum(A[j] @ D[j] for j in range(d))
    for i in range(d):
        for k in range(d):
            blk = mu_visc * (A[k] @ D[i]) + lam_visc * (A[i] @ D[k])
            if i == k:
                blk = blk + mu_visc * sum_AD
            visc[i][k] = blk

    div_p = ops.div(rho[..., None] * v)
    grad_v = [ops.grad(v[..., i]) for i in range(d)]  # grad_v[i][..., j] = D_j v_i

    for i in range(d):
        # d R_m_i / d rho
        conv_rho = -0.5 * sum(A[j] @ dg(vj[j] * vj[i]) for j in range(d))
        conv_rho = conv_rho + 0.5 * dg(sum(vj[j] * grad_v[i][..., j] for j in range(d)))
        conv_rho = conv_rho - 0.5 * dg(vj[i]) @ sum(A[j] @ dg(vj[j]) for j in range(d))
        J[i + 1][0] = dg(vj[i] / tau) + conv_rho - dg(g_field[..., i])
        # d R_m_i / d v_k
        for k in range(d):
            blk = visc[i][k].copy()
            blk = blk - 0.5 * (A[k] @ dg(rho * vj[i]))
            blk = blk + 0.5 * dg(rho * grad_v[i][..., k])
            blk = blk - 0.5 * dg(vj[i]) @ A[k] @ dg(rho)
            if i == k:
                blk = blk + dg(rho / tau)
                blk = blk - 0.5 * sum(A[j] @ dg(rho * vj[j]) for j in range(d))
                blk = blk + 0.5 * sum(dg(rho * vj[j]) @ D[j] for j in range(d))
                blk = blk + 0.5 * dg(div_p)
            blk = blk + hyp[i * N : (i + 1) * N, k * N : (k + 1) * N]
            if delta_reg > 0.0 and i == k:
                # companion term, frozen |grad rho|^{r-2} flux (Picard):
                # d/dv_k sum_j (D_j v_i) flux_j = delta_ik sum_j dg(flux_j) D_j
                Gr = ops.grad(rho)
                w = np.sum(Gr * Gr, axis=-1) ** ((r_reg - 2.0) / 2.0)
                blk = blk + sum(
                    dg(delta_reg * w * Gr[..., j]) @ D[j] for j in range(d)
                )
            if eps_reg > 0.0:
                if p_hyper == 2.0:
                    if i == k:
                        blk = blk + eps_reg * I
                else:
                    vmag2 = np.sum(v * v, axis=-1)
                    vmag = np.sqrt(vmag2)
                    safe = np.where(vmag2 > 0, vmag2, 1.0)
                    blk = blk + dg(
                        eps_reg * (p_hyper - 2.0) * vmag ** (p_hyper - 2.0) / safe
                        * vj[i] * vj[k]
                    )
                    if i == k:
                        blk = blk + dg(eps_reg * vmag ** (p_hyper - 2.0))
            J[i + 1][k + 1] = blk
    return sp.bmat(J, format="csr")


def _wall_rows(ops: GridOps):
    """Flat indices (into the stacked [rho, v...] vector) of strongly
    constrained wall-normal velocity components."""
    grid = ops.grid
    if grid.bc != "slip-box":
        return np.array([], dtype=int)
    N = grid.n
    rows = []
    for a in range(grid.d):
        m = grid.wall_mask(a).ravel()
        rows.append(N * (a + 1) + np.nonzero(m)[0])
    return np.concatenate(rows)


def solve_mass_momentum(prev: State, model: mat.MaterialModel, g, cfg: StepConfig,
                        ops: GridOps):
    """Implicit coupled (rho, v) solve with the lagged truncated stress.

    Newton with analytic Jacobian and backtracking line search; on
    divergence, retries along the (eps, delta) continuation path driven
    to zero in geometric stages.  The accepted density is re-solved
    from the discrete continuity equation at the converged velocity by
    a direct linear solve, which conserves total mass to round-off.
    """
    grid = ops.grid
    d, N = grid.d, grid.n
    tau = cfg.tau
    T_lag = _lagged_stress(ops, model, prev)
    p_prev = prev.p
    wall = _wall_rows(ops)

    def attempt(eps_reg, delta_reg, rho0, v0):
        rho = rho0.copy()
        v = v0.copy()
        if wall.size:
            vflat = v.reshape(N, d)
            for a in range(d):
                vflat[grid.wall_mask(a).ravel(), a] = 0.0
            v = vflat.reshape(v.shape)

        def residual(rho, v):
            R_rho, R_m = mass_momentum_residual_fields(
                ops, rho, v, prev.rho, p_prev, T_lag, g, tau,
                model.mu_visc, model.lam_visc, model.nu, model.p_hyper,
                eps_reg=eps_reg, delta_reg=delta_reg, r_reg=cfg.r_reg,
            )
            R = np.concatenate(
                [R_rho.ravel()] + [R_m[..., i].ravel() for i in range(d)]
            )
            if wall.size:
                vstack = np.concatenate([v[..., i].ravel() for i in range(d)])
                R[wall] = vstack[wall - N] / tau
            return R

        R = residual(rho, v)
        rnorm = np.linalg.norm(R) / np.sqrt(R.size)
        ref = max(1.0, rnorm)
        iters = 0
        for it in range(cfg.max_newton):
            if rnorm <= cfg.tol_momentum * ref:
                break
            J = _mass_momentum_jacobian(
                ops, rho, v, None, g, tau, model.mu_visc, model.lam_visc,
                model.nu, model.p_hyper, eps_reg=eps_reg, delta_reg=delta_reg,
                r_reg=cfg.r_reg,
            )
            if wall.size:
                J = J.tolil()
                J[wall, :] = 0.0
                J[wall, wall] = 1.0 / tau
                J = J.tocsr()
            try:
                dx = spla.spsolve(J.tocsc(), -R)
            except Exception as exc:  # singular factorization
                raise StepFailure("momentum", "linear solve failed: %s" % exc, rnorm)
            if not np.all(np.isfinite(dx)):
                raise StepFailure("momentum", "non-finite Newton direction", rnorm)
            step = 1.0
            for _ in range(30):
                rho_t = rho + step * dx[:N].reshape(grid.shape)
                v_t = v + step * np.stack(
                    [dx[N * (i + 1) : N * (i + 2)].reshape(grid.shape) for i in range(d)],
                    axis=-1,
                )
                if np.all(rho_t > 0):
                    R_t = residual(rho_t, v_t)
                    rn_t = np.linalg.norm(R_t) / np.sqrt(R_t.size)
                    if rn_t <= (1.0 - 1e-4 * step) * rnorm or rn_t <= cfg.tol_momentum * ref:
                        break
                step *= 0.5
            else:
                raise StepFailure("momentum", "line search stalled", rnorm)
            rho, v, R, rnorm = rho_t, v_t, R_t, rn_t
            iters = it + 1
        else:
            raise StepFailure("momentum", "Newton budget exhausted", rnorm)
        return rho, v, rnorm, iters

    continuation_used = False
    try:
        rho, v, rnorm, iters = attempt(0.0, 0.0, prev.rho, prev.v)
    except StepFailure:
        continuation_used = True
        rho, v = prev.rho, prev.v
        stages = [
            (cfg.eps_reg * 8.0 ** (-s), cfg.delta_reg * 8.0 ** (-s))
            for s in range(cfg.continuation_stages)
        ] + [(0.0, 0.0)]
        iters = 0
        for eps_s, delta_s in stages:
            rho, v, rnorm, it_s = attempt(eps_s, delta_s, rho, v)
            iters += it_s

    # exact continuity re-solve at the converged velocity
    Arho = sp.identity(N, format="csr") / tau
    for j in range(d):
        Arho = Arho - ops.full_op("adj", j) @ sp.diags(v[..., j].ravel())
    rho = spla.spsolve(Arho.tocsc(), prev.rho.ravel() / tau).reshape(grid.shape)
    if np.any(rho <= 0):
        raise StepFailure("momentum", "density lost positivity", rnorm)

    return rho, v, {
        "newton_iters": iters,
        "momentum_residual": float(rnorm),
        "continuation_used": continuation_used,
    }


# ---------------------------------------------------------------------------
# transport updates


def update_xi(ops: GridOps, xi_prev, v, cfg: StepConfig):
    """Implicit transport of the return mapping.

    Solved for the deviation w = xi - x (periodic-compatible):
    (w - w_prev)/tau + (v . grad) w = -v.
    """
    grid = ops.grid
    N, d = grid.n, grid.d
    x = grid.coords()
    A = ops.advect_matrix(v, cfg.transport_scheme)
    M = (sp.identity(N, format="csr") / cfg.tau + A).tocsc()
    w_prev = (xi_prev - x).reshape(N, d)
    rhs = w_prev / cfg.tau - v.reshape(N, d)
    try:
        w = spla.spsolve(M, rhs)
    except Exception as exc:
        raise StepFailure("xi-transport", "linear solve failed: %s" % exc)
    w = w.reshape(grid.shape + (d,))
    resid = float(
        np.max(np.abs((w - w_prev.reshape(w.shape)) / cfg.tau
                      + ops.advect(w, v, cfg.transport_scheme) + v))
    )
    if not np.isfinite(resid) or resid > 1e-6:
        raise StepFailure("xi-transport", "residual %.3e" % resid, resid)
    return x + w, resid


def _implicit_reaction_transport(ops, U_prev, v, tau, react, m, scheme, tol,
                                 max_iter, stage):
    """Newton solve of (U - U_prev)/tau + (v . grad) U + react(U) = 0.

    U has m pointwise components (trailing axes flattened to m); react
    is pointwise and vectorized; its Jacobian blocks are formed by
    central differences in the m components (exact for linear parts).
    Advection and mass terms are exact.  ops may be None for a 0D
    (single-point, no transport) solve.
    """
    shape = U_prev.shape
    if ops is not None:
        N = ops.grid.n
        A = ops.advect_matrix(v, scheme) if v is not None else None
    else:
        N = 1
        A = None
    Uf_prev = U_prev.reshape(N, m)
    U = Uf_prev.copy()

    def residual(Uf):
        r = (Uf - Uf_prev) / tau + react(Uf.reshape(shape)).reshape(N, m)
        if A is not None:
            r = r + (A @ Uf)
        return r

    R = residual(U)
    rnorm = float(np.max(np.abs(R)))
    ref = max(1.0, rnorm)
    iters = 0
    I_big = sp.identity(N * m, format="csr") if N * m > 1 else None
    for it in range(max_iter):
        if rnorm <= tol * ref:
            break
        # pointwise FD Jacobian blocks (N, m, m)
        blocks = np.zeros((N, m, m))
        h = 1e-7 * (1.0 + np.abs(U))
        for b in range(m):
            Up = U.copy()
            Um = U.copy()
            Up[:, b] += h[:, b]
            Um[:, b] -= h[:, b]
            dr = (react(Up.reshape(shape)).reshape(N, m)
                  - react(Um.reshape(shape)).reshape(N, m)) / (2.0 * h[:, b : b + 1])
            blocks[:, :, b] = dr
        for b in range(m):
            blocks[:, b, b] += 1.0 / tau
        J = sp.bsr_matrix(
            (blocks, np.arange(N), np.arange(N + 1)), shape=(N * m, N * m)
        ).tocsr()
        if A is not None:
            J = J + sp.kron(A, sp.identity(m, format="csr"), format="csr")
        try:
            dx = spla.spsolve(J.tocsc(), -R.ravel())
        except Exception as exc:
            raise StepFailure(stage, "linear solve failed: %s" % exc, rnorm)
        if not np.all(np.isfinite(dx)):
            raise StepFailure(stage, "non-finite Newton direction", rnorm)
        dx = dx.reshape(N, m)
        step = 1.0
        for _ in range(30):
            U_t = U + step * dx
            R_t = residual(U_t)
            rn_t = float(np.max(np.abs(R_t)))
            if rn_t <= (1.0 - 1e-4 * step) * rnorm or rn_t <= tol * ref:
                break
            step *= 0.5
        else:
            raise StepFailure(stage, "line search stalled", rnorm)
        U, R, rnorm = U_t, R_t, rn_t
        iters = it + 1
    else:
        raise StepFailure(stage, "Newton budget exhausted", rnorm)
    return U.reshape(shape), rnorm, iters


def _fe_reaction(ops, model, xi, alpha, Gv3):
    """Pointwise reaction of the Fe update: -(grad v) Fe + Fe L(xi, Fe, alpha)."""

    def react(Fe):
        L = mat.truncated_plastic_rate_L(
            model.phi, model.zeta_vp, model.lam, xi, Fe, alpha
        )
        return -(Gv3 @ Fe) + Fe @ L

    return react


def update_Fe(ops: GridOps, model: mat.MaterialModel, Fe_prev, v, xi_new, alpha_ref,
              cfg: StepConfig):
    """Implicit Newton solve of the elastic-distortion transport.

    (Fe - Fe_prev)/tau = (grad v) Fe - Fe L(xi, Fe, alpha) - (v . grad) Fe,
    with the flow rate at the new step.  det Fe <= 0 anywhere is a hard
    error; truncation activity is reported, not fatal.
    """
    Gv3 = _embed_grad(ops, v)
    react = _fe_reaction(ops, model, xi_new, alpha_ref, Gv3)
    Fe, resid, iters = _implicit_reaction_transport(
        ops, Fe_prev, v, cfg.tau, react, 9, cfg.transport_scheme,
        cfg.tol_transport, cfg.max_newton, "Fe-update",
    )
    detFe = tc.det(Fe)
    if np.any(detFe <= 0):
        raise StepFailure("Fe-update", "det Fe lost positivity (hard invariant)")
    return Fe, resid, iters


def update_damage(ops: GridOps, model: mat.MaterialModel, alpha_prev, Fe_prev, v,
                  xi_new, cfg: StepConfig):
    """Damage update coupled to the Fe update.

    gauss-seidel: solve Fe at alpha_prev, then alpha at the new Fe,
    then re-solve Fe once at the new alpha.  monolithic: one Newton
    solve of the joint (Fe, alpha) block.
    """
    zeta_dm = model.zeta_dm
    Gv3 = _embed_grad(ops, v)

    if cfg.damage_coupling == "gauss-seidel":
        Fe1, _, it1 = update_Fe(ops, model, Fe_prev, v, xi_new, alpha_prev, cfg)

        def react_alpha(al):
            return -mat.damage_rate_D(
                model.phi, zeta_dm, model.lam, xi_new, Fe1, al[..., 0],
                literal_sign=model.literal_damage_sign,
            )[..., None]

        alpha, resid, it2 = _implicit_reaction_transport(
            ops, alpha_prev[..., None], v, cfg.tau, react_alpha, 1,
            cfg.transport_scheme, cfg.tol_transport, cfg.max_newton, "damage",
        )
        alpha = alpha[..., 0]
        Fe2, _, it3 = update_Fe(ops, model, Fe_prev, v, xi_new, alpha, cfg)
        return alpha, Fe2, resid, it1 + it2 + it3

    # monolithic: joint unknown U = (Fe flat 9, alpha)
    def react_joint(U):
        Fe = U[..., :9].reshape(U.shape[:-1] + (3, 3))
        al = U[..., 9]
        L = mat.truncated_plastic_rate_L(model.phi, model.zeta_vp, model.lam,
                                         xi_new, Fe, al)
        dFe = -(Gv3 @ Fe) + Fe @ L
        dal = -mat.damage_rate_D(model.phi, zeta_dm, model.lam, xi_new, Fe, al,
                                 literal_sign=model.literal_damage_sign)
        return np.concatenate(
            [dFe.reshape(U.shape[:-1] + (9,)), dal[..., None]], axis=-1
        )

    U_prev = np.concatenate(
        [Fe_prev.reshape(Fe_prev.shape[:-2] + (9,)), alpha_prev[..., None]], axis=-1
    )
    U, resid, iters = _implicit_reaction_transport(
        ops, U_prev, v, cfg.tau, react_joint, 10, cfg.transport_scheme,
        cfg.tol_transport, cfg.max_newton, "damage-monolithic",
    )
    Fe = U[..., :9].reshape(Fe_prev.shape)
    alpha = U[..., 9]
    if np.any(tc.det(Fe) <= 0):
        raise StepFailure("damage-monolithic", "det Fe lost positivity")
    return alpha, Fe, resid, iters


def update_diffusion(ops: GridOps, model: mat.MaterialModel, alpha_prev, Fe_new,
                     v, xi_new, cfg: StepConfig):
    """Bound-constrained diffusion update by a primal-dual active set.

    Solves (alpha - alpha_prev)/tau = div(m grad mu) - (v . grad) alpha
    with mu in d phi_lam/d alpha + N_[0,1](alpha); the normal cone is
    resolved by semismooth Newton on the coupled (alpha, mu) system.
    Returns (alpha, mu, dual, complementarity residual, iterations).
    """
    grid = ops.grid
    N = grid.n
    tau = cfg.tau
    law = model.diffusion
    I = sp.identity(N, format="csr")
    Aadv = ops.advect_matrix(v, cfg.transport_scheme)
    D = [ops.full_op("D", j) for j in range(grid.d)]
    A = [ops.full_op("adj", j) for j in range(grid.d)]

    def dphi(al):
        return mat.trunc_energy_dalpha(
            model.phi, model.lam, xi_new, Fe_new, al.reshape(grid.shape)
        ).ravel()

    def d2phi(al):
        h = 1e-6
        return (dphi(al + h) - dphi(al - h)) / (2.0 * h)

    al = alpha_prev.ravel().copy()
    mu = dphi(al)
    c_scale = 1.0

    def flux_matrix(al):
        mvals = law.mobility(xi_new.reshape(N, -1), al).ravel()
        return sum(A[j] @ sp.diags(mvals) @ D[j] for j in range(grid.d))

    iters = 0
    for it in range(60):
        K = flux_matrix(al)
        R1 = (al - alpha_prev.ravel()) / tau + K @ mu + Aadv @ al
        dual = mu - dphi(al)
        upper = dual + c_scale * (al - 1.0) > 0.0
        lower = dual + c_scale * al < 0.0
        inact = ~(upper | lower)
        R2 = np.where(upper, al - 1.0, np.where(lower, al, dphi(al) - mu))
        rnorm = max(float(np.max(np.abs(R1))), float(np.max(np.abs(R2))))
        if rnorm <= cfg.tol_transport * max(1.0, 1.0 / tau) and it > 0 and sets_stable:
            break
        J11 = I / tau + Aadv
        J12 = K
        d2 = d2phi(al)
        J21 = sp.diags(np.where(inact, d2, 1.0))
        J22 = sp.diags(np.where(inact, -1.0, 0.0))
        J = sp.bmat([[J11, J12], [J21, J22]], format="csc")
        try:
            dx = spla.spsolve(J, -np.concatenate([R1, R2]))
        except Exception as exc:
            raise StepFailure("diffusion", "linear solve failed: %s" % exc, rnorm)
        if not np.all(np.isfinite(dx)):
            raise StepFailure("diffusion", "non-finite Newton direction", rnorm)
        al_new = al + dx[:N]
        mu_new = mu + dx[N:]
        sets_stable = bool(
            np.array_equal(upper, (mu_new - dphi(al_new)) + c_scale * (al_new - 1.0) > 0.0)
            and np.array_equal(lower, (mu_new - dphi(al_new)) + c_scale * al_new < 0.0)
        )
        al, mu = al_new, mu_new
        al = np.where(upper, 1.0, np.where(lower, 0.0, al))
        iters = it + 1
    else:
        raise StepFailure("diffusion", "active-set iteration exhausted", rnorm)

    al = np.clip(al, 0.0, 1.0)
    dual = mu - dphi(al)
    # zero the dual on the inactive set (it is a Newton leftover there)
    dual = np.where(inact, 0.0, dual)
    mu_field = (dphi(al) + dual).reshape(grid.shape)
    _, comp = mat.chemical_potential(
        model.phi, model.lam, xi_new, Fe_new, al.reshape(grid.shape),
        dual.reshape(grid.shape),
    )
    if comp > cfg.complementarity_tol:
        raise StepFailure("diffusion", "complementarity residual %.3e" % comp, comp)
    return al.reshape(grid.shape), mu_field, dual.reshape(grid.shape), comp, iters


# ---------------------------------------------------------------------------
# full step and run loop


def _monitors(model: mat.MaterialModel, state: State):
    from .diagnostics import monitors

    return monitors(state, model.lam)


def step(prev: State, model: mat.MaterialModel, g, cfg: StepConfig, ops: GridOps):
    """One staggered step; returns (state, report) or raises StepFailure."""
    report = StepReport(tau_used=cfg.tau)
    total_mass = ops.integrate(prev.rho)
    gnorm = float(np.max(np.abs(np.asarray(g, dtype=float))))
    report.tau_admissible = cfg.tau * total_mass * gnorm < 1.0

    if cfg.freeze_momentum:
        rho, v = prev.rho.copy(), prev.v.copy()
    else:
        rho, v, info = solve_mass_momentum(prev, model, g, cfg, ops)
        report.newton_iters = info["newton_iters"]
        report.momentum_residual = info["momentum_residual"]
        report.continuation_used = info["continuation_used"]

    Gv = ops.grad_vec(v)
    report.tau_divv = cfg.tau * float(np.max(np.abs(np.trace(Gv, axis1=-2, axis2=-1))))

    xi, xi_resid = update_xi(ops, prev.xi, v, cfg)
    report.transport_residual = xi_resid

    mu_field = prev.mu
    if model.zeta_dm is not None:
        alpha, Fe, resid, iters = update_damage(
            ops, model, prev.alpha, prev.Fe, v, xi, cfg
        )
        report.transport_iters = iters
        report.transport_residual = max(report.transport_residual, resid)
    else:
        Fe, resid, iters = update_Fe(ops, model, prev.Fe, v, xi, prev.alpha, cfg)
        report.transport_iters = iters
        report.transport_residual = max(report.transport_residual, resid)
        if model.diffusion is not None:
            alpha, mu_field, dual, comp, it2 = update_diffusion(
                ops, model, prev.alpha, Fe, v, xi, cfg
            )
            report.complementarity_residual = comp
            report.transport_iters += it2
        else:
            alpha = prev.alpha.copy()

    new = State(rho=rho, v=v, Fe=Fe, xi=xi, alpha=alpha, t=prev.t + cfg.tau,
                mu=mu_field)
    report.monitors = _monitors(model, new)
    if report.monitors["min_rho"] <= 0 or report.monitors["min_detFe"] <= 0:
        raise StepFailure("invariants", "positivity lost after update")
    return new, report


def run(initial: State, model: mat.MaterialModel, g, cfg: StepConfig, T,
        ops: GridOps | None = None, grid: Grid | None = None, sink=None):
    """Time loop with tau-halving retries.

    `sink(state, report, ledger)` is called after every accepted step.
    Returns the final state.  Raises StepFailure once the retry budget
    is exhausted.
    """
    from .diagnostics import ledger as make_ledger

    if ops is None:
        if grid is None:
            raise ValueError("need ops or grid")
        ops = GridOps(grid)
    initial.validate()
    model.truncation.check_initial(initial.Fe)

    total_mass = ops.integrate(initial.rho)
    gnorm = float(np.max(np.abs(np.asarray(g, dtype=float))))
    if cfg.tau * total_mass * gnorm >= 1.0:
        raise ValueError(
            "tau fails the admissibility bound tau * total mass * |g| < 1"
        )

    state = initial
    cfg_cur = cfg
    retries_left = cfg.retry_budget
    while state.t < T - 1e-12 * max(T, 1.0):
        tau = min(cfg_cur.tau, T - state.t)
        cfg_step = replace(cfg_cur, tau=tau)
        try:
            new, report = step(state, model, g, cfg_step, ops)
        except StepFailure as fail:
            if retries_left <= 0:
                raise StepFailure(
                    fail.stage, "retry budget exhausted at t=%.6g (%s)" % (state.t, fail)
                )
            retries_left -= 1
            cfg_cur = replace(cfg_cur, tau=cfg_cur.tau / 2.0)
            continue
        led = make_ledger(ops, model, state, new, g, cfg_step.tau)
        if sink is not None:
            sink(new, report, led)
        state = new
    return state


# ---------------------------------------------------------------------------
# 0D kinematic drive


def kinematic_drive(model: mat.MaterialModel, grad_v_of_t, Fe0=None, alpha0=1.0,
                    tau=1e-3, T=1.0, X=None, cfg: StepConfig | None = None):
    """Homogeneous constitutive drive with the stepper's own
    backward-Euler staggering (no momentum solve, no transport).

    Returns dict with times, Fe, alpha and the truncated stored energy.
    """
    if cfg is None:
        cfg = StepConfig(tau=tau)
    X = np.zeros(2) if X is None else np.asarray(X, dtype=float)
    Fe = np.array(np.eye(3) if Fe0 is None else Fe0, dtype=float)
    alpha = float(alpha0)
    n = int(round(T / tau))
    tau = T / n
    times = np.zeros(n + 1)
    fes = np.zeros((n + 1, 3, 3))
    alphas = np.zeros(n + 1)
    fes[0], alphas[0] = Fe, alpha
    Xb = X[None]
    for k in range(n):
        t1 = (k + 1) * tau
        Gv = np.asarray(grad_v_of_t(t1), dtype=float)

        def react_fe(FeU):
            FeM = FeU.reshape(1, 3, 3)
            L = mat.truncated_plastic_rate_L(
                model.phi, model.zeta_vp, model.lam, Xb, FeM, np.array([alpha])
            )
            return (-(Gv @ FeM) + FeM @ L).reshape(1, 9)

        FeU, _, _ = _implicit_reaction_transport(
            None, Fe.reshape(1, 9), None, tau, lambda U: react_fe(U), 9,
            "central", cfg.tol_transport, cfg.max_newton, "0d-Fe",
        )
        Fe = FeU.reshape(3, 3)
        if tc.det(Fe) <= 0:
            raise StepFailure("0d-Fe", "det Fe lost positivity at t=%.4g" % t1)
        if model.zeta_dm is not None:

            def react_al(alU):
                return -mat.damage_rate_D(
                    model.phi, model.zeta_dm, model.lam, Xb, Fe[None],
                    alU.reshape(1), literal_sign=model.literal_damage_sign,
                ).reshape(1, 1)

            alU, _, _ = _implicit_reaction_transport(
                None, np.array([[alpha]]), None, tau, react_al, 1,
                "central", cfg.tol_transport, cfg.max_newton, "0d-damage",
            )
            alpha = float(alU[0, 0])
        times[k + 1], fes[k + 1], alphas[k + 1] = t1, Fe, alpha
    energy = mat.truncate_energy(
        model.phi, model.lam, np.broadcast_to(X, (n + 1, X.size)), fes, alphas
    )
    return {"t": times, "Fe": fes, "alpha": alphas, "det_Fe": tc.det(fes),
            "energy": energy}
