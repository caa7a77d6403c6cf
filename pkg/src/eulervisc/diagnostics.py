"""Energy-dissipation ledger, stability monitors, and the discrete
Gronwall certificate utility."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import material as mat
from . import tensor_core as tc
from .grid_ops import GridOps

__all__ = [
    "EnergyLedger",
    "GronwallCertificate",
    "InvalidCertificateError",
    "ledger",
    "monitors",
    "gronwall_bound",
    "gronwall_max_sequence",
]


class InvalidCertificateError(ValueError):
    """The Gronwall bound is not applicable (tau * max a >= 1)."""


@dataclass
class EnergyLedger:
    """Energies and dissipation/power rates for one accepted step.

    Rates are evaluated at the end-of-step state (consistent with the
    implicit scheme); the balance residual is
    R = (E_new - E_prev) + tau * (total dissipation) - tau * power,
    so R = 0 would mean the discrete step satisfies the continuous
    energy-dissipation balance exactly.  Positive R means the step
    dissipated less than the balance demands.
    """

    t: float
    tau: float
    kinetic: float
    stored: float
    kinetic_prev: float
    stored_prev: float
    diss_stokes: float
    diss_hyper: float
    diss_plastic: float
    diss_damage: float
    diss_diffusion: float
    power_gravity: float
    residual: float

    @property
    def total(self):
        return self.kinetic + self.stored

    @property
    def dissipation(self):
        return (self.diss_stokes + self.diss_hyper + self.diss_plastic
                + self.diss_damage + self.diss_diffusion)


def _energies(ops: GridOps, model: mat.MaterialModel, state):
    kinetic = 0.5 * ops.integrate(state.rho * np.sum(state.v * state.v, axis=-1))
    phi = mat.truncate_energy(model.phi, model.lam, state.xi, state.Fe, state.alpha)
    return kinetic, ops.integrate(phi)


def ledger(ops: GridOps, model: mat.MaterialModel, state_prev, state_new, g, tau):
    """Assemble the energy-dissipation ledger for one step."""
    d = ops.grid.d
    kin0, sto0 = _energies(ops, model, state_prev)
    kin1, sto1 = _energies(ops, model, state_new)

    v = state_new.v
    Gv = ops.grad_vec(v)
    eps = 0.5 * (Gv + np.swapaxes(Gv, -1, -2))
    tr_eps = np.trace(eps, axis1=-2, axis2=-1)
    diss_stokes = ops.integrate(
        2.0 * model.mu_visc * np.sum(eps * eps, axis=(-2, -1))
        + model.lam_visc * tr_eps * tr_eps
    )
    H = ops.hessian(v)
    hmag = np.sqrt(np.sum(H * H, axis=(-3, -2, -1)))
    diss_hyper = ops.integrate(model.nu * hmag ** model.p_hyper)

    L = mat.truncated_plastic_rate_L(
        model.phi, model.zeta_vp, model.lam, state_new.xi, state_new.Fe,
        state_new.alpha,
    )
    M = mat.mandel_stress(model.phi, model.lam, state_new.xi, state_new.Fe,
                          state_new.alpha)
    diss_plastic = ops.integrate(tc.ddot(L, M))

    diss_damage = 0.0
    if model.zeta_dm is not None:
        rate = mat.damage_rate_D(
            model.phi, model.zeta_dm, model.lam, state_new.xi, state_new.Fe,
            state_new.alpha, literal_sign=model.literal_damage_sign,
        )
        diss_damage = ops.integrate(rate * model.zeta_dm.d_r(state_new.xi, rate))

    diss_diffusion = 0.0
    if model.diffusion is not None and state_new.mu is not None:
        gmu = ops.grad(state_new.mu)
        mvals = model.diffusion.mobility(state_new.xi, state_new.alpha)
        diss_diffusion = ops.integrate(mvals * np.sum(gmu * gmu, axis=-1))

    g = np.asarray(g, dtype=float)
    g_field = np.broadcast_to(g, v.shape) if g.ndim == 1 else g
    power = ops.integrate(state_new.rho * np.sum(g_field * v, axis=-1))

    diss = diss_stokes + diss_hyper + diss_plastic + diss_damage + diss_diffusion
    residual = (kin1 + sto1) - (kin0 + sto0) + tau * diss - tau * power
    return EnergyLedger(
        t=state_new.t, tau=tau, kinetic=kin1, stored=sto1,
        kinetic_prev=kin0, stored_prev=sto0,
        diss_stokes=diss_stokes, diss_hyper=diss_hyper,
        diss_plastic=diss_plastic, diss_damage=diss_damage,
        diss_diffusion=diss_diffusion, power_gravity=power, residual=residual,
    )


def monitors(state, lam):
    """Stability monitors: positivity, cutoff margins, activation."""
    detFe = tc.det(state.Fe)
    fn = tc.frob(state.Fe)
    active = (fn > lam) | (detFe < 1.0 / lam)
    return {
        "min_rho": float(np.min(state.rho)),
        "min_detFe": float(np.min(detFe)),
        "max_absFe": float(np.max(fn)),
        "max_inv_detFe": float(np.max(1.0 / detFe)),
        "margin_frob": float(lam - np.max(fn)),
        "margin_det": float(lam - np.max(1.0 / detFe)),
        "trunc_active_frac": float(np.mean(active)),
    }


# ---------------------------------------------------------------------------
# discrete Gronwall


@dataclass
class GronwallCertificate:
    """Closed-form bound for sequences obeying the implicit recursion

    y_k <= C + tau * sum_{l<=k} a_l y_l + tau * sum_{l<=k} b_l.

    The bound is
    y_k <= (C + tau sum_{l<=k} b_l) * exp(tau sum_{l<=k} a_l / (1 - a tau))
           / (1 - a tau),
    with a the running max of a_l; valid only for tau * a < 1.
    """

    C: float
    tau: float
    a_seq: np.ndarray
    b_seq: np.ndarray
    bounds: np.ndarray = field(default_factory=lambda: np.array([]))

    def bound_at(self, k):
        """Bound for y_k, 1-based index."""
        return float(self.bounds[k - 1])


def gronwall_bound(C, tau, a_seq, b_seq):
    """Evaluate the discrete Gronwall bound for every index.

    Raises InvalidCertificateError when tau * max(a) >= 1.
    """
    a = np.asarray(a_seq, dtype=float)
    b = np.asarray(b_seq, dtype=float)
    if a.shape != b.shape:
        raise ValueError("a_seq and b_seq must have equal length")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("coefficient sequences must be nonnegative")
    amax_running = np.maximum.accumulate(a) if a.size else a
    if a.size and tau * float(amax_running[-1]) >= 1.0:
        raise InvalidCertificateError(
            "tau * max(a) = %.4g >= 1" % (tau * float(amax_running[-1]))
        )
    ca = np.cumsum(a) * tau
    cb = np.cumsum(b) * tau
    denom = 1.0 - tau * amax_running
    bounds = (C + cb) * np.exp(ca / denom) / denom
    return GronwallCertificate(C=float(C), tau=float(tau), a_seq=a, b_seq=b,
                               bounds=bounds)


def gronwall_max_sequence(C, tau, a_seq, b_seq):
    """Maximal sequence saturating the implicit recursion with equality.

    y_k (1 - tau a_k) = C + tau sum_{l<k} a_l y_l + tau sum_{l<=k} b_l.
    Any sequence satisfying the recursion is dominated by this one, so
    it is the sharpest test of the closed-form bound.
    """
    a = np.asarray(a_seq, dtype=float)
    b = np.asarray(b_seq, dtype=float)
    y = np.zeros(a.size)
    acc_ay = 0.0
    acc_b = 0.0
    for k in range(a.size):
        if tau * a[k] >= 1.0:
            raise InvalidCertificateError("tau * a_k >= 1 at k=%d" % (k + 1))
        acc_b += tau * b[k]
        y[k] = (C + acc_ay + acc_b) / (1.0 - tau * a[k])
        acc_ay += tau * a[k] * y[k]
    return y
