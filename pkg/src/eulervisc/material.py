"""Pointwise constitutive layer.

Stored energies with damage degradation and heterogeneity carried by the
material coordinate X, the C^1 cutoff of the stored energy at large
distortion, the truncated Cauchy stress and inelastic flow-rate
operators, and convex-conjugate inversions of the dissipation
potentials.  All functions are vectorized over leading axes and pure.

Conventions
-----------
F, Fe        (..., 3, 3) distortions, det > 0 outside the dead zone
X            (..., dX) material coordinates, dX in {2, 3}
alpha        (...,) scalar in [0, 1]; alpha = 1 is the intact state
energy       per actual volume
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import tensor_core as tc

__all__ = [
    "ConjugateSolveError",
    "BoundViolationError",
    "Param",
    "two_phase_disk",
    "two_phase_slab",
    "sinusoidal",
    "StoredEnergy",
    "NeoHookean",
    "TruncationParams",
    "ViscoplasticPotential",
    "QuadraticViscoplastic",
    "QuarticViscoplastic",
    "DamagePotential",
    "DiffusionLaw",
    "MaterialModel",
    "truncate_energy",
    "trunc_energy_dF",
    "trunc_energy_dalpha",
    "truncated_stress_T",
    "mandel_stress",
    "conjugate_rate",
    "truncated_plastic_rate_L",
    "damage_rate_D",
    "chemical_potential",
    "plastic_rate_bound",
    "check_material",
]


class ConjugateSolveError(RuntimeError):
    """Newton inversion of a flow-rule map failed to converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class BoundViolationError(ValueError):
    """A constrained variable left its admissible interval."""


# A material parameter is either a constant or a function of the
# material coordinate returning one value per point.
Param = Union[float, Callable[[np.ndarray], np.ndarray]]


def _eval_param(p: Param, X):
    if callable(p):
        return np.asarray(p(X), dtype=float)
    return np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# heterogeneity helpers


def two_phase_disk(inside, outside, center, radius):
    """Piecewise-constant parameter: `inside` within a disk/ball in X."""
    center = np.asarray(center, dtype=float)

    def f(X):
        X = np.asarray(X, dtype=float)
        d = X[..., : center.size] - center
        r2 = np.sum(d * d, axis=-1)
        return np.where(r2 <= radius * radius, inside, outside)

    return f


def two_phase_slab(low, high, axis, threshold):
    """Piecewise-constant parameter: `low` where X[axis] < threshold."""

    def f(X):
        X = np.asarray(X, dtype=float)
        return np.where(X[..., axis] < threshold, low, high)

    return f


def sinusoidal(base, amplitude, wavevector, phase=0.0):
    """Smooth modulation base + amplitude * sin(k . X + phase)."""
    k = np.asarray(wavevector, dtype=float)

    def f(X):
        X = np.asarray(X, dtype=float)
        arg = np.sum(k * X[..., : k.size], axis=-1) + phase
        return base + amplitude * np.sin(arg)

    return f


# ---------------------------------------------------------------------------
# stored energies


class StoredEnergy:
    """Base class: energy density phi(X, F, alpha) and derivatives.

    Subclasses provide `energy`, `d_F` and `d_alpha` analytically.
    `d_X` is supplied here by central differences in X; it is exposed
    for completeness and diagnostics only and never enters the scheme.
    """

    def energy(self, X, F, alpha):
        raise NotImplementedError

    def d_F(self, X, F, alpha):
        raise NotImplementedError

    def d_alpha(self, X, F, alpha):
        raise NotImplementedError

    def d_X(self, X, F, alpha, step=1e-6):
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        for j in range(X.shape[-1]):
            Xp = X.copy()
            Xm = X.copy()
            Xp[..., j] += step
            Xm[..., j] -= step
            out[..., j] = (self.energy(Xp, F, alpha) - self.energy(Xm, F, alpha)) / (2 * step)
        return out


@dataclass
class NeoHookean(StoredEnergy):
    """Compressible neo-Hookean solid with damage degradation.

    phi = g(alpha) * (mu/2) (J^{-2/3} tr(F F^T) - 3)
        + (kappa/2) (J - 1)^2
        + g_c (1 - alpha)
        + (c_alpha/2) (alpha - a0)^2,          J = det F,

    with the degradation g(alpha) = eta + (1 - eta) alpha^2.  Any of
    mu, kappa, g_c, c_alpha, a0 may be a function of X (heterogeneity
    carried by the return mapping).  The quadratic chemical term with
    well position a0 is used by the diffusion scenarios and is off by
    default (c_alpha = 0).
    """

    mu: Param = 1.0
    kappa: Param = 1.0
    g_c: Param = 0.0
    eta: float = 1e-3
    c_alpha: Param = 0.0
    a0: Param = 1.0

    def _params(self, X):
        return (
            _eval_param(self.mu, X),
            _eval_param(self.kappa, X),
            _eval_param(self.g_c, X),
            _eval_param(self.c_alpha, X),
            _eval_param(self.a0, X),
        )

    def _g(self, alpha):
        return self.eta + (1.0 - self.eta) * alpha * alpha

    def _dg(self, alpha):
        return 2.0 * (1.0 - self.eta) * alpha

    def iso_energy(self, X, F):
        mu = _eval_param(self.mu, X)
        J = tc.det(F)
        i1 = tc.ddot(F, F)
        return 0.5 * mu * (J ** (-2.0 / 3.0) * i1 - 3.0)

    def energy(self, X, F, alpha):
        mu, kappa, g_c, c_a, a0 = self._params(X)
        alpha = np.asarray(alpha, dtype=float)
        J = tc.det(F)
        i1 = tc.ddot(F, F)
        iso = 0.5 * mu * (J ** (-2.0 / 3.0) * i1 - 3.0)
        vol = 0.5 * kappa * (J - 1.0) ** 2
        chem = 0.5 * c_a * (alpha - a0) ** 2
        return self._g(alpha) * iso + vol + g_c * (1.0 - alpha) + chem

    def d_F(self, X, F, alpha):
        mu, kappa, _, _, _ = self._params(X)
        alpha = np.asarray(alpha, dtype=float)
        F = np.asarray(F, dtype=float)
        J = tc.det(F)[..., None, None]
        i1 = tc.ddot(F, F)[..., None, None]
        cofF = tc.cof(F)
        mu = np.asarray(mu)[..., None, None]
        kappa = np.asarray(kappa)[..., None, None]
        g = self._g(alpha)[..., None, None]
        d_iso = mu * (J ** (-2.0 / 3.0) * F - (i1 / 3.0) * J ** (-5.0 / 3.0) * cofF)
        d_vol = kappa * (J - 1.0) * cofF
        return g * d_iso + d_vol

    def d_alpha(self, X, F, alpha):
        mu, _, g_c, c_a, a0 = self._params(X)
        alpha = np.asarray(alpha, dtype=float)
        J = tc.det(F)
        i1 = tc.ddot(F, F)
        iso = 0.5 * mu * (J ** (-2.0 / 3.0) * i1 - 3.0)
        return self._dg(alpha) * iso - g_c + c_a * (alpha - a0)


# ---------------------------------------------------------------------------
# truncation


@dataclass(frozen=True)
class TruncationParams:
    """Cutoff level for the stored-energy truncation.

    lam must exceed sqrt(3) so the identity distortion lies strictly in
    the untruncated branch (|I| = sqrt(3), det I = 1 > 1/lam).
    """

    lam: float

    def __post_init__(self):
        if not self.lam > np.sqrt(3.0):
            raise ValueError("truncation level must exceed sqrt(3), got %g" % self.lam)

    def check_initial(self, Fe0):
        """Validate |Fe0| < lam and 1/det Fe0 < lam everywhere."""
        fn = tc.frob(Fe0)
        J = tc.det(Fe0)
        if np.any(J <= 0):
            raise ValueError("initial elastic distortion has nonpositive determinant")
        if np.any(fn >= self.lam) or np.any(1.0 / J >= self.lam):
            raise ValueError(
                "initial elastic distortion violates the cutoff margin: "
                "max |Fe0| = %g, max 1/det = %g, lam = %g"
                % (float(np.max(fn)), float(np.max(1.0 / J)), self.lam)
            )


def _smoothstep(s):
    return s * s * (3.0 - 2.0 * s)


def _smoothstep_d(s):
    return 6.0 * s * (1.0 - s)


def _blend(F, lam):
    """C^1 cutoff factor B(F) and its derivative dB/dF.

    B = B_det * B_frob with
      B_det  = 3 lam^2 u^2 - 2 lam^3 u^3, u = 2 det F - 1/lam,
               clamped to [0, 1] outside (1/(2 lam), 1/lam);
      B_frob = 1 - smoothstep(|F|/lam - 1), clamped outside (lam, 2 lam).

    Returns (B, dB, live) where live marks points with B > 0; dB is zero
    off the live set.
    """
    F = np.asarray(F, dtype=float)
    lam = float(lam)
    fn = tc.frob(F)
    J = tc.det(F)

    # |F|-blend, decreasing from 1 at |F|=lam to 0 at |F|=2 lam
    s = np.clip(fn / lam - 1.0, 0.0, 1.0)
    b_f = 1.0 - _smoothstep(s)
    db_f_dfn = np.where((fn > lam) & (fn < 2.0 * lam), -_smoothstep_d(s) / lam, 0.0)

    # det-blend, 0 at det F = 1/(2 lam), 1 at det F = 1/lam
    u = 2.0 * J - 1.0 / lam
    lu = np.clip(lam * u, 0.0, 1.0)
    b_d = lu * lu * (3.0 - 2.0 * lu)
    in_det_band = (J > 0.5 / lam) & (J < 1.0 / lam)
    db_d_dJ = np.where(in_det_band, (6.0 * lam * lam * u - 6.0 * lam ** 3 * u * u) * 2.0, 0.0)

    B = b_f * b_d
    live = (fn < 2.0 * lam) & (J > 0.5 / lam)
    B = np.where(live, B, 0.0)

    safe_fn = np.where(fn > 0, fn, 1.0)
    dB = (
        (b_d * db_f_dfn / safe_fn)[..., None, None] * F
        + (b_f * db_d_dJ)[..., None, None] * tc.cof(F)
    )
    dB = np.where(live[..., None, None], dB, 0.0)
    return B, dB, live


def _safe_F(F, live):
    """Replace dead-zone entries by the identity so phi can be evaluated."""
    eye = tc.identity(np.shape(live))
    return np.where(live[..., None, None], F, eye)


def truncate_energy(phi: StoredEnergy, lam, X, F, alpha):
    """Truncated stored energy phi_lam(X, F, alpha).

    Equals phi where |F| <= lam and det F >= 1/lam, vanishes where
    |F| >= 2 lam or det F <= 1/(2 lam), and is the C^1 blend in between.
    Total on all of matrix space: the dead zone returns 0 even where
    phi itself is undefined (det F <= 0).
    """
    lam = lam.lam if isinstance(lam, TruncationParams) else float(lam)
    B, _, live = _blend(F, lam)
    val = phi.energy(X, _safe_F(F, live), alpha)
    return np.where(live, B * val, 0.0)


def trunc_energy_dF(phi: StoredEnergy, lam, X, F, alpha):
    """Analytic d phi_lam / dF (product rule through both blends)."""
    lam = lam.lam if isinstance(lam, TruncationParams) else float(lam)
    B, dB, live = _blend(F, lam)
    Fs = _safe_F(F, live)
    val = phi.energy(X, Fs, alpha)
    dval = phi.d_F(X, Fs, alpha)
    out = B[..., None, None] * dval + val[..., None, None] * dB
    return np.where(live[..., None, None], out, 0.0)


def trunc_energy_dalpha(phi: StoredEnergy, lam, X, F, alpha):
    """Analytic d phi_lam / d alpha (blends do not depend on alpha)."""
    lam = lam.lam if isinstance(lam, TruncationParams) else float(lam)
    B, _, live = _blend(F, lam)
    d = phi.d_alpha(X, _safe_F(F, live), alpha)
    return np.where(live, B * d, 0.0)


def truncated_stress_T(phi: StoredEnergy, lam, X, F, alpha):
    """Truncated Cauchy stress T_lam = (d phi_lam/dF) F^T + phi_lam I."""
    dphi = trunc_energy_dF(phi, lam, X, F, alpha)
    val = truncate_energy(phi, lam, X, F, alpha)
    T = dphi @ tc.transpose(np.asarray(F, dtype=float))
    T = T + val[..., None, None] * tc.identity(val.shape)
    return T


def mandel_stress(phi: StoredEnergy, lam, X, F, alpha):
    """Truncated Mandel stress M = F^T (d phi_lam / dF)."""
    dphi = trunc_energy_dF(phi, lam, X, F, alpha)
    return tc.transpose(np.asarray(F, dtype=float)) @ dphi


# ---------------------------------------------------------------------------
# dissipation potentials


class ViscoplasticPotential:
    """Convex potential of the inelastic distortion rate on the
    deviatoric subspace, with its flow-rule inverse."""

    def value(self, X, L):
        raise NotImplementedError

    def d_L(self, X, L):
        raise NotImplementedError

    def conjugate_rate(self, X, M_dev):
        raise NotImplementedError


@dataclass
class QuadraticViscoplastic(ViscoplasticPotential):
    """zeta(L) = |L|^2 / (2 theta); closed-form inverse theta * M.

    theta = 0 switches inelastic flow off entirely (rigid limit: the
    potential is the indicator of {0} and the conjugate derivative
    vanishes identically).
    """

    theta: Param = 1.0

    def value(self, X, L):
        th = _eval_param(self.theta, X)
        n2 = tc.ddot(L, L)
        if np.all(th == 0.0):
            return np.zeros_like(n2)
        return n2 / (2.0 * th)

    def d_L(self, X, L):
        th = _eval_param(self.theta, X)
        if np.all(th == 0.0):
            return np.zeros_like(np.asarray(L, dtype=float))
        return np.asarray(L, dtype=float) / np.asarray(th)[..., None, None]

    def conjugate_rate(self, X, M_dev):
        th = _eval_param(self.theta, X)
        return np.asarray(th)[..., None, None] * np.asarray(M_dev, dtype=float)


@dataclass
class QuarticViscoplastic(ViscoplasticPotential):
    """zeta(L) = (a/2)|L|^2 + (b/4)|L|^4, a > 0, b >= 0.

    The flow-rule map zeta'(L) = (a + b |L|^2) L is inverted by a damped
    Newton iteration on the deviatoric space; the Jacobian
    (a + b|L|^2) Id + 2 b L (x) L is inverted in closed form by the
    rank-one update formula.
    """

    a: Param = 1.0
    b: Param = 1.0
    max_iter: int = 60

    def value(self, X, L):
        a = _eval_param(self.a, X)
        b = _eval_param(self.b, X)
        n2 = tc.ddot(L, L)
        return 0.5 * a * n2 + 0.25 * b * n2 * n2

    def d_L(self, X, L):
        a = _eval_param(self.a, X)
        b = _eval_param(self.b, X)
        L = np.asarray(L, dtype=float)
        n2 = tc.ddot(L, L)
        return (a + b * n2)[..., None, None] * L

    def conjugate_rate(self, X, M_dev):
        M = np.asarray(M_dev, dtype=float)
        a = np.broadcast_to(_eval_param(self.a, X), M.shape[:-2]).astype(float)
        b = np.broadcast_to(_eval_param(self.b, X), M.shape[:-2]).astype(float)
        tol = 1e-10 * (1.0 + tc.frob(M))

        L = M / (a[..., None, None] + 1e-30)  # linear-response initial guess
        res = self.d_L_ab(a, b, L) - M
        rn = tc.frob(res)
        for _ in range(self.max_iter):
            if np.all(rn <= tol):
                break
            n2 = tc.ddot(L, L)
            c = a + b * n2
            # solve (c Id + 2 b L (x) L) dL = -res via Sherman-Morrison
            ldotr = tc.ddot(L, res)
            coef = 2.0 * b * ldotr / (c * (c + 2.0 * b * n2))
            dL = -res / c[..., None, None] + coef[..., None, None] * L
            step = np.ones(rn.shape)
            for _ in range(30):  # backtracking line search on |residual|
                Lt = L + step[..., None, None] * dL
                res_t = self.d_L_ab(a, b, Lt) - M
                rn_t = tc.frob(res_t)
                bad = rn_t > (1.0 - 0.25 * step) * rn
                if not np.any(bad):
                    break
                step = np.where(bad, 0.5 * step, step)
            L = L + step[..., None, None] * dL
            res = self.d_L_ab(a, b, L) - M
            rn = tc.frob(res)
        if np.any(rn > tol):
            raise ConjugateSolveError(
                "flow-rule inversion stalled at residual %.3e" % float(np.max(rn)),
                residual=float(np.max(rn)),
            )
        return L

    @staticmethod
    def d_L_ab(a, b, L):
        n2 = tc.ddot(L, L)
        return (a + b * n2)[..., None, None] * L


@dataclass
class DamagePotential:
    """Rate potential zeta_dm(r) = G r^2 / 2, optionally one-sided.

    mode "unidirectional" adds the indicator of {r <= 0}: damage can
    only decrease alpha, and the conjugate derivative clips positive
    driving forces to zero rate.
    """

    G: Param = 1.0
    mode: str = "bidirectional"

    def __post_init__(self):
        if self.mode not in ("bidirectional", "unidirectional"):
            raise ValueError("unknown damage mode %r" % self.mode)

    def value(self, X, r):
        G = _eval_param(self.G, X)
        r = np.asarray(r, dtype=float)
        if self.mode == "unidirectional" and np.any(r > 1e-14):
            return np.where(r > 1e-14, np.inf, 0.5 * G * r * r)
        return 0.5 * G * r * r

    def d_r(self, X, r):
        G = _eval_param(self.G, X)
        return G * np.asarray(r, dtype=float)

    def conjugate_rate(self, X, d):
        """[zeta_dm^*]'(d): rate response to a driving force d."""
        G = _eval_param(self.G, X)
        d = np.asarray(d, dtype=float)
        if self.mode == "unidirectional":
            return np.minimum(d, 0.0) / G
        return d / G


@dataclass
class DiffusionLaw:
    """Mobility m(X, alpha) = m0(X) + m1 * alpha, positive on [0, 1]."""

    m0: Param = 1.0
    m1: float = 0.0

    def mobility(self, X, alpha):
        m0 = _eval_param(self.m0, X)
        m = m0 + self.m1 * np.asarray(alpha, dtype=float)
        if np.any(m <= 0.0):
            raise ValueError("mobility must stay positive on [0,1]")
        return m


# ---------------------------------------------------------------------------
# truncated operators


def conjugate_rate(zeta: ViscoplasticPotential, X, M_dev):
    """Invert the viscoplastic flow rule: L with zeta'(X, L) = M_dev."""
    M = np.asarray(M_dev, dtype=float)
    trM = tc.tr(M)
    if np.any(np.abs(trM) > 1e-12 * (1.0 + tc.frob(M))):
        raise ValueError("flow-rule driving stress must be deviatoric")
    return zeta.conjugate_rate(X, M)


def truncated_plastic_rate_L(phi, zeta, lam, X, F, alpha):
    """Inelastic distortion rate from the truncated Mandel deviator."""
    M = mandel_stress(phi, lam, X, F, alpha)
    return zeta.conjugate_rate(X, tc.dev(M))


def damage_rate_D(phi, zeta_dm: DamagePotential, lam, X, F, alpha, literal_sign=False):
    """Damage rate: [zeta_dm^*]' applied to the driving force.

    The default convention uses the negative energy gradient
    -d phi_lam/d alpha so the stored energy relaxes and the dissipation
    rate alpha' zeta'(alpha') stays nonnegative.  literal_sign=True
    feeds +d phi_lam/d alpha instead, kept for comparison runs.
    """
    d = trunc_energy_dalpha(phi, lam, X, F, alpha)
    drive = d if literal_sign else -d
    return zeta_dm.conjugate_rate(X, drive)


def chemical_potential(phi, lam, X, F, alpha, dual):
    """Chemical potential mu = d phi_lam/d alpha + dual and the
    complementarity defect of the bound constraint alpha in [0, 1].

    dual is the normal-cone selection: <= 0 only at alpha = 0, >= 0
    only at alpha = 1, zero in the interior.  The returned residual is
    the pointwise max of |min(dual, 0)| * alpha + max(dual, 0) * (1 - alpha).
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < -1e-12) or np.any(alpha > 1.0 + 1e-12):
        raise BoundViolationError("alpha outside [0,1] beyond 1e-12")
    dual = np.asarray(dual, dtype=float)
    mu = trunc_energy_dalpha(phi, lam, X, F, alpha) + dual
    resid = np.abs(np.minimum(dual, 0.0)) * alpha + np.maximum(dual, 0.0) * (1.0 - alpha)
    return mu, float(np.max(resid)) if resid.size else 0.0


def plastic_rate_bound(phi, zeta, lam, X_sample, alpha_sample=1.0, n=100000, seed=0):
    """Empirical uniform bound on |L_lam| by dense random sampling of F.

    The cutoff makes the truncated Mandel stress bounded over all of
    matrix space, hence the flow rate too; this estimates the bound.
    """
    rng = np.random.default_rng(seed)
    F = rng.normal(scale=2.0, size=(n, 3, 3))
    F[: n // 4] = tc.identity((n // 4,)) + rng.normal(scale=0.4, size=(n // 4, 3, 3))
    X = np.broadcast_to(np.asarray(X_sample, dtype=float), (n, np.size(X_sample)))
    L = truncated_plastic_rate_L(phi, zeta, lam, X, F, np.full(n, alpha_sample))
    return float(np.max(tc.frob(L)))


# ---------------------------------------------------------------------------
# material bundle


@dataclass
class MaterialModel:
    """Everything the stepper needs to know about the material.

    Viscosity: the Stokes tensor D eps(v) = 2 mu_visc eps(v)
    + lam_visc tr(eps(v)) I; hyperviscosity nu |grad^2 v|^{p-2} grad^2 v.
    Exactly one of (zeta_dm, diffusion) may be active.
    """

    phi: StoredEnergy
    truncation: TruncationParams
    zeta_vp: ViscoplasticPotential
    zeta_dm: DamagePotential | None = None
    diffusion: DiffusionLaw | None = None
    mu_visc: float = 1.0
    lam_visc: float = 0.0
    nu: float = 1e-3
    p_hyper: float = 2.0
    literal_damage_sign: bool = False

    def __post_init__(self):
        if self.zeta_dm is not None and self.diffusion is not None:
            raise ValueError("damage and diffusion are mutually exclusive")
        if self.p_hyper < 2.0:
            raise ValueError("hyperviscosity exponent must be >= 2")

    @property
    def lam(self):
        return self.truncation.lam


# ---------------------------------------------------------------------------
# sampled contract checks


def _random_rotations(rng, n):
    """Uniform-ish random rotations via QR of Gaussian matrices."""
    A = rng.normal(size=(n, 3, 3))
    out = np.empty_like(A)
    for i in range(n):
        q, r = np.linalg.qr(A[i])
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        out[i] = q
    return out


def check_material(model: MaterialModel, n=200, seed=7, X_dim=2):
    """Sampled verification of the constitutive contracts.

    Returns {check name: (passed, worst value)}.  Covers frame
    indifference of the truncated energy, blow-up of phi as det F -> 0,
    boundedness below, trace-free flow rate, conjugate round-trip, and
    the analytic-vs-finite-difference derivative match.
    """
    rng = np.random.default_rng(seed)
    lam = model.lam
    phi = model.phi
    X = rng.uniform(0.0, 1.0, size=(n, X_dim))
    alpha = rng.uniform(0.0, 1.0, size=n)
    F = tc.identity((n,)) + rng.normal(scale=0.25, size=(n, 3, 3))
    keep = tc.det(F) > 0.05
    F[~keep] = np.eye(3)
    results = {}

    # frame indifference of the truncated energy
    R = _random_rotations(rng, n)
    e0 = truncate_energy(phi, lam, X, F, alpha)
    e1 = truncate_energy(phi, lam, X, R @ F, alpha)
    worst = float(np.max(np.abs(e1 - e0) / (1.0 + np.abs(e0))))
    results["frame_indifference"] = (worst <= 1e-12, worst)

    # blow-up as det F -> 0 (untruncated energy, intact state)
    scales = np.array([1e-2, 1e-3, 1e-4])
    vals = [
        float(phi.energy(X[:1], np.diag([s, 1.0, 1.0])[None], np.ones(1))[0])
        for s in scales
    ]
    grows = all(vals[i + 1] > 3.0 * vals[i] for i in range(len(vals) - 1)) and vals[-1] > 100.0
    results["det_blowup"] = (grows, vals[-1])

    # bounded below
    e = truncate_energy(phi, lam, X, F, alpha)
    results["bounded_below"] = (bool(np.all(e > -1e-12)), float(np.min(e)))

    # trace-free flow rate
    L = truncated_plastic_rate_L(phi, model.zeta_vp, lam, X, F, alpha)
    worst = float(np.max(np.abs(tc.tr(L))))
    results["flow_rate_tracefree"] = (worst <= 1e-12 * (1.0 + float(np.max(tc.frob(L)))), worst)

    # conjugate round-trip
    M = tc.dev(rng.normal(size=(n, 3, 3)))
    Lr = conjugate_rate(model.zeta_vp, X, M)
    back = model.zeta_vp.d_L(X, Lr)
    worst = float(np.max(tc.frob(back - M) / (1.0 + tc.frob(M))))
    results["conjugate_roundtrip"] = (worst <= 1e-10, worst)

    # analytic vs FD derivative of the truncated energy
    from .oracle import fd_stress_check

    err = fd_stress_check(model, n_samples=max(n, 100), seed=seed + 1)
    results["fd_derivative_F"] = (err["worst_dF"] <= 1e-6, err["worst_dF"])
    results["fd_derivative_alpha"] = (err["worst_dalpha"] <= 1e-6, err["worst_dalpha"])
    results["fd_worst_branch"] = (True, err["worst_branch"])
    return results
