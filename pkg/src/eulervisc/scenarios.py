"""Scenario library: turn a ScenarioConfig into solver objects, and
ship the built-in presets."""

from __future__ import annotations

from importlib import resources

import numpy as np

from . import material as mat
from .config import ConfigError, ScenarioConfig, parse
from .grid_ops import Grid, GridOps
from .stepper import State, StepConfig

__all__ = [
    "builtin_names", "builtin_text", "load", "build_material", "build_grid",
    "build_state", "build_step_config", "drive_function",
]

_PKG = "eulervisc.presets"


def builtin_names():
    """Names of the shipped scenario presets."""
    out = []
    for entry in resources.files(_PKG).iterdir():
        if entry.name.endswith(".yaml"):
            out.append(entry.name[:-5])
    return sorted(out)


def builtin_text(name):
    ref = resources.files(_PKG) / (name + ".yaml")
    if not ref.is_file():
        raise ConfigError(
            "unknown preset %r (available: %s)" % (name, ", ".join(builtin_names()))
        )
    return ref.read_text()


def load(path_or_name):
    """Load a scenario from a file path or a built-in preset name."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            return parse(fh.read())
    if "/" not in path_or_name and not path_or_name.endswith(".yaml"):
        return parse(builtin_text(path_or_name))
    raise ConfigError("config file not found: %s" % path_or_name)


# ---------------------------------------------------------------------------
# parameter and field specs


def _build_param(spec, what):
    """Number, or a mapping with a 'kind' selecting a heterogeneity."""
    if isinstance(spec, (int, float)):
        return float(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("parameter %r must be a number or a kind-mapping" % what)
    kind = spec["kind"]
    try:
        if kind == "two-phase-disk":
            return mat.two_phase_disk(
                float(spec["inside"]), float(spec["outside"]),
                [float(c) for c in spec["center"]], float(spec["radius"]),
            )
        if kind == "two-phase-slab":
            return mat.two_phase_slab(
                float(spec["low"]), float(spec["high"]),
                int(spec["axis"]), float(spec["threshold"]),
            )
        if kind == "sinusoidal":
            return mat.sinusoidal(
                float(spec["base"]), float(spec["amplitude"]),
                [float(k) for k in spec["wavevector"]],
                float(spec.get("phase", 0.0)),
            )
    except KeyError as exc:
        raise ConfigError("parameter %r (%s) is missing key %s" % (what, kind, exc))
    raise ConfigError("unknown heterogeneity kind %r for %r" % (kind, what))


def build_material(cfg: ScenarioConfig) -> mat.MaterialModel:
    mc = cfg.material
    if mc["family"] != "neo-hookean":
        raise ConfigError("unknown material family %r" % mc["family"])
    params = mc["parameters"]
    phi_kwargs = {}
    for key in ("mu", "kappa", "g_c", "c_alpha", "a0"):
        if key in params:
            phi_kwargs[key] = _build_param(params[key], key)
    if "eta" in params:
        phi_kwargs["eta"] = float(params["eta"])
    extra = set(params) - {"mu", "kappa", "g_c", "c_alpha", "a0", "eta"}
    if extra:
        raise ConfigError("unknown material parameter(s): %s" % sorted(extra))
    phi = mat.NeoHookean(**phi_kwargs)

    vp = dict(mc["viscoplastic"])
    family = vp.pop("family", "quadratic")
    if family == "quadratic":
        zeta_vp = mat.QuadraticViscoplastic(theta=_build_param(vp.pop("theta", 1.0), "theta"))
    elif family == "quartic":
        zeta_vp = mat.QuarticViscoplastic(
            a=_build_param(vp.pop("a", 1.0), "a"),
            b=_build_param(vp.pop("b", 1.0), "b"),
        )
    else:
        raise ConfigError("unknown viscoplastic family %r" % family)
    if vp:
        raise ConfigError("unknown viscoplastic key(s): %s" % sorted(vp))

    zeta_dm = None
    if mc["damage"] is not None:
        dm = dict(mc["damage"])
        zeta_dm = mat.DamagePotential(
            G=_build_param(dm.pop("G", 1.0), "G"),
            mode=str(dm.pop("mode", "bidirectional")),
        )
        if dm:
            raise ConfigError("unknown damage key(s): %s" % sorted(dm))
    diffusion = None
    if mc["diffusion"] is not None:
        df = dict(mc["diffusion"])
        diffusion = mat.DiffusionLaw(
            m0=_build_param(df.pop("m0", 1.0), "m0"),
            m1=float(df.pop("m1", 0.0)),
        )
        if df:
            raise ConfigError("unknown diffusion key(s): %s" % sorted(df))

    return mat.MaterialModel(
        phi=phi,
        truncation=mat.TruncationParams(float(mc["truncation_lambda"])),
        zeta_vp=zeta_vp, zeta_dm=zeta_dm, diffusion=diffusion,
        mu_visc=float(mc["mu_visc"]), lam_visc=float(mc["lam_visc"]),
        nu=float(mc["nu"]), p_hyper=float(mc["p_hyper"]),
        literal_damage_sign=bool(mc["literal_damage_sign"]),
    )


def build_grid(cfg: ScenarioConfig) -> Grid:
    gc = cfg.grid
    return Grid(tuple(gc["shape"]), tuple(gc["extent"]), gc["bc"])


def _scalar_field(spec, X, what):
    return np.broadcast_to(
        mat._eval_param(_build_param(spec, what), X), X.shape[:-1]
    ).astype(float).copy()


def _velocity_field(spec, grid: Grid):
    X = grid.coords()
    v = np.zeros(grid.shape + (grid.d,))
    if spec == "zero":
        return v
    if isinstance(spec, dict) and spec.get("kind") == "uniform":
        vals = [float(c) for c in spec["value"]]
        if len(vals) != grid.d:
            raise ConfigError("uniform v0 needs %d components" % grid.d)
        v[...] = vals
        return v
    if isinstance(spec, dict) and spec.get("kind") == "smooth-shear":
        a = float(spec.get("amplitude", 0.05))
        L = grid.extent
        sx = np.sin(2 * np.pi * X[..., 0] / L[0])
        cx = np.cos(2 * np.pi * X[..., 0] / L[0])
        sy = np.sin(2 * np.pi * X[..., 1] / L[1]) if grid.d > 1 else 1.0
        v[..., 0] = a * sx * sy
        if grid.d > 1:
            v[..., 1] = a * cx * sy
        return v
    raise ConfigError("unknown v0 spec %r" % spec)


def _fe_field(spec, grid: Grid):
    import eulervisc.tensor_core as tc

    if spec == "identity":
        return tc.identity(grid.shape)
    if isinstance(spec, dict) and spec.get("kind") == "uniform":
        M = np.asarray(spec["matrix"], dtype=float)
        if M.shape != (3, 3):
            raise ConfigError("Fe0 matrix must be 3x3")
        Fe = np.empty(grid.shape + (3, 3))
        Fe[...] = M
        return Fe
    if isinstance(spec, dict) and spec.get("kind") == "slab-stretch":
        # diag(1+s, 1/(1+s), 1) inside a slab along `axis`, identity outside
        s = float(spec["stretch"])
        axis = int(spec.get("axis", 0))
        lo, hi = float(spec["low"]), float(spec["high"])
        X = grid.coords()
        inside = (X[..., axis] >= lo) & (X[..., axis] <= hi)
        Fe = tc.identity(grid.shape)
        Fe[..., 0, 0] = np.where(inside, 1.0 + s, 1.0)
        Fe[..., 1, 1] = np.where(inside, 1.0 / (1.0 + s), 1.0)
        return Fe
    raise ConfigError("unknown Fe0 spec %r" % spec)


def build_state(cfg: ScenarioConfig, grid: Grid) -> State:
    X = grid.coords()
    state = State.rest(grid)
    state.rho = _scalar_field(cfg.initial["rho0"], X, "rho0")
    state.alpha = _scalar_field(cfg.initial["alpha0"], X, "alpha0")
    state.v = _velocity_field(cfg.initial["v0"], grid)
    state.Fe = _fe_field(cfg.initial["Fe0"], grid)
    return state


def build_step_config(cfg: ScenarioConfig, tau=None) -> StepConfig:
    return StepConfig(tau=cfg.tau if tau is None else float(tau), **cfg.solver)


def drive_function(cfg: ScenarioConfig):
    """Prescribed homogeneous velocity gradient t -> 3x3 for 0d mode."""
    spec = cfg.drive
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("drive must be a mapping with a 'kind'")
    kind = spec["kind"]
    if kind == "rotation":
        omega = float(spec.get("omega", 1.0))
        W = np.array([[0.0, -omega, 0.0], [omega, 0.0, 0.0], [0.0, 0.0, 0.0]])
        return lambda t: W
    if kind == "shear":
        rate = float(spec.get("rate", 0.3))
        G = np.zeros((3, 3))
        G[0, 1] = rate
        return lambda t: G
    if kind == "extension":
        a = float(spec.get("a", 0.3))
        return lambda t: (a / 3.0) * np.eye(3)
    raise ConfigError("unknown drive kind %r" % kind)


def initial_fe_0d(cfg: ScenarioConfig):
    spec = cfg.initial["Fe0"]
    if spec == "identity":
        return np.eye(3)
    if isinstance(spec, dict) and spec.get("kind") == "uniform":
        M = np.asarray(spec["matrix"], dtype=float)
        if M.shape != (3, 3):
            raise ConfigError("Fe0 matrix must be 3x3")
        return M
    raise ConfigError("unknown 0d Fe0 spec %r" % spec)
