"""Scenario configuration: a single human-readable YAML key tree.

The schema is documented in README.md.  `parse` -> `serialize` -> `parse`
is an identity once defaults have been materialized by the first parse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

__all__ = ["ConfigError", "ScenarioConfig", "parse", "serialize", "apply_overrides"]


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


_TOP_KEYS = {
    "name", "mode", "grid", "material", "gravity", "tau", "T",
    "initial", "drive", "oracle", "solver", "output",
}

_GRID_KEYS = {"shape", "extent", "bc"}
_MATERIAL_KEYS = {
    "family", "parameters", "truncation_lambda", "viscoplastic",
    "damage", "diffusion", "mu_visc", "lam_visc", "nu", "p_hyper",
    "literal_damage_sign",
}
_SOLVER_KEYS = {
    "tol_momentum", "tol_transport", "max_newton", "eps_reg", "delta_reg",
    "continuation_stages", "r_reg", "damage_coupling", "transport_scheme",
    "retry_budget", "freeze_momentum", "complementarity_tol",
}
_INITIAL_KEYS = {"rho0", "v0", "Fe0", "alpha0"}
_OUTPUT_KEYS = {"snapshot_every"}


def _check_keys(section, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError("section %r must be a mapping" % section)
    extra = set(d) - allowed
    if extra:
        raise ConfigError(
            "unknown key(s) %s in section %r" % (sorted(extra), section)
        )


@dataclass
class ScenarioConfig:
    """Complete description of one run.

    mode "grid" integrates the full system on a structured grid; mode
    "0d" drives the constitutive system by a prescribed homogeneous
    velocity gradient (no momentum solve).  All quantities are SI; the
    shipped presets are nondimensional (unit density, unit box).
    """

    name: str
    mode: str = "grid"
    tau: float = 1e-2
    T: float = 0.1
    grid: dict | None = None
    material: dict = field(default_factory=dict)
    gravity: list = field(default_factory=lambda: [0.0, 0.0])
    initial: dict = field(default_factory=dict)
    drive: dict | None = None
    oracle: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        extra = set(raw) - _TOP_KEYS
        if extra:
            raise ConfigError("unknown top-level key(s): %s" % sorted(extra))
        if "name" not in raw:
            raise ConfigError("config needs a 'name'")
        mode = raw.get("mode", "grid")
        if mode not in ("grid", "0d"):
            raise ConfigError("mode must be 'grid' or '0d', got %r" % mode)

        grid = raw.get("grid")
        if mode == "grid":
            if grid is None:
                raise ConfigError("mode 'grid' requires a grid section")
            _check_keys("grid", grid, _GRID_KEYS)
            for key in ("shape", "extent"):
                if key not in grid:
                    raise ConfigError("grid section needs %r" % key)
            grid = {
                "shape": [int(n) for n in grid["shape"]],
                "extent": [float(x) for x in grid["extent"]],
                "bc": str(grid.get("bc", "periodic")),
            }
            if len(grid["shape"]) != len(grid["extent"]):
                raise ConfigError("grid shape and extent must have equal length")
        else:
            if grid is not None:
                raise ConfigError("mode '0d' takes no grid section")
            if raw.get("drive") is None:
                raise ConfigError("mode '0d' requires a drive section")

        material = dict(raw.get("material", {}))
        _check_keys("material", material, _MATERIAL_KEYS)
        if "truncation_lambda" not in material:
            raise ConfigError("material section needs 'truncation_lambda'")
        material.setdefault("family", "neo-hookean")
        material.setdefault("parameters", {})
        material.setdefault("viscoplastic", {"family": "quadratic", "theta": 0.2})
        material.setdefault("damage", None)
        material.setdefault("diffusion", None)
        material.setdefault("mu_visc", 1.0)
        material.setdefault("lam_visc", 0.0)
        material.setdefault("nu", 1e-3)
        material.setdefault("p_hyper", 2.0)
        material.setdefault("literal_damage_sign", False)
        if material["damage"] is not None and material["diffusion"] is not None:
            raise ConfigError("damage and diffusion are mutually exclusive")

        d = len(grid["shape"]) if grid is not None else 2
        gravity = [float(x) for x in raw.get("gravity", [0.0] * d)]
        if grid is not None and len(gravity) != d:
            raise ConfigError("gravity must have %d components" % d)

        initial = dict(raw.get("initial", {}))
        _check_keys("initial", initial, _INITIAL_KEYS)
        initial.setdefault("rho0", 1.0)
        initial.setdefault("v0", "zero")
        initial.setdefault("Fe0", "identity")
        initial.setdefault("alpha0", 1.0)

        solver = dict(raw.get("solver", {}))
        _check_keys("solver", solver, _SOLVER_KEYS)

        output = dict(raw.get("output", {}))
        _check_keys("output", output, _OUTPUT_KEYS)
        output.setdefault("snapshot_every", 0)

        tau = float(raw.get("tau", 1e-2))
        T = float(raw.get("T", 0.1))
        if tau <= 0 or T <= 0:
            raise ConfigError("tau and T must be positive")

        return ScenarioConfig(
            name=str(raw["name"]), mode=mode, tau=tau, T=T, grid=grid,
            material=material, gravity=gravity, initial=initial,
            drive=raw.get("drive"), oracle=dict(raw.get("oracle", {})),
            solver=solver, output=output,
        )

    def to_dict(self):
        d = asdict(self)
        if d["grid"] is None:
            del d["grid"]
        if d["drive"] is None:
            del d["drive"]
        return d


def parse(text):
    """YAML text -> validated ScenarioConfig with defaults filled in."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("malformed config: %s" % exc)
    return ScenarioConfig.from_dict(raw)


def serialize(cfg: ScenarioConfig):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def _parse_scalar(text):
    try:
        val = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("bad override value %r: %s" % (text, exc))
    if isinstance(val, str):
        # YAML 1.1 misses bare scientific notation like 1e-4
        try:
            return float(val)
        except ValueError:
            return val
    return val


def apply_overrides(raw: dict, overrides):
    """Apply dotted-path `key=value` overrides to a raw config mapping."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override %r is not of the form key=value" % item)
        path, _, value = item.partition("=")
        keys = path.strip().split(".")
        node = raw
        for key in keys[:-1]:
            nxt = node.get(key)
            if not isinstance(nxt, dict):
                nxt = {}
                node[key] = nxt
            node = nxt
        node[keys[-1]] = _parse_scalar(value)
    return raw
