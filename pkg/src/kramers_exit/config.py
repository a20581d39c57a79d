"""Experiment configuration files (TOML).

Example::

    epsilon = [0.1, 0.15, 0.2]
    methods = ["sharp", "lap11", "pde", "mc"]
    seed = 7
    output = "runs/radial"

    [potential]
    name = "isotropic_quadratic"

    [domain]
    name = "disk"
    params = { radius = 1.0 }

    [sde]
    dt = 1e-4
    n_paths = 10000
    crossing_mode = "bridge"

    [grid]
    h = 0.00390625

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

METHODS = ("sharp", "lap11", "lap12", "mc", "pde", "capacity-upper", "capacity-pde")


@dataclass
class NamedSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class SdeSettings:
    dt: float = 1e-3
    n_paths: int = 1000
    crossing_mode: str = "bridge"
    workers: int = 1
    max_steps: int | None = None
    max_censored_fraction: float = 0.01
    dump_raw: bool = False


@dataclass
class GridSettings:
    h: float = 1.0 / 128
    cut: str = "shortley-weller"


@dataclass
class ChartSettings:
    nodes: int = 128
    delta: float | None = None


@dataclass
class CapacitySettings:
    radius: float | None = None


@dataclass
class ExperimentConfig:
    potential: NamedSpec
    domain: NamedSpec
    epsilon: list
    methods: list
    seed: int = 0
    output: str = "run"
    start: list | None = None
    boundary_nodes: int = 256
    sde: SdeSettings = field(default_factory=SdeSettings)
    grid: GridSettings = field(default_factory=GridSettings)
    chart: ChartSettings = field(default_factory=ChartSettings)
    capacity: CapacitySettings = field(default_factory=CapacitySettings)

    def to_dict(self):
        return asdict(self)


_TOP = {"potential", "domain", "epsilon", "methods", "seed", "output", "start", "boundary",
        "sde", "grid", "chart", "capacity"}
_SECTIONS = {
    "boundary": {"nodes"},
    "sde": set(SdeSettings.__dataclass_fields__),
    "grid": set(GridSettings.__dataclass_fields__),
    "chart": set(ChartSettings.__dataclass_fields__),
    "capacity": set(CapacitySettings.__dataclass_fields__),
    "potential": {"name", "params"},
    "domain": {"name", "params"},
}


def _check_keys(table, allowed, where):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _typed(value, kind, where):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")
    return value


def _section(raw, name, cls, types):
    table = raw.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    _check_keys(table, _SECTIONS[name], f"[{name}]")
    kwargs = {}
    for k, v in table.items():
        kind = types.get(k)
        if kind is not None and v is not None:
            v = _typed(v, kind, f"{name}.{k}")
        kwargs[k] = v
    return cls(**kwargs)


def _named(raw, name):
    table = raw.get(name)
    if not isinstance(table, dict) or "name" not in table:
        raise ConfigError(f"[{name}] with a 'name' key is required")
    _check_keys(table, _SECTIONS[name], f"[{name}]")
    params = table.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{name}.params must be a table")
    return NamedSpec(_typed(table["name"], str, f"{name}.name"), dict(params))


def parse_config(raw):
    """Validate a parsed TOML document into an :class:`ExperimentConfig`."""
    _check_keys(raw, _TOP, "top level")
    eps = raw.get("epsilon")
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilon: a nonempty list of positive numbers is required")
    eps = [_typed(e, float, "epsilon[]") for e in eps]
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise ConfigError("epsilon: every value must be positive and finite")
    methods = raw.get("methods")
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods: a nonempty list is required")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"methods: unknown method(s) {bad}; choose from {list(METHODS)}")
    start = raw.get("start")
    if start is not None:
        if not isinstance(start, list) or len(start) != 2:
            raise ConfigError("start: expected a list of two numbers")
        start = [_typed(v, float, "start[]") for v in start]
    boundary = raw.get("boundary", {})
    _check_keys(boundary, _SECTIONS["boundary"], "[boundary]")
    cfg = ExperimentConfig(
        potential=_named(raw, "potential"),
        domain=_named(raw, "domain"),
        epsilon=eps,
        methods=list(methods),
        seed=_typed(raw.get("seed", 0), int, "seed"),
        output=_typed(raw.get("output", "run"), str, "output"),
        start=start,
        boundary_nodes=_typed(boundary.get("nodes", 256), int, "boundary.nodes"),
        sde=_section(raw, "sde", SdeSettings, {
            "dt": float, "n_paths": int, "crossing_mode": str, "workers": int,
            "max_steps": int, "max_censored_fraction": float, "dump_raw": bool,
        }),
        grid=_section(raw, "grid", GridSettings, {"h": float, "cut": str}),
        chart=_section(raw, "chart", ChartSettings, {"nodes": int, "delta": float}),
        capacity=_section(raw, "capacity", CapacitySettings, {"radius": float}),
    )
    if cfg.sde.crossing_mode not in ("interpolate", "bridge"):
        raise ConfigError("sde.crossing_mode: expected 'interpolate' or 'bridge'")
    if cfg.grid.cut not in ("shortley-weller", "staircase"):
        raise ConfigError("grid.cut: expected 'shortley-weller' or 'staircase'")
    return cfg


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
