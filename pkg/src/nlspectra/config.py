"""Run configuration: TOML ingestion, validation, and problem assembly.

Configurations are nested TOML tables (hand-editable, diff-friendly):

    [domain]
    boundary = "dirichlet"            # dirichlet | neumann | periodic
    box = [[0.0, 1.0]]                # per-axis [lo, hi]

    [kernel]
    profile = "bump"
    power = 3
    delta = 0.3

    [coupling]
    k = 2
    period = 1.0
    entries = [["x1", "1"], ["1", "x1"]]   # row-major K x K expressions

    [numerics]
    resolution = [16]                 # per axis (scalar broadcast allowed)
    time_steps = 256
    ...

Parsing and serialization round-trip: parse -> serialize -> parse yields an
identical configuration.
"""

import dataclasses
import json
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import discretization as dz
from .coupling import CouplingField
from .spectral_engine import build_system


class ConfigError(ValueError):
    pass


def _require(table, key, kinds, where, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}.{key} is required")
        return default
    val = table[key]
    if kinds is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{where}.{key} must be a boolean")
        return val
    if kinds is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{where}.{key} must be an integer")
        return val
    if kinds is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{where}.{key} must be a number")
        return float(val)
    if kinds is str:
        if not isinstance(val, str):
            raise ConfigError(f"{where}.{key} must be a string")
        return val
    if kinds is list:
        if not isinstance(val, list):
            raise ConfigError(f"{where}.{key} must be an array")
        return val
    raise AssertionError(kinds)


def _positive(value, where):
    if not value > 0:
        raise ConfigError(f"{where} must be positive, got {value}")
    return value


@dataclass(frozen=True)
class DomainConfig:
    boundary: str
    box: tuple
    periods: tuple = None

    @property
    def dim(self):
        return len(self.box)


@dataclass(frozen=True)
class KernelConfig:
    profile: str = "bump"
    delta: float = 0.3
    power: int = 3


@dataclass(frozen=True)
class CouplingConfig:
    k: int
    period: float
    entries: tuple


@dataclass(frozen=True)
class NumericsConfig:
    resolution: tuple = (16,)
    time_steps: int = 256
    power_tol: float = 1e-13
    power_max_iter: int = 5000
    dense_cap: int = 160
    bracket_tol: float = 1e-6
    margin_tol: float = 1e-6
    time_samples: int = 16
    max_state_dim: int = 200_000


@dataclass(frozen=True)
class CommandConfig:
    deltas: tuple = None
    levels: int = 3
    nodes_per_radius: float = 3.0


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "out"
    eigenfunction_csv: bool = True


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig
    kernel: KernelConfig
    coupling: CouplingConfig
    numerics: NumericsConfig
    command: CommandConfig
    output: OutputConfig

    def to_dict(self):
        d = {
            "domain": {
                "boundary": self.domain.boundary,
                "box": [list(b) for b in self.domain.box],
            },
            "kernel": {
                "profile": self.kernel.profile,
                "delta": self.kernel.delta,
                "power": self.kernel.power,
            },
            "coupling": {
                "k": self.coupling.k,
                "period": self.coupling.period,
                "entries": [list(row) for row in self.coupling.entries],
            },
            "numerics": {
                "resolution": list(self.numerics.resolution),
                "time_steps": self.numerics.time_steps,
                "power_tol": self.numerics.power_tol,
                "power_max_iter": self.numerics.power_max_iter,
                "dense_cap": self.numerics.dense_cap,
                "bracket_tol": self.numerics.bracket_tol,
                "margin_tol": self.numerics.margin_tol,
                "time_samples": self.numerics.time_samples,
                "max_state_dim": self.numerics.max_state_dim,
            },
            "command": {
                "levels": self.command.levels,
                "nodes_per_radius": self.command.nodes_per_radius,
            },
            "output": {
                "out_dir": self.output.out_dir,
                "eigenfunction_csv": self.output.eigenfunction_csv,
            },
        }
        if self.domain.periods is not None:
            d["domain"]["periods"] = list(self.domain.periods)
        if self.command.deltas is not None:
            d["command"]["deltas"] = list(self.command.deltas)
        return d

    def to_toml(self):
        return _render_toml(self.to_dict())


def _render_toml(tree):
    lines = []
    for name in tree:
        table = tree[name]
        lines.append(f"[{name}]")
        for key, val in table.items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return repr(v)
    if isinstance(v, float):
        r = repr(v)
        return r if ("." in r or "e" in r or "E" in r) else r + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"unsupported config value {v!r}")


def parse_config(tree):
    """Validate a parsed TOML tree into a RunConfig."""
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a table")
    known = {"domain", "kernel", "coupling", "numerics", "command", "output"}
    for key in tree:
        if key not in known:
            raise ConfigError(f"unknown config table [{key}]")

    dom_t = tree.get("domain")
    if not isinstance(dom_t, dict):
        raise ConfigError("missing [domain] table")
    boundary = _require(dom_t, "boundary", str, "domain", required=True)
    if boundary not in (dz.DIRICHLET, dz.NEUMANN, dz.PERIODIC):
        raise ConfigError(
            f"domain.boundary must be one of dirichlet/neumann/periodic, "
            f"got {boundary!r}"
        )
    box_raw = _require(dom_t, "box", list, "domain", required=True)
    box = []
    for i, pair in enumerate(box_raw):
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in pair)):
            raise ConfigError(f"domain.box[{i}] must be a [lo, hi] pair")
        lo, hi = float(pair[0]), float(pair[1])
        if not hi > lo:
            raise ConfigError(f"domain.box[{i}] must have hi > lo")
        box.append((lo, hi))
    periods = None
    if "periods" in dom_t:
        per_raw = _require(dom_t, "periods", list, "domain")
        periods = tuple(float(p) for p in per_raw)
        for i, p in enumerate(periods):
            _positive(p, f"domain.periods[{i}]")
    domain = DomainConfig(boundary=boundary, box=tuple(box), periods=periods)

    ker_t = tree.get("kernel", {})
    kernel = KernelConfig(
        profile=_require(ker_t, "profile", str, "kernel", default="bump"),
        delta=_positive(_require(ker_t, "delta", float, "kernel", default=0.3),
                        "kernel.delta"),
        power=_require(ker_t, "power", int, "kernel", default=3),
    )
    if kernel.power < 1:
        raise ConfigError("kernel.power must be >= 1")

    cpl_t = tree.get("coupling")
    if not isinstance(cpl_t, dict):
        raise ConfigError("missing [coupling] table")
    k = _require(cpl_t, "k", int, "coupling", required=True)
    if k < 1:
        raise ConfigError("coupling.k must be >= 1")
    period = _require(cpl_t, "period", float, "coupling", required=True)
    _positive(period, "coupling.period")
    entries_raw = _require(cpl_t, "entries", list, "coupling", required=True)
    if len(entries_raw) != k or any(
            not isinstance(row, list) or len(row) != k for row in entries_raw):
        raise ConfigError(f"coupling.entries must be a {k}x{k} array of strings")
    for i, row in enumerate(entries_raw):
        for j, src in enumerate(row):
            if not isinstance(src, str):
                raise ConfigError(f"coupling.entries[{i}][{j}] must be a string")
    coupling = CouplingConfig(
        k=k, period=period,
        entries=tuple(tuple(row) for row in entries_raw),
    )

    num_t = tree.get("numerics", {})
    res_raw = num_t.get("resolution", [16] * domain.dim)
    if isinstance(res_raw, int) and not isinstance(res_raw, bool):
        res = (res_raw,) * domain.dim
    elif isinstance(res_raw, list):
        res = tuple(res_raw)
    else:
        raise ConfigError("numerics.resolution must be an integer or array")
    if len(res) != domain.dim:
        raise ConfigError(
            f"numerics.resolution has {len(res)} axes, domain has {domain.dim}"
        )
    for r in res:
        if isinstance(r, bool) or not isinstance(r, int) or r < 2:
            raise ConfigError("numerics.resolution entries must be integers >= 2")
    numerics = NumericsConfig(
        resolution=res,
        time_steps=_require(num_t, "time_steps", int, "numerics", default=256),
        power_tol=_require(num_t, "power_tol", float, "numerics", default=1e-13),
        power_max_iter=_require(num_t, "power_max_iter", int, "numerics",
                                default=5000),
        dense_cap=_require(num_t, "dense_cap", int, "numerics", default=160),
        bracket_tol=_require(num_t, "bracket_tol", float, "numerics",
                             default=1e-6),
        margin_tol=_require(num_t, "margin_tol", float, "numerics",
                            default=1e-6),
        time_samples=_require(num_t, "time_samples", int, "numerics",
                              default=16),
        max_state_dim=_require(num_t, "max_state_dim", int, "numerics",
                               default=200_000),
    )
    if numerics.time_steps < 16:
        raise ConfigError("numerics.time_steps must be >= 16")
    for name in ("power_tol", "bracket_tol", "margin_tol"):
        _positive(getattr(numerics, name), f"numerics.{name}")

    cmd_t = tree.get("command", {})
    deltas = None
    if "deltas" in cmd_t:
        deltas_raw = _require(cmd_t, "deltas", list, "command")
        deltas = tuple(float(d) for d in deltas_raw)
        for i, d in enumerate(deltas):
            _positive(d, f"command.deltas[{i}]")
    command = CommandConfig(
        deltas=deltas,
        levels=_require(cmd_t, "levels", int, "command", default=3),
        nodes_per_radius=_require(cmd_t, "nodes_per_radius", float, "command",
                                  default=3.0),
    )
    if command.levels < 2:
        raise ConfigError("command.levels must be >= 2")

    out_t = tree.get("output", {})
    output = OutputConfig(
        out_dir=_require(out_t, "out_dir", str, "output", default="out"),
        eigenfunction_csv=_require(out_t, "eigenfunction_csv", bool, "output",
                                   default=True),
    )
    return RunConfig(domain=domain, kernel=kernel, coupling=coupling,
                     numerics=numerics, command=command, output=output)


def load_config(path):
    """Parse and validate a TOML configuration file."""
    with open(path, "rb") as f:
        try:
            tree = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"TOML parse failure in {path}: {e}") from None
    return parse_config(tree)


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(config.to_toml())


def with_overrides(config, kernel_delta=None, resolution=None, time_steps=None):
    """A copy of the configuration with selected numerics replaced."""
    kernel = config.kernel
    numerics = config.numerics
    if kernel_delta is not None:
        kernel = dataclasses.replace(kernel, delta=float(kernel_delta))
    if resolution is not None:
        numerics = dataclasses.replace(numerics, resolution=tuple(resolution))
    if time_steps is not None:
        numerics = dataclasses.replace(numerics, time_steps=int(time_steps))
    return dataclasses.replace(config, kernel=kernel, numerics=numerics)


@dataclass
class Problem:
    """Assembled objects for one configuration."""

    config: RunConfig
    kernel: object
    domain: object
    grid: object
    field: object
    system: object


def build_problem(config, validate=True):
    """Assemble kernel, domain, grid, coupling field, and system."""
    domain = dz.DomainSpec(
        boundary=config.domain.boundary,
        box=config.domain.box,
        periods=config.domain.periods,
    )
    kernel = dz.build_kernel(
        profile=config.kernel.profile, delta=config.kernel.delta,
        dim=domain.dim, power=config.kernel.power,
    )
    grid = dz.build_grid(domain, config.numerics.resolution)
    field = CouplingField(
        k=config.coupling.k,
        period=config.coupling.period,
        dim=domain.dim,
        entries=config.coupling.entries,
        periods=domain.periods if domain.boundary == dz.PERIODIC else None,
        box=domain.box,
    )
    system = build_system(
        kernel, grid, domain, field,
        steps=config.numerics.time_steps,
        time_samples=config.numerics.time_samples,
        validate=validate,
    )
    return Problem(config=config, kernel=kernel, domain=domain, grid=grid,
                   field=field, system=system)
