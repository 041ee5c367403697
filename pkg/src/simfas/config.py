"""Experiment configuration: nested YAML with unit-suffixed keys.

Example::

    geometry:
      num_layers: 3
      atoms_per_layer: 16
      wavelength_m: 0.1
    budget:
      noise_dbm: -96
    sweep:
      tx_power_dbm: [8, 9, 10, 11]

Every section and key is optional except ``sweep``, which must name exactly
one axis. Unknown keys are rejected so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class GeometryConfig:
    num_layers: int = 3
    atoms_per_layer: int = 16
    wavelength_m: float = 0.1
    thickness_wavelengths: float = 5.0
    atom_pitch_wavelengths: float = 0.5


@dataclass(frozen=True)
class ChannelConfig:
    height_m: float = 10.0
    distance_m: float = 60.0
    pathloss_exponent: float = 3.5
    ref_gain_db: float = -30.0
    rician_k: float = 2.0


@dataclass(frozen=True)
class BudgetConfig:
    tx_power_dbm: float = 10.0
    noise_dbm: float = -96.0
    target_rate_bps_hz: float = 6.0


@dataclass(frozen=True)
class FasSection:
    num_ports: int = 50
    aperture_wavelengths: float = 5.0


@dataclass(frozen=True)
class PartitionConfig:
    mu_sq: float = 0.97
    max_block: int | None = None
    block_sizes: tuple | None = None  # explicit partition; overrides the greedy rule


@dataclass(frozen=True)
class OptimizerSection:
    enabled: bool = True
    init: str = "los_matched"
    max_iters: int = 30
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    min_step: float = 1e-8
    grad_tol: float = 1e-9
    seed: int = 0


@dataclass(frozen=True)
class SystemConfig:
    """Which parts the evaluated system has; benchmarks are switched separately."""
    with_sim: bool = True
    with_fas: bool = True


@dataclass(frozen=True)
class BenchmarkConfig:
    no_sim: bool = True
    no_fas: bool = True


@dataclass(frozen=True)
class MonteCarloConfig:
    trials: int = 100_000
    seed: int = 0
    models: tuple = ("bdma",)
    batch: int = 4096


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8


@dataclass(frozen=True)
class GradCheckConfig:
    # random phases only give a resolvable outage well above the sweep powers
    tx_power_dbm: float = 32.0
    seed: int = 0
    fd_step: float = 1e-5
    tolerance: float = 1e-12


SWEEP_AXES = ("tx_power_dbm", "num_layers", "num_ports")


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "tx_power_dbm"
    values: tuple = (10.0,)


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    fas: FasSection = field(default_factory=FasSection)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    system: SystemConfig = field(default_factory=SystemConfig)
    benchmarks: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    grad_check: GradCheckConfig = field(default_factory=GradCheckConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_path: str = "results.csv"

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["monte_carlo"]["models"] = list(d["monte_carlo"]["models"])
        if d["partition"]["block_sizes"] is not None:
            d["partition"]["block_sizes"] = list(d["partition"]["block_sizes"])
        d["sweep"] = {self.sweep.axis: list(self.sweep.values)}
        d["output"] = {"path": d.pop("output_path")}
        return d

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


_SECTIONS = {
    "geometry": GeometryConfig, "channel": ChannelConfig, "budget": BudgetConfig,
    "fas": FasSection, "partition": PartitionConfig, "optimizer": OptimizerSection,
    "system": SystemConfig, "benchmarks": BenchmarkConfig, "monte_carlo": MonteCarloConfig,
    "quadrature": QuadratureConfig, "grad_check": GradCheckConfig,
}

_INIT_NAMES = ("zero", "random", "los_matched")
_MODEL_NAMES = ("bdma", "jakes")


def _coerce(name, value, default):
    """Convert ``value`` to the type of ``default``, naming the field on failure."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and default is not None:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [value]
            return tuple(str(v) for v in value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {type(default).__name__}") from None
    return value


def _section(cls, name, raw):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    kwargs = {}
    for key, value in raw.items():
        default = getattr(defaults, key)
        if value is None:
            if default is not None:
                raise ConfigError(f"{name}.{key}: value required")
            kwargs[key] = None
        elif default is None and isinstance(value, (list, tuple)):
            kwargs[key] = tuple(_coerce(f"{name}.{key}[{i}]", v, 0) for i, v in enumerate(value))
        elif default is None:  # optional integer
            kwargs[key] = _coerce(f"{name}.{key}", value, 0)
        else:
            kwargs[key] = _coerce(f"{name}.{key}", value, default)
    return cls(**kwargs)


def _parse_sweep(raw):
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ConfigError(f"sweep: exactly one axis required, one of {', '.join(SWEEP_AXES)}")
    (axis, values), = raw.items()
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep: unknown axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(f"sweep.{axis}: expected a non-empty list")
    proto = 0.0 if axis == "tx_power_dbm" else 0
    return SweepConfig(axis, tuple(_coerce(f"sweep.{axis}[{i}]", v, proto)
                                   for i, v in enumerate(values)))


def _validate(cfg: ExperimentConfig):
    g, c, b, f, p, o, mc = (cfg.geometry, cfg.channel, cfg.budget, cfg.fas,
                            cfg.partition, cfg.optimizer, cfg.monte_carlo)
    checks = [
        (g.num_layers >= 1, "geometry.num_layers must be >= 1"),
        (g.atoms_per_layer >= 1, "geometry.atoms_per_layer must be >= 1"),
        (g.wavelength_m > 0, "geometry.wavelength_m must be positive"),
        (g.thickness_wavelengths > 0, "geometry.thickness_wavelengths must be positive"),
        (g.atom_pitch_wavelengths > 0, "geometry.atom_pitch_wavelengths must be positive"),
        (c.height_m >= 0, "channel.height_m must be >= 0"),
        (c.distance_m > 0, "channel.distance_m must be positive"),
        (c.pathloss_exponent > 0, "channel.pathloss_exponent must be positive"),
        (c.rician_k >= 0, "channel.rician_k must be >= 0"),
        (b.target_rate_bps_hz >= 0, "budget.target_rate_bps_hz must be >= 0"),
        (f.num_ports >= 1, "fas.num_ports must be >= 1"),
        (f.aperture_wavelengths > 0, "fas.aperture_wavelengths must be positive"),
        (0 <= p.mu_sq < 1, "partition.mu_sq must lie in [0, 1)"),
        (p.max_block is None or p.max_block >= 1, "partition.max_block must be >= 1"),
        (p.block_sizes is None or (isinstance(p.block_sizes, tuple) and p.block_sizes
                                   and min(p.block_sizes) >= 1),
         "partition.block_sizes must be a non-empty list of positive integers"),
        (p.block_sizes is None or cfg.sweep.axis != "num_ports",
         "partition.block_sizes cannot be combined with a num_ports sweep"),
        (p.block_sizes is None or sum(p.block_sizes) == f.num_ports,
         "partition.block_sizes must sum to fas.num_ports"),
        (o.init in _INIT_NAMES, f"optimizer.init must be one of {', '.join(_INIT_NAMES)}"),
        (o.max_iters >= 0, "optimizer.max_iters must be >= 0"),
        (0 < o.backtrack_factor < 1, "optimizer.backtrack_factor must lie in (0, 1)"),
        (o.initial_step > 0 and o.min_step > 0 and o.grad_tol > 0,
         "optimizer step sizes and grad_tol must be positive"),
        (mc.trials >= 1, "monte_carlo.trials must be >= 1"),
        (mc.batch >= 1, "monte_carlo.batch must be >= 1"),
        (0 <= mc.seed < 2 ** 64, "monte_carlo.seed must be an unsigned 64-bit integer"),
        (all(m in _MODEL_NAMES for m in mc.models),
         f"monte_carlo.models entries must be in {', '.join(_MODEL_NAMES)}"),
        (cfg.quadrature.abs_tol > 0 and cfg.quadrature.rel_tol > 0,
         "quadrature tolerances must be positive"),
        (cfg.grad_check.fd_step > 0, "grad_check.fd_step must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if cfg.sweep.axis != "tx_power_dbm" and min(cfg.sweep.values) < 1:
        raise ConfigError(f"sweep.{cfg.sweep.axis}: values must be >= 1")


def from_dict(raw) -> ExperimentConfig:
    raw = dict(raw or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _section(cls, name, raw.pop(name, None))
    if "sweep" not in raw:
        raise ConfigError("sweep: missing; exactly one axis required")
    kwargs["sweep"] = _parse_sweep(raw.pop("sweep"))
    out = raw.pop("output", None) or {}
    if not isinstance(out, dict) or set(out) - {"path"}:
        raise ConfigError("output: only 'path' is allowed")
    if "path" in out:
        kwargs["output_path"] = str(out["path"])
    if raw:
        raise ConfigError(f"unknown section(s) {', '.join(sorted(raw))}")
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("top level of the config must be a mapping")
    return from_dict(raw)


def replace(cfg: ExperimentConfig, **sections):
    """Copy of ``cfg`` with the named sections' fields overridden, e.g.
    ``replace(cfg, monte_carlo={"seed": 3})``."""
    kwargs = {}
    for name, updates in sections.items():
        current = getattr(cfg, name)
        if dataclasses.is_dataclass(current) and isinstance(updates, dict):
            kwargs[name] = dataclasses.replace(current, **updates)
        else:
            kwargs[name] = updates
    new = dataclasses.replace(cfg, **kwargs)
    _validate(new)
    return new
