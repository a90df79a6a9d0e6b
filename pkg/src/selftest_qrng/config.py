"""Pipeline configuration: YAML schema, validation and defaults.

Every key is checked against the schema below; unknown keys, wrong types and
broken invariants raise :class:`ConfigError` naming the dotted field and, when
the value came from a file, its line.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, InvariantViolation
from .photonics import DriftParams, SourceConfig


@dataclass(frozen=True)
class NoiseSettings:
    """Detector noise, given either as a variance or as a bit-flip probability.

    A flip probability is converted to a variance at the source operating
    point (balanced threshold).
    """

    electronic_noise_variance: float | None = None
    flip_probability: float | None = 0.05
    lo_phase: float = 0.0

    def __post_init__(self):
        if self.electronic_noise_variance is not None and self.flip_probability is not None:
            raise InvariantViolation(
                "give either electronic_noise_variance or flip_probability, not both")
        if self.electronic_noise_variance is None and self.flip_probability is None:
            raise InvariantViolation("one of electronic_noise_variance or flip_probability is required")
        if self.electronic_noise_variance is not None and self.electronic_noise_variance < 0:
            raise InvariantViolation("electronic_noise_variance must be >= 0")
        if self.flip_probability is not None and not 0 <= self.flip_probability < 0.5:
            raise InvariantViolation("flip_probability must be in [0, 0.5)")


@dataclass(frozen=True)
class DriftSettings:
    phase_diffusion: float = 5e-4
    polarization_floor: float = 0.8
    polarization_rate: float = 1.0 / 3600.0
    initial_phase_offset: float = 0.0
    step_pulses: int = 1 << 16

    def __post_init__(self):
        self.params()
        if self.step_pulses < 1:
            raise InvariantViolation("step_pulses must be >= 1")

    def params(self) -> DriftParams:
        return DriftParams(self.phase_diffusion, self.polarization_floor, self.polarization_rate)


@dataclass(frozen=True)
class ControlSettings:
    threshold_tolerance: float = 1e-9
    search_bounds: tuple[float, float] = (-10.0, 10.0)
    max_iterations: int = 200
    retune_threshold: bool = True
    phase_feedback: bool = True
    step_size: float = 0.1
    min_step: float = 0.05
    max_step: float = 0.5

    def __post_init__(self):
        if not self.threshold_tolerance > 0:
            raise InvariantViolation("threshold_tolerance must be > 0")
        lo, hi = self.search_bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvariantViolation("search_bounds must be finite and ordered")
        if not self.step_size > 0:
            raise InvariantViolation("step_size must be > 0")
        if not 0 < self.min_step <= self.max_step:
            raise InvariantViolation("need 0 < min_step <= max_step")


@dataclass(frozen=True)
class CertificationSettings:
    omega: float = 0.0105
    energy_convention: str = "sum"
    statistical_slack: bool = True
    attack_check: bool = False
    d_t: int = 4
    attack_budget: int = 200
    attack_tolerance: float = 1e-4

    def __post_init__(self):
        if not self.omega >= 0:
            raise InvariantViolation("omega must be >= 0")
        if self.energy_convention not in ("sum", "average"):
            raise InvariantViolation("energy_convention must be 'sum' or 'average'")
        if self.d_t < 2 or self.attack_budget < 1 or not self.attack_tolerance > 0:
            raise InvariantViolation("need d_t >= 2, attack_budget >= 1, attack_tolerance > 0")


@dataclass(frozen=True)
class FiniteSizeSettings:
    """``c`` and ``d`` are required; there is no default for them."""

    c: float
    d: float
    epsilon: float = 2.0 ** -64
    epsilon_prime: float = 2.0 ** -64

    def __post_init__(self):
        for name in ("c", "d"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise InvariantViolation(f"{name} must be a finite number >= 0")
        for name in ("epsilon", "epsilon_prime"):
            if not 0 < getattr(self, name) < 1:
                raise InvariantViolation(f"{name} must be in (0, 1)")


@dataclass(frozen=True)
class ExtractionSettings:
    epsilon_ext: float = 2.0 ** -32
    entropy_threshold: float = 0.04
    seed_file: str | None = None

    def __post_init__(self):
        if not 0 < self.epsilon_ext < 1:
            raise InvariantViolation("epsilon_ext must be in (0, 1)")
        if not 0 < self.entropy_threshold <= 1:
            raise InvariantViolation("entropy_threshold must be in (0, 1]")


@dataclass(frozen=True)
class InjectedWindow:
    t_seconds: float
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise InvariantViolation("factor must be > 0")


@dataclass(frozen=True)
class EnergySettings:
    eta: float = 1e-3
    window_seconds: float = 1.0
    injected: tuple[InjectedWindow, ...] = ()

    def __post_init__(self):
        if not self.eta > 0 or not self.window_seconds > 0:
            raise InvariantViolation("eta and window_seconds must be > 0")


@dataclass(frozen=True)
class RunSettings:
    """Block timing.

    With ``time_compression = K`` each block simulates ``1/K`` of its pulses
    while drift rates are multiplied by ``K``; finite-size corrections are
    still evaluated at the full (target) block length.
    """

    block_seconds: float = 1.0
    total_seconds: float = 20.0
    time_compression: float = 1.0
    chunk_size: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        if not self.block_seconds > 0:
            raise InvariantViolation("block_seconds must be > 0")
        if not self.total_seconds >= self.block_seconds:
            raise InvariantViolation("block_seconds must not exceed total_seconds")
        if not self.time_compression >= 1:
            raise InvariantViolation("time_compression must be >= 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise InvariantViolation("chunk_size and workers must be >= 1")


@dataclass(frozen=True)
class OutputSettings:
    out_dir: str = "out"
    bits_file: str = "bits.bin"
    report_file: str = "report.json"
    blocks_csv: str = "blocks.csv"
    energy_csv: str = "energy.csv"


@dataclass(frozen=True)
class PipelineConfig:
    finite_size: FiniteSizeSettings
    seed: int = 0
    source: SourceConfig = field(default_factory=SourceConfig)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    drift: DriftSettings = field(default_factory=DriftSettings)
    control: ControlSettings = field(default_factory=ControlSettings)
    certification: CertificationSettings = field(default_factory=CertificationSettings)
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    energy: EnergySettings = field(default_factory=EnergySettings)
    run: RunSettings = field(default_factory=RunSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvariantViolation("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def replace(self, **sections) -> "PipelineConfig":
        return dataclasses.replace(self, **sections)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


SECTIONS: dict[str, type] = {
    "source": SourceConfig,
    "noise": NoiseSettings,
    "drift": DriftSettings,
    "control": ControlSettings,
    "certification": CertificationSettings,
    "finite_size": FiniteSizeSettings,
    "extraction": ExtractionSettings,
    "energy": EnergySettings,
    "run": RunSettings,
    "output": OutputSettings,
}


def _lines(node, prefix: str = "", out: dict | None = None) -> dict[str, int]:
    """Map dotted key paths to 1-based line numbers of a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _lines(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _lines(item, path, out)
    return out


def _coerce(value: Any, ftype, path: str, line):
    """Light type checking for scalar fields."""
    text = str(ftype)
    if value is None:
        if "None" in text:
            return None
        raise ConfigError("value must not be null", path, line)
    if "tuple[InjectedWindow" in text:
        if not isinstance(value, list):
            raise ConfigError("expected a list of {t_seconds, factor}", path, line)
        return tuple(_build(InjectedWindow, v, f"{path}[{i}]", {}) for i, v in enumerate(value))
    if text.startswith("tuple"):
        if not (isinstance(value, list) and len(value) == 2):
            raise ConfigError("expected a two-element list", path, line)
        return tuple(float(_number(v, path, line)) for v in value)
    if "bool" in text:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path, line)
        return value
    if text.startswith("int") or text == "<class 'int'>":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path, line)
        return value
    if "float" in text:
        return _number(value, path, line)
    if "str" in text:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path, line)
        return value
    return value


def _number(value, path, line) -> float:
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms such as 12.5e6 as strings
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path, line)
    return float(value)


def _build(cls, data, path: str, lines: dict[str, int]):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path, lines.get(path))
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            sub = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(fields))})",
                              sub, lines.get(sub))
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(value, fields[name].type, sub, lines.get(sub))
    try:
        return cls(**kwargs)
    except InvariantViolation as exc:
        bad = _failing_field(str(exc), fields)
        sub = f"{path}.{bad}" if bad else path
        raise ConfigError(str(exc), sub or None, lines.get(sub, lines.get(path))) from exc
    except TypeError as exc:
        missing = [n for n, f in fields.items() if n not in kwargs
                   and f.default is dataclasses.MISSING
                   and f.default_factory is dataclasses.MISSING]
        sub = f"{path}.{missing[0]}" if missing else path
        raise ConfigError(f"missing required key(s): {', '.join(missing) or exc}",
                          sub, lines.get(path)) from exc


def _failing_field(message: str, fields) -> str | None:
    for name in sorted(fields, key=len, reverse=True):
        if message.startswith(name) or f" {name} " in f" {message} ":
            return name
    return None


def config_from_dict(data: dict, lines: dict[str, int] | None = None) -> PipelineConfig:
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    allowed = set(SECTIONS) | {"seed"}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                              str(key), lines.get(str(key)))
    if "finite_size" not in data:
        raise ConfigError("section is required (c and d have no defaults)", "finite_size")
    kwargs: dict[str, Any] = {}
    for name, cls in SECTIONS.items():
        if name in data:
            section = data[name]
            if (name == "noise" and isinstance(section, dict)
                    and "electronic_noise_variance" in section
                    and "flip_probability" not in section):
                section = {**section, "flip_probability": None}
            kwargs[name] = _build(cls, section, name, lines)
    if "seed" in data:
        seed = data["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer", "seed", lines.get("seed"))
        kwargs["seed"] = seed
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    """Parse and validate a YAML configuration file."""
    text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {exc}",
                          line=None if mark is None else mark.line + 1) from exc
    return config_from_dict(data if data is not None else {},
                            _lines(node) if node is not None else {})


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
