"""Run configuration: one JSON document holding every pipeline knob."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import LabelScheme
from .errors import ConfigError
from .nn.model import DEFAULT_FC_WIDTHS
from .synth import SynthConfig


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = "corpus"
    out: str = "out"


@dataclass(frozen=True)
class FilterConfig:
    low_hz: float = 50.0
    high_hz: float = 2500.0
    order: int = 6

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz:
            raise ValueError("filter band must satisfy 0 < low_hz < high_hz")
        if self.order < 1:
            raise ValueError("filter order must be >= 1")


@dataclass(frozen=True)
class EmdConfig:
    max_imfs: int = 9
    sd_threshold: float = 0.2
    max_sifts: int = 50

    def __post_init__(self):
        if self.max_imfs < 1 or self.max_sifts < 1 or not self.sd_threshold > 0:
            raise ValueError("EMD knobs must be positive")


@dataclass(frozen=True)
class CwtConfig:
    gamma: float = 3.0
    time_bandwidth: float = 60.0
    voices_per_octave: int = 10

    def __post_init__(self):
        if not (self.gamma > 0 and self.time_bandwidth > 0 and self.voices_per_octave >= 1):
            raise ValueError("CWT knobs must be positive")


@dataclass(frozen=True)
class RenderConfig:
    floor_db: float = -80.0
    majority_classes: tuple[str, ...] = ("COPD",)

    def __post_init__(self):
        object.__setattr__(self, "majority_classes", tuple(self.majority_classes))
        if not self.floor_db < 0:
            raise ValueError("floor_db must be negative")


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.8

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError("split ratio must lie in (0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    fc_widths: tuple[int, ...] = DEFAULT_FC_WIDTHS
    dropout: float = 0.5
    # Square input side; images are resized from the rendered size when smaller.
    input_size: int = 224

    def __post_init__(self):
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.input_size < 16 or self.input_size > 224:
            raise ValueError("input_size must lie in [16, 224]")


@dataclass(frozen=True)
class TrainSection:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 6
    epochs: int = 30
    dtype: str = "float64"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0
    scheme: str = "pathological6"
    mode: str = "hybrid"
    threads: int = 1
    synth: SynthConfig = field(default_factory=SynthConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    emd: EmdConfig = field(default_factory=EmdConfig)
    cwt: CwtConfig = field(default_factory=CwtConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def __post_init__(self):
        if self.scheme not in {s.value for s in LabelScheme}:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mode not in ("hybrid", "conventional"):
            raise ValueError(f"mode must be hybrid or conventional, got {self.mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def label_scheme(self) -> LabelScheme:
        return LabelScheme(self.scheme)

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "config")

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level fields or ``section__field`` entries changed."""
        data = self.to_dict()
        for key, value in changes.items():
            if "__" in key:
                section, name = key.split("__", 1)
                data.setdefault(section, {})[name] = value
            else:
                data[key] = value
        return RunConfig.from_dict(data)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(value)
    return value


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = _default(fields[name])
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, default, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
