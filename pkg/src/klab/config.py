"""Run configuration dataclasses and their YAML round-trip."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .errors import InvalidParameterError
from .synthdata import AugmentationSpec
from .teacher import Strategy, TemperatureConfig


@dataclass(frozen=True)
class MixtureConfig:
    """How the synthetic mixture is drawn; means come from the run seed."""

    k_true: int = 4
    input_dim: int = 16
    sigma: float = 0.2
    n_samples: int = 2048
    weights: tuple[float, ...] | None = None
    min_angle_deg: float = 30.0
    probe_samples: int = 256


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64, 64)
    embed_dim: int = 4
    k: int = 16
    zero_mean_head: bool = False
    freeze_head: bool = False


@dataclass(frozen=True)
class TrainSchedule:
    epochs_total: int = 200
    n_e: int = 5
    batch_size: int = 128
    learning_rate: float = 0.2
    ema_momentum: float = 0.9
    center_momentum: float = 0.9

    def __post_init__(self):
        if self.n_e < 1:
            raise InvalidParameterError("n_e must be >= 1")
        if self.epochs_total < 0 or self.batch_size < 1:
            raise InvalidParameterError("epochs_total must be >= 0 and batch_size >= 1")
        if not self.learning_rate >= 0:
            raise InvalidParameterError("learning_rate must be non-negative")
        for name in ("ema_momentum", "center_momentum"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    augmentation: AugmentationSpec = field(default_factory=lambda: AugmentationSpec(0.2, 0.1))
    model: ModelConfig = field(default_factory=ModelConfig)
    temperatures: TemperatureConfig = field(default_factory=TemperatureConfig)
    strategy: Strategy = Strategy.CENTERING
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    seed: int = 0
    # None means max(0.05 * K, 2)
    collapse_threshold: float | None = None
    collapse_patience: int = 5

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.model.k < 2:
            raise InvalidParameterError("k_model must be >= 2")
        if self.schedule.batch_size > self.mixture.n_samples:
            raise InvalidParameterError("batch_size exceeds the dataset size")

    @property
    def effective_collapse_threshold(self) -> float:
        if self.collapse_threshold is not None:
            return float(self.collapse_threshold)
        return max(0.05 * self.model.k, 2.0)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        return _build(cls, data or {})

    def replace(self, **changes) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **changes)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Strategy):
        return obj.value
    return obj


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise InvalidParameterError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise InvalidParameterError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    with Path(path).open() as fh:
        return RunConfig.from_dict(yaml.safe_load(fh))


def dump_config(config: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
