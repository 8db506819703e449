"""Strict JSON experiment configs mapped onto dataclasses.

Unknown keys anywhere in a config are errors, raised before any work starts.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .compress import ObjectiveConfig, SourceConfig
from .gan import GANConfig
from .nn import OptimizerConfig
from .score import StudentTemplate


class ConfigError(ValueError):
    pass


@dataclass
class BenchmarkSpec:
    n: int = 14000
    d: int = 10
    n_classes: int = 2
    separation: float = 2.0
    seed: int = 0


@dataclass
class DataSpec:
    train: str | None = None
    test: str | None = None
    validation: str | None = None
    label: str | int = "label"
    benchmark: BenchmarkSpec | None = None
    # benchmark only: train / validation / test proportions
    fractions: list = field(default_factory=lambda: [2000 / 14000, 2000 / 14000, 10000 / 14000])
    split_seed: int = 0


@dataclass
class TeacherSpec:
    kind: str = "forest"
    n_trees: int = 500
    hidden: list = field(default_factory=lambda: [200, 200])
    activation: str = "relu"
    epochs: int = 30
    batch_size: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    early_stopping: bool = False


@dataclass
class StudentSpec:
    kind: str = "forest"
    n_trees: int = 1
    hidden: list = field(default_factory=lambda: [50, 50])
    activation: str = "relu"


@dataclass
class MungeSpec:
    p_swap: float = 0.5
    local_variance: float = 1.0
    multiplier: int = 9


@dataclass
class TrainTeacherConfig:
    data: DataSpec
    teacher: TeacherSpec = field(default_factory=TeacherSpec)
    seed: int = 0


@dataclass
class TrainGANConfig:
    data: DataSpec
    gan: GANConfig = field(default_factory=GANConfig)
    degrade_epochs: int = 0
    seed: int = 0


@dataclass
class GenerateConfig:
    gan: str
    m: int = 1000
    epoch: int | None = None
    with_classes: bool = False
    seed: int = 0


@dataclass
class MungeConfigSpec:
    data: DataSpec
    munge: MungeSpec = field(default_factory=MungeSpec)
    seed: int = 0


@dataclass
class CompressConfig:
    data: DataSpec
    teacher: str
    student: StudentSpec = field(default_factory=StudentSpec)
    source: SourceConfig = field(default_factory=SourceConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gan: str | None = None
    gan_epoch: int | None = None  # use a saved generator checkpoint instead of the final one
    munge: MungeSpec | None = None
    epochs: int = 100
    batch_size: int = 64
    # a list turns the run into a sweep over stream p_fake values
    p_fake: float | list | None = None
    seed: int = 0


@dataclass
class SweepConfig:
    data: DataSpec
    teacher: str
    student: StudentSpec = field(default_factory=StudentSpec)
    source: SourceConfig = field(default_factory=lambda: SourceConfig("stream"))
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gan: str | None = None
    gan_epoch: int | None = None  # use a saved generator checkpoint instead of the final one
    munge: MungeSpec | None = None
    epochs: int = 100
    batch_size: int = 64
    p_fake: list = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    seeds: list = field(default_factory=lambda: [0])
    seed: int = 0


@dataclass
class ScoreDataset:
    kind: str = "real"       # real | csv | gan
    path: str | None = None
    m: int | None = None     # gan: rows to draw (default: size of the reference set)


@dataclass
class ScoreConfig:
    data: DataSpec
    teacher: str
    datasets: dict = field(default_factory=dict)  # name -> ScoreDataset
    student: StudentTemplate = field(default_factory=StudentTemplate)
    replicates: int = 3
    classifier: str | None = None
    seed: int = 0


@dataclass
class BenchmarkConfig:
    teacher: str
    student: str
    data: DataSpec
    n_queries: int = 30000
    repeats: int = 5
    seed: int = 0


def _hint_dataclass(hint):
    """Return the dataclass inside ``hint`` (including ``X | None``), if any."""
    if dataclasses.is_dataclass(hint):
        return hint
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        for arg in typing.get_args(hint):
            if dataclasses.is_dataclass(arg):
                return arg
    return None


def from_dict(cls, raw, where: str = "config"):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in raw.items():
        sub = _hint_dataclass(hints[name])
        if sub is not None and value is not None:
            value = from_dict(sub, value, f"{where}.{name}")
        elif cls is ScoreConfig and name == "datasets":
            value = {k: from_dict(ScoreDataset, v, f"{where}.datasets.{k}") for k, v in value.items()}
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(cls, path):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(cls, raw)
