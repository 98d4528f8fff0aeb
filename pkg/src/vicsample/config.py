"""Experiment configuration and its INI-style file format.

Each dataclass below maps to one ``[section]`` of the config file; every
field is addressable by name. Lists are comma-separated. Example::

    [data]
    kind = sbm
    name = sbm-2x200

    [sbm]
    nodes_per_block = 200
    p_intra = 0.2

    [sampling]
    mode = node_sampled
    node_ratio = 0.25
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .graph import AugmentationConfig, SbmConfig
from .objective import MODES, LossWeights
from .samplers import NODE_METHODS

RATIO_GRID = (0.01, 0.1, 0.25, 0.5, 0.75, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    kind: str = "sbm"          # "sbm" or "files"
    name: str = "sbm"
    edges: str = ""
    features: str = ""
    labels: str = ""


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 256
    rep_dim: int = 256
    expander_dim: int = 512
    expander_hidden: int = 0   # 0 means "same as expander_dim"


@dataclass(frozen=True)
class SamplingConfig:
    mode: str = "full"
    method: str = "uniform"
    node_ratio: float = 1.0
    dim_ratio: float = 1.0
    node_grid: tuple[float, ...] = RATIO_GRID
    dim_grid: tuple[float, ...] = RATIO_GRID
    sweep_modes: tuple[str, ...] = ("node_sampled", "dim_sampled_cov_only")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    patience: int = 50         # 0 disables early stopping
    min_delta: float = 1e-4    # relative improvement that resets patience
    precision: str = "f64"
    threads: int = 0           # 0 leaves the BLAS default alone


@dataclass(frozen=True)
class ProbeConfig:
    trials: int = 10
    l2: float = 1e-4
    l2_grid: tuple[float, ...] = ()
    train_frac: float = 0.1
    val_frac: float = 0.1
    test_frac: float = 0.8
    max_iters: int = 5000
    enabled: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    sbm: SbmConfig = field(default_factory=SbmConfig)
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    out: str = "out"

    def validate(self):
        if self.data.kind not in ("sbm", "files"):
            raise ConfigError(f"data.kind must be 'sbm' or 'files', got {self.data.kind!r}")
        try:
            if self.data.kind == "sbm":
                self.sbm.validate()
            self.augment.validate()
            self.loss.validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.data.kind == "files":
            for attr in ("edges", "features"):
                path = getattr(self.data, attr)
                if not path or not Path(path).is_file():
                    raise ConfigError(f"data.{attr} file not found: {path!r}")
            if self.data.labels and not Path(self.data.labels).is_file():
                raise ConfigError(f"data.labels file not found: {self.data.labels!r}")
        s = self.sampling
        if s.mode not in MODES:
            raise ConfigError(f"sampling.mode must be one of {MODES}")
        if s.method not in NODE_METHODS:
            raise ConfigError(f"sampling.method must be one of {NODE_METHODS}")
        for m in s.sweep_modes:
            if m not in MODES:
                raise ConfigError(f"unknown sweep mode {m!r}")
        for name, vals in (("node_ratio", [s.node_ratio]), ("dim_ratio", [s.dim_ratio]),
                           ("node_grid", s.node_grid), ("dim_grid", s.dim_grid)):
            if not vals or any(not 0.0 < v <= 1.0 for v in vals):
                raise ConfigError(f"sampling.{name} values must lie in (0, 1]")
        if self.train.optimizer not in ("adam", "sgd"):
            raise ConfigError("train.optimizer must be 'adam' or 'sgd'")
        if self.train.precision not in ("f32", "f64"):
            raise ConfigError("train.precision must be 'f32' or 'f64'")
        if self.train.epochs < 0:
            raise ConfigError("train.epochs must be nonnegative")
        if min(self.model.hidden_dim, self.model.rep_dim, self.model.expander_dim) < 1:
            raise ConfigError("model dimensions must be positive")
        return self

    def to_dict(self) -> dict:
        """Plain JSON-compatible dict (tuples become lists)."""
        return dataclasses.asdict(self, dict_factory=lambda kv: {
            k: list(v) if isinstance(v, tuple) else v for k, v in kv})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = {}
        hints = typing.get_type_hints(cls)
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            sub = hints[f.name]
            if dataclasses.is_dataclass(sub):
                kwargs[f.name] = _build(sub, d[f.name])
            else:
                kwargs[f.name] = _coerce(hints[f.name], d[f.name], f.name)
        return cls(**kwargs)

    def replace(self, **sections) -> "ExperimentConfig":
        """``cfg.replace(train={"epochs": 10}, seed=3)`` style nested update."""
        kwargs = {}
        for key, val in sections.items():
            cur = getattr(self, key)
            if dataclasses.is_dataclass(cur) and isinstance(val, dict):
                kwargs[key] = _build(type(cur), {**dataclasses.asdict(cur), **val})
            else:
                kwargs[key] = val
        return dataclasses.replace(self, **kwargs)


def _coerce(tp, raw, where):
    origin = typing.get_origin(tp)
    try:
        if origin is tuple:
            (inner, *_) = typing.get_args(tp)
            if isinstance(raw, str):
                items = [x.strip() for x in raw.split(",") if x.strip()]
            else:
                items = list(raw)
            return tuple(_coerce(inner, x, where) for x in items)
        if tp is bool:
            if isinstance(raw, str):
                low = raw.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return bool(raw)
        if tp is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if tp is float:
            return float(raw)
        return str(raw).strip() if isinstance(raw, str) else raw
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot interpret {raw!r} as {tp}") from None


def _build(cls, values: dict):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**{k: _coerce(hints[k], v, f"{cls.__name__}.{k}") for k, v in values.items()})


def load_config(path) -> ExperimentConfig:
    """Parse an INI config. Top-level keys (seed, out) go in a ``[run]`` section.

    ``;`` starts a comment anywhere on a line; ``#`` only at the start of one.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    d: dict = {}
    sections = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for sec in parser.sections():
        if sec == "run":
            d.update(dict(parser[sec]))
        elif sec in sections:
            d[sec] = dict(parser[sec])
        else:
            raise ConfigError(f"{path}: unknown section [{sec}]")
    return ExperimentConfig.from_dict(d)


def dump_config(cfg: ExperimentConfig, path):
    """Write ``cfg`` in the format :func:`load_config` reads."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {"seed": str(cfg.seed), "out": cfg.out}
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            parser[f.name] = {
                k: ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
                if isinstance(v, tuple) else (repr(v) if isinstance(v, float) else str(v))
                for k, v in dataclasses.asdict(val).items()
            }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
