"""Experiment configuration: TOML file -> validated dataclasses.

Unknown keys are rejected at every level. Example::

    model = "sigma-lstm"
    seed = 7
    target = "sigma"

    [data]
    source = "simulate"

    [data.simulate]
    n = 5000

    [train]
    hidden = 8
    lr = 0.01
    epochs = 200

    [grid]
    hidden = [4, 8, 16]
"""

from __future__ import annotations

import dataclasses
import itertools
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..rvpipe import SplitSpec
from .train import TrainSettings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODELS = ("garch11", "har", "lstm", "sigma-lstm")
DEFAULT_GRID = {"hidden": [4, 8, 16], "lr": [1e-3, 3e-3], "epochs": [50, 200]}
SOURCES = ("simulate", "prices", "rv")


@dataclass
class SimulateSpec:
    omega: float = 0.05
    alpha: float = 0.10
    beta: float = 0.85
    n: int = 5000
    burn_in: int = 1000
    rv_noise: float = 0.0


@dataclass
class DataSpec:
    source: str = "simulate"
    path: str | None = None
    min_obs: int = 30
    simulate: SimulateSpec = field(default_factory=SimulateSpec)


@dataclass
class ForecastSpec:
    mode: str = "zero-noise"
    samples: int = 32


@dataclass
class ExperimentConfig:
    model: str
    seed: int
    data: DataSpec = field(default_factory=DataSpec)
    train: TrainSettings = field(default_factory=TrainSettings)
    forecast: ForecastSpec = field(default_factory=ForecastSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    scaler: str | None = None
    target: str = "rv"
    grid: dict = field(default_factory=dict)

    def scaler_mode(self) -> str:
        if self.scaler is not None:
            return self.scaler
        return "scale-only" if self.model == "sigma-lstm" else "minmax"

    def settings(self) -> TrainSettings:
        return dataclasses.replace(self.train, seed=self.seed)

    def echo(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["train"].pop("seed")
        return doc

    def validate(self) -> "ExperimentConfig":
        _check(self.model in MODELS, f"model must be one of {MODELS}, got {self.model!r}")
        _check(isinstance(self.seed, int), "seed must be an integer")
        d = self.data
        _check(d.source in SOURCES, f"data.source must be one of {SOURCES}, got {d.source!r}")
        if d.source == "simulate":
            sim = d.simulate
            _check(sim.omega > 0 and sim.alpha >= 0 and sim.beta >= 0 and sim.alpha + sim.beta < 1,
                   "data.simulate needs omega > 0, alpha, beta >= 0 and alpha + beta < 1")
            _check(sim.n >= 1 and sim.burn_in >= 0 and sim.rv_noise >= 0, "data.simulate sizes must be non-negative")
        else:
            _check(d.path is not None, f"data.path is required for source {d.source!r}")
            _check(Path(d.path).is_file(), f"data.path {d.path!r} does not exist")
        _check(d.min_obs >= 2, "data.min_obs must be >= 2")
        _check(self.target in ("rv", "sigma"), "target must be 'rv' or 'sigma'")
        _check(self.target == "rv" or d.source == "simulate", "target 'sigma' needs simulated data")
        _check(self.scaler in (None, "minmax", "scale-only"), f"unknown scaler {self.scaler!r}")
        _check(self.forecast.mode in ("zero-noise", "mc"), "forecast.mode must be 'zero-noise' or 'mc'")
        _check(self.forecast.samples >= 1, "forecast.samples must be >= 1")
        _check(self.split.n_val >= 1 and self.split.n_test >= 1, "split sizes must be >= 1")
        _validate_train(self.train)
        for k, v in self.grid.items():
            _check(k in _GRID_KEYS, f"grid key {k!r} is not a train setting")
            _check(isinstance(v, list) and len(v) > 0, f"grid.{k} must be a non-empty list")
        return self

    def grid_points(self) -> list["ExperimentConfig"]:
        """Cartesian product of the grid axes in file order (just self if no grid)."""
        if not self.grid:
            return [self]
        keys = list(self.grid)
        types = {f.name: str(f.type) for f in dataclasses.fields(TrainSettings)}
        points = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            values = {k: _coerce(v, types[k], f"grid.{k}") for k, v in zip(keys, combo)}
            train = dataclasses.replace(self.train, **values)
            _validate_train(train)
            points.append(dataclasses.replace(self, train=train, grid={}))
        return points


_GRID_KEYS = tuple(f.name for f in dataclasses.fields(TrainSettings) if f.name != "seed")


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _validate_train(t: TrainSettings) -> None:
    _check(t.hidden >= 1, "train.hidden must be >= 1")
    _check(t.lr > 0, "train.lr must be > 0")
    _check(t.epochs >= 0, "train.epochs must be >= 0")
    _check(t.window >= 2, "train.window must be >= 2")
    _check(0 <= t.warmup < t.window, "train.warmup must lie in [0, window)")
    _check(t.stride is None or 1 <= t.stride <= t.window, "train.stride must lie in [1, window]")
    _check(t.batch >= 1 and t.samples >= 1, "train.batch and train.samples must be >= 1")
    _check(t.clip > 0, "train.clip must be > 0")
    _check(t.alignment in ("predict", "filter"), "train.alignment must be 'predict' or 'filter'")
    _check(t.lr_schedule in ("constant", "cosine"), "train.lr_schedule must be 'constant' or 'cosine'")


_TYPES = {"int": int, "float": float, "str": str}


def _coerce(value, type_str: str, where: str):
    base = type_str.split("|")[0].strip()
    if base == "float" and type(value) is int:
        return float(value)
    expected = _TYPES.get(base)
    if expected is not None and type(value) is not expected:
        raise ConfigError(f"{where} must be of type {base}, got {value!r}")
    return value


def _build(cls, doc: dict, where: str, exclude: tuple = ()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be a table")
    flds = {f.name: f for f in dataclasses.fields(cls) if f.name not in exclude}
    unknown = sorted(set(doc) - set(flds))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = flds[name]
        key = f"{where}.{name}" if where else name
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, key, ("seed",) if sub is TrainSettings else ())
        elif name == "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be a table")
            kwargs[name] = dict(value)
        else:
            kwargs[name] = _coerce(value, str(f.type), key)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


_NESTED = {
    (ExperimentConfig, "data"): DataSpec,
    (ExperimentConfig, "train"): TrainSettings,
    (ExperimentConfig, "forecast"): ForecastSpec,
    (ExperimentConfig, "split"): SplitSpec,
    (DataSpec, "simulate"): SimulateSpec,
}


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if "seed" not in doc:
        raise ConfigError("seed is mandatory")
    if "model" not in doc:
        raise ConfigError("model is mandatory")
    cfg = _build(ExperimentConfig, doc, "")
    if cfg.data.path is not None and base_dir is not None and not Path(cfg.data.path).is_absolute():
        cfg.data.path = str((base_dir / cfg.data.path).resolve())
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML config; relative data paths resolve against its directory."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc, path.parent)
