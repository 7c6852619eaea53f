"""Rolling one-step-ahead evaluation and metrics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, NonFiniteError


class LookaheadError(ConfigError):
    """The evaluation span overlaps the data a model was fitted on."""


def evaluate(pred, target) -> dict[str, float]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise DataError(f"length mismatch: predictions {pred.shape}, targets {target.shape}")
    if pred.size == 0:
        raise DataError("cannot evaluate an empty span")
    mse = float(np.mean((pred - target) ** 2))
    return {"mse": mse, "rmse": math.sqrt(mse)}


@dataclass
class ForecastReport:
    model: str
    index: np.ndarray
    prediction: np.ndarray
    target: np.ndarray
    mse: float
    rmse: float
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0


def rolling_forecast(model, data, n_test: int = 200, *, start: int | None = None, stop: int | None = None,
                     target: str = "rv", config: dict | None = None) -> ForecastReport:
    """Score one-step-ahead forecasts over ``[start, stop)`` (default: the last ``n_test`` points)."""
    t0 = time.perf_counter()
    n = len(data)
    stop = n if stop is None else stop
    start = n - n_test if start is None else start
    if not 0 < start < stop <= n:
        raise DataError(f"invalid evaluation span [{start}, {stop}) for a series of length {n}")
    if start < model.fit_end:
        raise LookaheadError(f"evaluation starts at {start} but the model was fitted on the first {model.fit_end} points")
    pred = model.predict(data, start, stop)
    if not np.all(np.isfinite(pred)):
        raise NonFiniteError(f"{model.name} produced non-finite forecasts")
    tgt = data.target(target)[start:stop]
    m = evaluate(pred, tgt)
    return ForecastReport(model.name, data.index[start:stop], pred, tgt.copy(), m["mse"], m["rmse"],
                          config or {}, time.perf_counter() - t0)
