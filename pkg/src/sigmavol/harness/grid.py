"""Hyperparameter grid search scored by validation RMSE."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from ..errors import NumericalError
from .backtest import rolling_forecast
from .models import fit_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridEntry:
    index: int
    rmse: float
    config: object
    error: str | None = None


@dataclass(frozen=True)
class GridResult:
    best_index: int
    best: object
    leaderboard: list[GridEntry]


def validation_scorer(data, fit_end: int, val_end: int, target: str = "rv") -> Callable:
    """Scorer that fits a grid point on ``[0, fit_end)`` and returns its RMSE on ``[fit_end, val_end)``."""

    def score(cfg, index: int) -> float:
        s = cfg.settings()
        model = fit_model(cfg.model, data, fit_end, s, cfg.scaler_mode(), cfg.forecast.mode, cfg.forecast.samples)
        return rolling_forecast(model, data, start=fit_end, stop=val_end, target=target).rmse

    return score


def grid_search(points: list, score: Callable, workers: int = 1) -> GridResult:
    """Evaluate every point; lowest RMSE wins with ties going to the lowest index.

    Point ``i`` is scored with seed ``base seed + i`` when it carries a
    ``seed`` field. A point whose training fails numerically is recorded with
    infinite RMSE; if all fail, NumericalError is raised.
    """
    if not points:
        raise ValueError("grid is empty")

    def seeded(i, cfg):
        if dataclasses.is_dataclass(cfg) and hasattr(cfg, "seed"):
            return dataclasses.replace(cfg, seed=cfg.seed + i)
        return cfg

    def run(i):
        cfg = seeded(i, points[i])
        try:
            rmse = float(score(cfg, i))
            if not math.isfinite(rmse):
                raise NumericalError("non-finite validation RMSE")
            return GridEntry(i, rmse, cfg)
        except NumericalError as exc:
            logger.warning("grid point %d failed: %s", i, exc)
            return GridEntry(i, math.inf, cfg, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run, range(len(points))))
    else:
        entries = [run(i) for i in range(len(points))]

    board = sorted(entries, key=lambda e: (e.rmse, e.index))
    if math.isinf(board[0].rmse):
        raise NumericalError("every grid point diverged: " + "; ".join(f"{e.index}: {e.error}" for e in entries))
    return GridResult(board[0].index, board[0].config, board)
