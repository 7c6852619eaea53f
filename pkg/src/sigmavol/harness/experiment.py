"""End-to-end experiment: ingest -> split -> fit -> rolling test forecast -> files."""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..econo import GarchParams
from ..errors import ConfigError, DataError, NumericalError, SigmaVolError
from ..rvpipe import daily_realized_vol, load_prices, read_rv_csv
from ..simgen import simulate_garch11, simulate_rv_from_path
from .backtest import ForecastReport, rolling_forecast
from .config import ExperimentConfig, load_config
from .grid import GridResult, grid_search, validation_scorer
from .models import Dataset, fit_model

logger = logging.getLogger(__name__)

SIM_EPOCH = np.datetime64("2000-01-01", "D")


@contextmanager
def stage(name: str):
    """Prefix errors raised inside the block with the stage name."""
    try:
        yield
    except SigmaVolError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc
    except (ArithmeticError, FloatingPointError) as exc:
        raise NumericalError(f"[{name}] {exc}") from exc
    except (ValueError, OSError) as exc:
        raise DataError(f"[{name}] {exc}") from exc


def simulated_dataset(cfg: ExperimentConfig) -> Dataset:
    sim = cfg.data.simulate
    path = simulate_garch11(GarchParams(sim.omega, sim.alpha, sim.beta), sim.n, cfg.seed, sim.burn_in)
    rv = simulate_rv_from_path(path, sim.rv_noise)
    index = SIM_EPOCH + np.arange(sim.n)
    return Dataset(index, path.returns, rv, np.sqrt(path.true_sigma2))


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    src = cfg.data.source
    if src == "simulate":
        return simulated_dataset(cfg)
    if src == "prices":
        with stage("rv"):
            series = daily_realized_vol(load_prices(cfg.data.path), cfg.data.min_obs)
        return Dataset.from_rv_series(series)
    return Dataset.from_rv_series(read_rv_csv(cfg.data.path))


def split_points(cfg: ExperimentConfig, n: int) -> tuple[int, int]:
    sp = cfg.split
    train_end = n - sp.n_val - sp.n_test
    if train_end < sp.min_train:
        raise DataError(f"series of length {n} leaves {train_end} training points; need {sp.min_train}")
    return train_end, n - sp.n_test


def fit_for(cfg: ExperimentConfig, data: Dataset, fit_end: int):
    return fit_model(cfg.model, data, fit_end, cfg.settings(), cfg.scaler_mode(),
                     cfg.forecast.mode, cfg.forecast.samples)


def run_grid(cfg: ExperimentConfig, data: Dataset, train_end: int, val_end: int) -> GridResult:
    score = validation_scorer(data, train_end, val_end, cfg.target)
    return grid_search(cfg.grid_points(), score)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_outputs(out_dir, report: ForecastReport, history, grid: GridResult | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "model": report.model,
        "metrics": {"mse": report.mse, "rmse": report.rmse},
        "n_test": int(report.prediction.size),
        "test_span": [str(report.index[0]), str(report.index[-1])],
        "config": report.config,
    }
    if grid is not None:
        doc["grid"] = leaderboard_rows(grid)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with open(out / "forecasts.csv", "w", newline="") as fh:
        fh.write("date,prediction,target\n")
        for d, p, t in zip(report.index, report.prediction, report.target):
            fh.write(f"{d},{_fmt(p)},{_fmt(t)}\n")
    with open(out / "loss_history.csv", "w", newline="") as fh:
        fh.write("epoch,objective\n")
        for i, v in enumerate(history, 1):
            fh.write(f"{i},{_fmt(v)}\n")


def leaderboard_rows(grid: GridResult) -> list[dict]:
    return [{"index": e.index, "rmse": e.rmse if np.isfinite(e.rmse) else None,
             "train": {k: v for k, v in asdict(e.config.train).items() if k != "seed"},
             "seed": e.config.seed, "error": e.error} for e in grid.leaderboard]


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ForecastReport:
    """Run the configured pipeline and (optionally) write report files to ``out_dir``."""
    with stage("ingest"):
        data = load_dataset(cfg)
    with stage("split"):
        train_end, val_end = split_points(cfg, len(data))
    grid = None
    if cfg.grid:
        with stage("grid"):
            grid = run_grid(cfg, data, train_end, val_end)
            logger.info("grid winner: point %d (val rmse %.6g)", grid.best_index, grid.leaderboard[0].rmse)
            cfg = grid.best
    with stage("fit"):
        model = fit_for(cfg, data, train_end)
    with stage("forecast"):
        report = rolling_forecast(model, data, cfg.split.n_test, target=cfg.target, config=cfg.echo())
    logger.info("%s test rmse %.6g (%d points, %.2fs)", report.model, report.rmse, report.prediction.size,
                report.wall_time)
    if out_dir is not None:
        with stage("write"):
            write_outputs(out_dir, report, model.history, grid)
    return report


def run_experiment_file(path, out_dir=None, seed: int | None = None) -> ForecastReport:
    with stage("config"):
        cfg = load_config(path)
        if seed is not None:
            cfg.seed = int(seed)
    return run_experiment(cfg, out_dir)


__all__ = ["run_experiment", "run_experiment_file", "load_dataset", "split_points", "stage",
           "write_outputs", "ConfigError"]
