"""Training, rolling evaluation, grid search and experiment orchestration."""

from .backtest import ForecastReport, LookaheadError, evaluate, rolling_forecast
from .config import ExperimentConfig, load_config
from .grid import GridResult, grid_search
from .models import Dataset, fit_model
from .train import TrainSettings, train_lstm, train_sigma_lstm

__all__ = [
    "Dataset", "ExperimentConfig", "ForecastReport", "GridResult", "LookaheadError", "TrainSettings",
    "evaluate", "fit_model", "grid_search", "load_config", "rolling_forecast", "train_lstm",
    "train_sigma_lstm",
]
