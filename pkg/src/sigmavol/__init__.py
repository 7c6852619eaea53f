"""Volatility forecasting with a stochastic-output-gate LSTM cell.

Modules: ``diffcore`` (reverse-mode autodiff), ``cells`` (sigma-LSTM and
LSTM), ``econo`` (GARCH family and HAR-RV), ``rvpipe`` (realized volatility
data), ``simgen`` (seeded synthetic paths) and ``harness`` (training,
rolling forecasts, grid search, experiments).
"""

__version__ = "0.1.0"
