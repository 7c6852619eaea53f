"""Fitted forecasters sharing one interface.

``predict(data, start, stop)`` returns one-step-ahead volatility forecasts
for indices ``start..stop-1``; the forecast for index t reads only
observations before t. ``fit_end`` is the number of leading observations the
model was fitted on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import econo
from ..cells import LstmParams, SigmaLstmParams, lstm_predictions, sigma_lstm_filter
from ..errors import DataError
from ..rvpipe import RvSeries, Scaler, fit_scaler
from ..simgen import SplitMix64, derive_seed
from .train import TrainSettings, train_lstm, train_sigma_lstm

MC_STREAM = 1_000_003


@dataclass(frozen=True)
class Dataset:
    """Aligned daily observations. ``sigma`` holds the true volatility for simulated data."""

    index: np.ndarray
    ret: np.ndarray
    rv: np.ndarray
    sigma: np.ndarray | None = None

    def __len__(self) -> int:
        return self.rv.size

    @classmethod
    def from_rv_series(cls, s: RvSeries) -> "Dataset":
        ret = s.ret
        if ret.size > 1 and np.isnan(ret[0]) and not np.isnan(ret[1:]).any():
            s = s[1:]
        return cls(s.dates, s.ret.copy(), s.rv.copy())

    def target(self, kind: str) -> np.ndarray:
        if kind == "rv":
            return self.rv
        if kind == "sigma":
            if self.sigma is None:
                raise DataError("true sigma is only available for simulated data")
            return self.sigma
        raise ValueError(f"unknown target {kind!r}")

    def returns(self, stop: int) -> np.ndarray:
        r = self.ret[:stop]
        if np.isnan(r).any():
            raise DataError("daily returns are missing; this model needs a return series")
        return r


def _scaler_doc(s: Scaler) -> dict:
    return {"mode": s.mode, "lo": s.lo, "hi": s.hi}


@dataclass
class GarchForecaster:
    fit: econo.GarchFit
    fit_end: int
    name: str = "garch11"
    history: list = field(default_factory=list)

    def predict(self, data: Dataset, start: int, stop: int) -> np.ndarray:
        x = data.returns(stop) - self.fit.mean
        s2 = econo.garch11_filter(self.fit.params, x, self.fit.sigma2_0)
        return np.sqrt(s2[start:stop])

    def export(self) -> str:
        f = self.fit
        return econo.format_params(f.params, "garch11", f.loglik, mean=f.mean, sigma2_0=f.sigma2_0, fit_end=self.fit_end)


@dataclass
class HarForecaster:
    params: econo.HarParams
    fit_end: int
    name: str = "har"
    history: list = field(default_factory=list)

    def predict(self, data: Dataset, start: int, stop: int) -> np.ndarray:
        if start < econo.HAR_LAG:
            raise DataError(f"HAR forecasts need {econo.HAR_LAG} prior observations")
        feats = np.array([econo.har_feature_row(data.rv[:t], t) for t in range(start, stop)])
        return np.asarray(econo.har_forecast(self.params, feats), dtype=np.float64)

    def export(self) -> str:
        return econo.format_params(self.params, "har", fit_end=self.fit_end)


@dataclass
class SigmaLstmForecaster:
    params: SigmaLstmParams
    scaler: Scaler
    fit_end: int
    mode: str = "zero-noise"
    samples: int = 32
    seed: int = 0
    name: str = "sigma-lstm"
    history: list = field(default_factory=list)

    def predict(self, data: Dataset, start: int, stop: int) -> np.ndarray:
        # input at step t is r_{t-1}; the variance emitted there is the forecast for t
        x = np.r_[0.0, self.scaler.apply(data.returns(stop - 1))]
        eps = None
        if self.mode == "mc":
            rng = SplitMix64(derive_seed(self.seed, MC_STREAM))
            eps = rng.normal((x.size, self.params.H, self.samples))
        sigma2 = sigma_lstm_filter(self.params, x, eps).mean(axis=1)
        return np.sqrt(sigma2[start:stop]) * self.scaler.factor

    def export(self) -> str:
        doc = {"model": self.name, "scaler": _scaler_doc(self.scaler), "fit_end": self.fit_end,
               "forecast": {"mode": self.mode, "samples": self.samples, "seed": self.seed},
               "params": json.loads(self.params.to_json())}
        return json.dumps(doc, indent=1)


@dataclass
class LstmForecaster:
    params: LstmParams
    scaler: Scaler
    fit_end: int
    name: str = "lstm"
    history: list = field(default_factory=list)

    def predict(self, data: Dataset, start: int, stop: int) -> np.ndarray:
        # output after consuming rv_{t-1} is the forecast for t
        pred = lstm_predictions(self.params, self.scaler.apply(data.rv[:stop - 1]))
        return self.scaler.invert(pred[start - 1:stop - 1])

    def export(self) -> str:
        doc = {"model": self.name, "scaler": _scaler_doc(self.scaler), "fit_end": self.fit_end,
               "params": json.loads(self.params.to_json())}
        return json.dumps(doc, indent=1)


def fit_model(model: str, data: Dataset, fit_end: int, settings: TrainSettings | None = None,
              scaler_mode: str | None = None, forecast_mode: str = "zero-noise", samples: int = 32):
    """Fit ``model`` on the first ``fit_end`` observations of ``data``."""
    if not 0 < fit_end <= len(data):
        raise DataError(f"fit span {fit_end} outside the series (length {len(data)})")
    settings = settings or TrainSettings()
    if model == "garch11":
        return GarchForecaster(econo.garch11_fit(data.returns(fit_end)), fit_end)
    if model == "har":
        return HarForecaster(econo.har_fit(data.rv[:fit_end]), fit_end)
    if model == "sigma-lstm":
        r = data.returns(fit_end)
        scaler = fit_scaler(r, scaler_mode or "scale-only")
        res = train_sigma_lstm(settings, scaler.apply(r))
        return SigmaLstmForecaster(res.params, scaler, fit_end, forecast_mode, samples, settings.seed,
                                   history=res.history)
    if model == "lstm":
        rv = data.rv[:fit_end]
        scaler = fit_scaler(rv, scaler_mode or "minmax")
        z = scaler.apply(rv)
        res = train_lstm(settings, z[:-1], z[1:])
        return LstmForecaster(res.params, scaler, fit_end, history=res.history)
    raise ValueError(f"unknown model {model!r}")


def load_model(path):
    """Read a forecaster written by ``export()``."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        sc = Scaler(**doc["scaler"])
        if doc["model"] == "sigma-lstm":
            p = SigmaLstmParams.from_json(json.dumps(doc["params"]))
            fc = doc["forecast"]
            return SigmaLstmForecaster(p, sc, doc["fit_end"], fc["mode"], fc["samples"], fc["seed"])
        return LstmForecaster(LstmParams.from_json(json.dumps(doc["params"])), sc, doc["fit_end"])
    variant, params, extra = econo.parse_params(text)
    fit_end = int(extra["fit_end"])
    if variant == "har":
        return HarForecaster(params, fit_end)
    fit = econo.GarchFit(params, extra["loglik"], extra["mean"], extra["sigma2_0"], fit_end)
    return GarchForecaster(fit, fit_end)
