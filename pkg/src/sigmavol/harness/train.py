"""Window-batched BPTT training for the sigma-LSTM and the vanilla LSTM."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..cells import (
    LstmParams,
    SigmaLstmParams,
    build_lstm_graph,
    build_sigma_lstm_graph,
    init_lstm_params,
    init_params,
)
from ..diffcore import backward, forward
from ..errors import DataError, NonFiniteError, NumericalError
from ..simgen import SplitMix64, derive_seed

logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    hidden: int = 8
    lr: float = 3e-3
    epochs: int = 200
    window: int = 22
    batch: int = 32
    samples: int = 1
    warmup: int = 0
    stride: int | None = None
    lr_schedule: str = "constant"
    clip: float = 5.0
    alignment: str = "predict"
    seed: int = 0


@dataclass
class TrainResult:
    params: object
    history: list[float] = field(default_factory=list)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place descent step on ``params`` along ``grads``."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def make_windows(series: np.ndarray, window: int, stride: int | None = None) -> np.ndarray:
    """Windows of ``window`` points every ``stride`` points (default: no overlap).

    The last window ends at the last observation; leftovers at the start are dropped.
    """
    series = np.asarray(series, dtype=np.float64)
    stride = window if stride is None else stride
    if not 1 <= stride <= window:
        raise ValueError(f"stride must lie in [1, {window}], got {stride}")
    if series.size < window:
        raise DataError(f"series of length {series.size} is shorter than window {window}")
    k = (series.size - window) // stride + 1
    ends = series.size - stride * np.arange(k)[::-1]
    return np.stack([series[e - window:e] for e in ends])


def _permutation(rng: SplitMix64, n: int) -> np.ndarray:
    return np.argsort(rng.uniform(n), kind="stable")


def _lr_at(lr: float, schedule: str, epoch: int, epochs: int) -> float:
    if schedule == "constant":
        return lr
    if schedule == "cosine":
        return lr * 0.5 * (1.0 + np.cos(np.pi * (epoch - 1) / epochs))
    raise ValueError(f"unknown learning-rate schedule {schedule!r}")


def _run_epochs(params, tape, out, batches, s: TrainSettings, maximize, label):
    arrays = params.arrays()
    opt = Adam(s.lr)
    history = []
    for epoch in range(1, s.epochs + 1):
        opt.lr = _lr_at(s.lr, s.lr_schedule, epoch, s.epochs)
        total, count = 0.0, 0
        for bind, size in batches(epoch):
            try:
                vals = forward(tape, {**arrays, **bind})
            except NonFiniteError as exc:
                raise NumericalError(f"{label} training diverged at epoch {epoch}: {exc}") from None
            obj = float(vals[out])
            grads = backward(tape, out)
            if maximize:
                for g in grads.values():
                    np.negative(g, out=g)
            clip_global_norm(grads, s.clip)
            opt.step(arrays, grads)
            for k, a in arrays.items():
                if not np.all(np.isfinite(a)):
                    raise NumericalError(f"{label} training diverged at epoch {epoch}: parameter {k}")
            total += obj * size
            count += size
        history.append(total / count)
        logger.debug("%s epoch %d objective %.6f", label, epoch, history[-1])
    return history


def sigma_lstm_pairs(returns: np.ndarray, alignment: str) -> tuple[np.ndarray, np.ndarray]:
    """(inputs, targets) for training.

    ``predict``: the step-t input is r_{t-1} (0 before the first return), so
    the emitted variance is scored against a return it has not seen.
    ``filter``: the step-t input is r_t itself.
    """
    r = np.asarray(returns, dtype=np.float64)
    if alignment == "predict":
        return np.r_[0.0, r[:-1]], r
    if alignment == "filter":
        return r, r
    raise ValueError(f"unknown alignment {alignment!r}")


def train_sigma_lstm(s: TrainSettings, returns, init: SigmaLstmParams | None = None) -> TrainResult:
    """Maximize the mean Gaussian objective by Adam over shuffled windows.

    ``returns`` should already be scaled. Every window starts from a zero
    state; each epoch draws fresh noise from a seed derived from ``s.seed``.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.size < s.window:
        raise DataError(f"need at least {s.window} training returns, got {r.size}")
    params = init_params(s.hidden, s.seed) if init is None else init.copy()
    if s.epochs == 0:
        return TrainResult(params, [])

    x, y = sigma_lstm_pairs(r, s.alignment)
    xw = make_windows(x, s.window, s.stride)
    yw = make_windows(y, s.window, s.stride)
    H, T, S = s.hidden, s.window, s.samples
    tape, out, _ = build_sigma_lstm_graph(H, T, batched=True, warmup=s.warmup)

    def batches(epoch):
        rng = SplitMix64(derive_seed(s.seed, epoch))
        order = _permutation(rng, xw.shape[0])
        for a in range(0, order.size, s.batch):
            idx = np.repeat(order[a:a + s.batch], S)
            B = idx.size
            eps = rng.normal((T, H, B))
            bind = {"h0": np.zeros((H, B)), "C0": np.zeros((H, B))}
            for t in range(T):
                bind[f"x{t}"] = xw[idx, t][None, :]
                bind[f"r2_{t}"] = yw[idx, t] ** 2
                bind[f"eps{t}"] = eps[t]
            yield bind, B

    history = _run_epochs(params, tape, out, batches, s, True, "sigma-LSTM")
    return TrainResult(params, history)


def train_lstm(s: TrainSettings, x, y, init: LstmParams | None = None) -> TrainResult:
    """Minimize mean squared error of the vanilla LSTM over shuffled windows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DataError("inputs and targets differ in length")
    if x.size < s.window:
        raise DataError(f"need at least {s.window} training points, got {x.size}")
    params = init_lstm_params(s.hidden, s.seed) if init is None else init.copy()
    if s.epochs == 0:
        return TrainResult(params, [])
    xw = make_windows(x, s.window, s.stride)
    yw = make_windows(y, s.window, s.stride)
    H, T = s.hidden, s.window
    tape, out = build_lstm_graph(H, T, batched=True)

    def batches(epoch):
        rng = SplitMix64(derive_seed(s.seed, epoch))
        order = _permutation(rng, xw.shape[0])
        for a in range(0, order.size, s.batch):
            idx = order[a:a + s.batch]
            B = idx.size
            bind = {"h0": np.zeros((H, B)), "C0": np.zeros((H, B))}
            for t in range(T):
                bind[f"x{t}"] = xw[idx, t][None, :]
                bind[f"y{t}"] = yw[idx, t][None, :]
            yield bind, B

    history = _run_epochs(params, tape, out, batches, s, False, "LSTM")
    return TrainResult(params, history)
