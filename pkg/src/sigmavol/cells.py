"""sigma-LSTM cell, its Gaussian likelihood objective, and a vanilla LSTM.

The sigma-LSTM replaces the LSTM output gate by a zero-mean Gaussian sample
whose variance is a positive linear map of the squared cell state::

    z   = [h_{t-1}, x_t]
    f   = sigmoid(W_f z + b_f)      i = sigmoid(W_i z + b_i)
    C~  = tanh(W_C z + b_C)         C = f * C_{t-1} + i * C~
    v   = softplus(W_o_raw) @ C**2 + eps_v
    o   = sqrt(v) * eps             h = o * tanh(C)
    r^  = W_h . h                   sigma2 = max(mean(C)**2, eps_v)

Each cell comes in two forms: a direct numpy step used for filtering and
forecasting, and a tape builder used for training. Both accept vectors
``(H,)`` or column batches ``(H, B)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .diffcore import Tape
from .errors import DataError, NonFiniteError
from .simgen import SplitMix64

EPS_V = 1e-8


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _inv_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


class _ParamSet:
    """Shared plumbing: array views, copies and JSON round-trip."""

    seed: int

    @classmethod
    def array_names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "seed"]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.array_names()}

    @classmethod
    def from_arrays(cls, arrays, seed: int = 0):
        return cls(**{k: np.array(arrays[k], dtype=np.float64) for k in cls.array_names()}, seed=seed)

    def copy(self):
        return self.from_arrays({k: v.copy() for k, v in self.arrays().items()}, self.seed)

    @property
    def H(self) -> int:
        return self.W_f.shape[0]

    def to_json(self) -> str:
        doc = {
            "type": type(self).__name__,
            "seed": self.seed,
            "arrays": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.arrays().items()},
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str):
        doc = json.loads(text)
        if doc.get("type") != cls.__name__:
            raise DataError(f"expected {cls.__name__} parameters, found {doc.get('type')!r}")
        arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["arrays"].items()}
        return cls.from_arrays(arrays, int(doc["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


@dataclass
class SigmaLstmParams(_ParamSet):
    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    W_o_raw: np.ndarray
    W_h: np.ndarray
    seed: int = 0

    @property
    def variance_map(self) -> np.ndarray:
        return _softplus(self.W_o_raw)


@dataclass
class SigmaLstmState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, H: int, batch: int | None = None) -> "SigmaLstmState":
        shape = (H,) if batch is None else (H, batch)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class StepOutput:
    r_hat: float | np.ndarray
    sigma2: float | np.ndarray
    o: np.ndarray
    state_next: SigmaLstmState


@dataclass(frozen=True)
class NoiseSequence:
    seed: int
    eps: np.ndarray

    @classmethod
    def draw(cls, m: int, H: int, seed: int) -> "NoiseSequence":
        return cls(seed, SplitMix64(seed).normal((m, H)))

    @classmethod
    def zeros(cls, m: int, H: int) -> "NoiseSequence":
        return cls(0, np.zeros((m, H)))


def init_params(H: int, seed: int) -> SigmaLstmParams:
    """Uniform(-1/sqrt(H+1), 1/sqrt(H+1)) gates, forget bias 1, softplus(W_o_raw) = 0.1/H."""
    if H < 1:
        raise ValueError(f"hidden width must be >= 1, got {H}")
    rng = SplitMix64(seed)
    s = 1.0 / np.sqrt(H + 1)

    def gate():
        return (2.0 * rng.uniform((H, H + 1)) - 1.0) * s

    W_f, W_i, W_C = gate(), gate(), gate()
    W_h = (2.0 * rng.uniform(H) - 1.0) * s
    return SigmaLstmParams(
        W_f=W_f, W_i=W_i, W_C=W_C,
        b_f=np.ones(H), b_i=np.zeros(H), b_C=np.zeros(H),
        W_o_raw=np.full((H, H), _inv_softplus(0.1 / H)),
        W_h=W_h, seed=seed,
    )


def _sigma_step(p: SigmaLstmParams, h, C, x, eps):
    """One step on vectors or column batches; returns (r_hat, sigma2, o, h, C)."""
    xr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.concatenate([h, xr[None, :] if h.ndim == 2 else xr], axis=0)
    bias = (lambda b: b[:, None]) if h.ndim == 2 else (lambda b: b)
    f = _sigmoid(p.W_f @ z + bias(p.b_f))
    i = _sigmoid(p.W_i @ z + bias(p.b_i))
    cand = np.tanh(p.W_C @ z + bias(p.b_C))
    C = f * C + i * cand
    v = p.variance_map @ (C * C) + EPS_V
    o = np.sqrt(v) * eps
    h = o * np.tanh(C)
    r_hat = p.W_h @ h
    sigma2 = np.maximum(C.mean(axis=0) ** 2, EPS_V)
    return r_hat, sigma2, o, h, C


def sigma_lstm_step(p: SigmaLstmParams, s: SigmaLstmState, x: float, eps_t) -> StepOutput:
    eps_t = np.asarray(eps_t, dtype=np.float64)
    if not (np.isfinite(x) and np.all(np.isfinite(eps_t)) and np.all(np.isfinite(s.h)) and np.all(np.isfinite(s.C))):
        raise NonFiniteError("sigma_lstm_step received non-finite input")
    r_hat, sigma2, o, h, C = _sigma_step(p, s.h, s.C, x, eps_t)
    return StepOutput(float(r_hat), float(sigma2), o, SigmaLstmState(h, C))


def likelihood_terms(r, sigma2) -> np.ndarray:
    """Per-step Gaussian log-likelihood kernel ``-ln s - r^2 / s`` (to be maximized)."""
    r = np.asarray(r, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    return -np.log(sigma2) - r * r / sigma2


def sigma_lstm_forward(p: SigmaLstmParams, r, noise: NoiseSequence, inputs=None):
    """Run the cell from a zero state and score it against ``r``.

    The step-t input defaults to ``r_t`` itself (filtering alignment). Pass
    ``inputs`` (same length) to feed something else, e.g. lagged returns.
    Returns ``(sigma2, r_hat, loss)`` where ``loss`` is the summed objective.
    """
    r = np.asarray(r, dtype=np.float64)
    m = r.size
    if m == 0:
        raise DataError("need at least one return")
    x = r if inputs is None else np.asarray(inputs, dtype=np.float64)
    if x.shape != r.shape or noise.eps.shape != (m, p.H):
        raise DataError(f"length mismatch: returns {r.shape}, inputs {x.shape}, noise {noise.eps.shape}")
    state = SigmaLstmState.zeros(p.H)
    sigma2 = np.empty(m)
    r_hat = np.empty(m)
    for t in range(m):
        out = sigma_lstm_step(p, state, x[t], noise.eps[t])
        sigma2[t], r_hat[t], state = out.sigma2, out.r_hat, out.state_next
    return sigma2, r_hat, float(likelihood_terms(r, sigma2).sum())


def sigma_lstm_filter(p: SigmaLstmParams, x, eps=None) -> np.ndarray:
    """sigma2 emitted after consuming each input, for S parallel noise paths.

    ``eps`` has shape (m, H, S); ``None`` means the deterministic zero-noise
    pass. Returns an (m, S) array (S = 1 for zero noise).
    """
    x = np.asarray(x, dtype=np.float64)
    S = 1 if eps is None else eps.shape[2]
    h = np.zeros((p.H, S))
    C = np.zeros((p.H, S))
    out = np.empty((x.size, S))
    zero = np.zeros((p.H, S))
    for t in range(x.size):
        e = zero if eps is None else eps[t]
        _, out[t], _, h, C = _sigma_step(p, h, C, np.full(S, x[t]), e)
    return out


def build_sigma_lstm_graph(H: int, T: int, batched: bool = True, warmup: int = 0):
    """Unrolled T-step graph whose output is the mean objective per scored step.

    Leaves: parameter arrays (trainable); initial state ``h0``/``C0``; and per
    step the input ``x{t}`` ((1, B) or (1,)), squared target ``r2_{t}`` ((B,)
    or ()) and noise ``eps{t}`` ((H, B) or (H,)). Steps before ``warmup``
    advance the state but are not scored. Returns (tape, output, sigma2 nodes).
    """
    if not 0 <= warmup < T:
        raise ValueError("need 0 <= warmup < T")
    tape = Tape()
    P = {k: tape.leaf(k) for k in SigmaLstmParams.array_names()}
    h = tape.leaf("h0", trainable=False)
    C = tape.leaf("C0", trainable=False)
    vmap = tape.softplus(P["W_o_raw"])
    total = None
    sig_nodes = []
    for t in range(T):
        x = tape.leaf(f"x{t}", trainable=False)
        r2 = tape.leaf(f"r2_{t}", trainable=False)
        eps = tape.leaf(f"eps{t}", trainable=False)
        h, C, s2 = _graph_step(tape, P, vmap, h, C, x, eps)
        sig_nodes.append(s2)
        if t < warmup:
            continue
        term = _graph_term(tape, r2, s2)
        if batched:
            term = tape.mean(term)
        total = term if total is None else tape.add(total, term)
    out = tape.mark_output(tape.scale(total, 1.0 / (T - warmup)))
    return tape, out, sig_nodes


def _graph_step(tape: Tape, P: dict, vmap: int, h: int, C: int, x: int, eps: int):
    z = tape.concat(h, x)
    f = tape.sigmoid(tape.bias_add(tape.matmul(P["W_f"], z), P["b_f"]))
    i = tape.sigmoid(tape.bias_add(tape.matmul(P["W_i"], z), P["b_i"]))
    cand = tape.tanh(tape.bias_add(tape.matmul(P["W_C"], z), P["b_C"]))
    C = tape.add(tape.mul(f, C), tape.mul(i, cand))
    v = tape.shift(tape.matmul(vmap, tape.square(C)), EPS_V)
    h = tape.mul(tape.mul(tape.sqrt(v), eps), tape.tanh(C))
    s2 = tape.floor(tape.square(tape.mean(C)), EPS_V)
    return h, C, s2


def _graph_term(tape: Tape, r2: int, s2: int) -> int:
    return tape.sub(tape.scale(tape.log(s2), -1.0), tape.div(r2, s2))


def objective_builder(r, eps, inputs=None):
    """Graph builder for :func:`~sigmavol.diffcore.check_gradients`.

    Data and noise are baked in as constants; the builder takes a mapping of
    parameter name -> leaf and returns the mean objective of a zero-state run.
    """
    r = np.asarray(r, dtype=np.float64)
    x = r if inputs is None else np.asarray(inputs, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)

    def build(tape: Tape, P: dict) -> int:
        H = eps.shape[1]
        vmap = tape.softplus(P["W_o_raw"])
        h = C = tape.constant(np.zeros(H))
        total = None
        for t in range(r.size):
            h, C, s2 = _graph_step(tape, P, vmap, h, C, tape.constant([x[t]]), tape.constant(eps[t]))
            term = _graph_term(tape, tape.constant(r[t] * r[t]), s2)
            total = term if total is None else tape.add(total, term)
        return tape.scale(total, 1.0 / r.size)

    return build


# ------------------------------------------------------------ vanilla LSTM

@dataclass
class LstmParams(_ParamSet):
    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray
    W_head: np.ndarray
    b_head: np.ndarray
    seed: int = 0


def init_lstm_params(H: int, seed: int) -> LstmParams:
    if H < 1:
        raise ValueError(f"hidden width must be >= 1, got {H}")
    rng = SplitMix64(seed)
    s = 1.0 / np.sqrt(H + 1)

    def u(shape):
        return (2.0 * rng.uniform(shape) - 1.0) * s

    return LstmParams(
        W_f=u((H, H + 1)), W_i=u((H, H + 1)), W_C=u((H, H + 1)), W_o=u((H, H + 1)),
        b_f=np.ones(H), b_i=np.zeros(H), b_C=np.zeros(H), b_o=np.zeros(H),
        W_head=u((1, H)), b_head=np.zeros(1), seed=seed,
    )


def _lstm_step(p: LstmParams, h, C, x):
    xr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.concatenate([h, xr[None, :] if h.ndim == 2 else xr], axis=0)
    bias = (lambda b: b[:, None]) if h.ndim == 2 else (lambda b: b)
    f = _sigmoid(p.W_f @ z + bias(p.b_f))
    i = _sigmoid(p.W_i @ z + bias(p.b_i))
    o = _sigmoid(p.W_o @ z + bias(p.b_o))
    C = f * C + i * np.tanh(p.W_C @ z + bias(p.b_C))
    h = o * np.tanh(C)
    y = p.W_head @ h + (p.b_head[:, None] if h.ndim == 2 else p.b_head)
    return y[0], h, C


def lstm_predictions(p: LstmParams, x) -> np.ndarray:
    """Head output after consuming each input, from a zero state."""
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros(p.H)
    C = np.zeros(p.H)
    pred = np.empty(x.size)
    for t in range(x.size):
        pred[t], h, C = _lstm_step(p, h, C, x[t])
    return pred


def vanilla_lstm_forward(p: LstmParams, x, targets):
    """Predictions after each input and their mean squared error against ``targets``."""
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.shape != targets.shape or x.ndim != 1:
        raise DataError(f"length mismatch: inputs {x.shape}, targets {targets.shape}")
    pred = lstm_predictions(p, x)
    return pred, float(np.mean((pred - targets) ** 2))


def build_lstm_graph(H: int, T: int, batched: bool = True):
    """Unrolled T-step vanilla LSTM graph with mean squared error output.

    Leaves: parameters, ``h0``/``C0``, and per step ``x{t}``, ``y{t}``, each
    (1, B) or (1,).
    """
    tape = Tape()
    P = {k: tape.leaf(k) for k in LstmParams.array_names()}
    h = tape.leaf("h0", trainable=False)
    C = tape.leaf("C0", trainable=False)
    total = None
    for t in range(T):
        x = tape.leaf(f"x{t}", trainable=False)
        y = tape.leaf(f"y{t}", trainable=False)
        z = tape.concat(h, x)

        def gate(W, b):
            return tape.bias_add(tape.matmul(P[W], z), P[b])

        f = tape.sigmoid(gate("W_f", "b_f"))
        i = tape.sigmoid(gate("W_i", "b_i"))
        o = tape.sigmoid(gate("W_o", "b_o"))
        C = tape.add(tape.mul(f, C), tape.mul(i, tape.tanh(gate("W_C", "b_C"))))
        h = tape.mul(o, tape.tanh(C))
        pred = tape.bias_add(tape.matmul(P["W_head"], h), P["b_head"])
        err = tape.mean(tape.square(tape.sub(pred, y)))
        if batched:
            err = tape.mean(err)
        total = err if total is None else tape.add(total, err)
    out = tape.mark_output(tape.scale(total, 1.0 / T))
    return tape, out
