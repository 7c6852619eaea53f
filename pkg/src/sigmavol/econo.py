"""Classical volatility baselines: GARCH(1,1), GARCH-family filters, HAR-RV.

Returns are treated as zero-mean throughout (``mu`` defaults to 0). GARCH
recursions are written as plain scalar loops so that nested models reduce
to GARCH(1,1) bit for bit; the likelihood used during fitting runs the same
recursion through ``scipy.signal.lfilter`` for speed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import DataError, NumericalError

logger = logging.getLogger(__name__)

VARIANTS = ("garch11", "egarch", "cgarch", "gjr", "tgarch")
_EABS_NORMAL = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float
    delta: float = 0.0
    gamma: float = 0.0
    phi: float = 0.0
    rho: float = 0.0
    theta: float = 0.0
    mu: float = 0.0

    def validate(self, variant: str = "garch11") -> None:
        """Raise ValueError if the parameters are inadmissible for ``variant``."""
        if variant not in VARIANTS:
            raise ValueError(f"unknown GARCH variant {variant!r}")
        vals = asdict(self)
        bad = [k for k, v in vals.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite parameters: {bad}")
        a, b = self.alpha, self.beta
        if variant == "egarch":
            if abs(b) >= 1:
                raise ValueError(f"egarch needs |beta| < 1, got {b}")
            return
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if variant == "tgarch":
            if not 0 <= b < 1:
                raise ValueError(f"tgarch needs 0 <= beta < 1, got {b}")
            return
        if a < 0 or b < 0:
            raise ValueError(f"alpha and beta must be >= 0, got {a}, {b}")
        if variant == "gjr":
            if a + self.gamma < 0:
                raise ValueError("gjr needs alpha + gamma >= 0")
            if a + self.gamma / 2 + b >= 1:
                raise ValueError(f"gjr needs alpha + gamma/2 + beta < 1, got {a + self.gamma / 2 + b}")
            return
        if a + b >= 1:
            raise ValueError(f"stationarity needs alpha + beta < 1, got {a + b}")
        if variant == "cgarch" and abs(self.rho) >= 1:
            raise ValueError(f"cgarch needs |rho| < 1, got {self.rho}")

    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


def _as_returns(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.size < 1:
        raise DataError("returns must be a non-empty 1-d series")
    if not np.all(np.isfinite(r)):
        raise DataError("returns contain non-finite values")
    return r


def _initial_variance(r: np.ndarray, sigma2_0) -> float:
    s0 = float(np.var(r)) if sigma2_0 is None else float(sigma2_0)
    if not s0 > 0:
        raise DataError(f"initial variance must be > 0, got {s0}")
    return s0


def garch11_filter(p: GarchParams, r, sigma2_0: float | None = None) -> np.ndarray:
    """Conditional variance path; ``sigma2[0]`` is ``sigma2_0`` or the sample variance."""
    p.validate("garch11")
    r = _as_returns(r)
    s = _initial_variance(r, sigma2_0)
    omega, alpha, beta, mu = p.omega, p.alpha, p.beta, p.mu
    rl = r.tolist()
    out = [s]
    for t in range(1, len(rl)):
        e = rl[t - 1] - mu
        s = omega + alpha * (e * e) + beta * s
        out.append(s)
    return np.array(out)


def garch11_forecast(p: GarchParams, r_last: float, sigma2_last: float) -> float:
    p.validate("garch11")
    e = float(r_last) - p.mu
    return p.omega + p.alpha * (e * e) + p.beta * float(sigma2_last)


def garch_variant_filter(variant: str, p: GarchParams, r, sigma2_0: float | None = None) -> np.ndarray:
    """Variance path for one row of the GARCH family.

    ``tgarch`` evolves sigma rather than sigma^2; its path is returned squared.
    ``cgarch`` starts its long-run component at ``q_1 = sigma2_1``.
    """
    if variant == "garch11":
        return garch11_filter(p, r, sigma2_0)
    p.validate(variant)
    r = _as_returns(r)
    s = _initial_variance(r, sigma2_0)
    eps = (r - p.mu).tolist()
    rl = r.tolist()
    omega, alpha, beta = p.omega, p.alpha, p.beta
    out = [s]

    if variant == "gjr":
        gamma, mu = p.gamma, p.mu
        for t in range(1, len(eps)):
            e = eps[t - 1]
            ind = 1.0 if rl[t - 1] < mu else 0.0
            s = omega + (alpha + gamma * ind) * (e * e) + beta * s
            out.append(s)
    elif variant == "egarch":
        delta = p.delta
        log_s = math.log(s)
        for t in range(1, len(eps)):
            z = eps[t - 1] / math.sqrt(s)
            log_s = omega + alpha * (abs(z) - _EABS_NORMAL) + delta * z + beta * log_s
            s = math.exp(log_s)
            out.append(s)
    elif variant == "cgarch":
        rho, theta = p.rho, p.theta
        q = s
        for t in range(1, len(eps)):
            e2 = eps[t - 1] * eps[t - 1]
            q_prev = q
            q = omega + rho * q_prev + theta * (e2 - s)
            s = q + alpha * (e2 - q_prev) + beta * (s - q_prev)
            out.append(s)
    elif variant == "tgarch":
        phi = p.phi
        sd = math.sqrt(s)
        for t in range(1, len(eps)):
            e = eps[t - 1]
            sd = omega + alpha * e + beta * sd + (phi * e if e < 0 else 0.0)
            if sd <= 0:
                raise NumericalError(f"tgarch sigma became non-positive ({sd}) at step {t + 1}")
            out.append(sd * sd)

    path = np.array(out)
    bad = np.flatnonzero(~(path > 0) | ~np.isfinite(path))
    if bad.size:
        raise NumericalError(f"{variant} variance non-positive or non-finite at step {bad[0] + 1}")
    return path


# ---------------------------------------------------------------- GARCH MLE

@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    loglik: float
    mean: float
    sigma2_0: float
    n: int
    starts: list = field(default_factory=list, repr=False)


def _garch11_loglik(omega, alpha, beta, r2, s0) -> float:
    u = omega + alpha * r2[:-1]
    tail = lfilter([1.0], [1.0, -beta], u, zi=[beta * s0])[0]
    sig2 = np.concatenate(([s0], tail))
    if not np.all(sig2 > 0):
        return -np.inf
    return float(-0.5 * np.sum(np.log(2.0 * np.pi * sig2) + r2 / sig2))


def _to_params(z) -> tuple[float, float, float]:
    omega = math.exp(z[0])
    persist = 1.0 / (1.0 + math.exp(-z[1]))
    share = 1.0 / (1.0 + math.exp(-z[2]))
    return omega, persist * share, persist * (1.0 - share)


def _from_params(omega, alpha, beta) -> np.ndarray:
    persist = alpha + beta
    share = alpha / persist
    return np.array([math.log(omega), math.log(persist / (1 - persist)), math.log(share / (1 - share))])


_STARTS = [(0.05, 0.90), (0.10, 0.85), (0.15, 0.75), (0.03, 0.60),
           (0.20, 0.50), (0.10, 0.30), (0.02, 0.96), (0.30, 0.10)]


def garch11_fit(r, demean: bool = True) -> GarchFit:
    """Gaussian MLE of GARCH(1,1) by multi-start Nelder-Mead.

    Search runs over ``(log omega, logit(alpha + beta), logit(alpha / (alpha + beta)))``
    so every trial point is admissible. The winner is the highest
    log-likelihood, ties going to the lowest start index.
    """
    r = _as_returns(r)
    if r.size < 100:
        raise DataError(f"need at least 100 returns to fit GARCH(1,1), got {r.size}")
    mean = float(r.mean()) if demean else 0.0
    x = r - mean
    s0 = float(np.var(x))
    if not s0 > 0:
        raise DataError("returns have zero variance; the likelihood is degenerate")
    r2 = x * x
    n = x.size

    def objective(z):
        try:
            omega, alpha, beta = _to_params(z)
        except OverflowError:
            return np.inf
        ll = _garch11_loglik(omega, alpha, beta, r2, s0)
        return -ll / n if np.isfinite(ll) else np.inf

    results = []
    for idx, (a0, b0) in enumerate(_STARTS):
        z0 = _from_params(s0 * (1 - a0 - b0), a0, b0)
        f0 = objective(z0)
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-11, "maxiter": 4000, "maxfev": 8000})
        improved = bool(np.isfinite(res.fun) and res.fun <= f0)
        results.append({"start": idx, "alpha0": a0, "beta0": b0, "f0": float(f0),
                        "f": float(res.fun), "nfev": int(res.nfev), "improved": improved, "z": res.x})
        logger.debug("garch11 start %d: f0=%.8f f=%.8f nfev=%d", idx, f0, res.fun, res.nfev)

    ok = [d for d in results if d["improved"]]
    if not ok:
        diag = "; ".join(f"start {d['start']}: f0={d['f0']:.6g} f={d['f']:.6g}" for d in results)
        raise NumericalError(f"GARCH(1,1) fit failed from every start ({diag})")
    best = min(ok, key=lambda d: (d["f"], d["start"]))
    omega, alpha, beta = _to_params(best["z"])
    for d in results:
        d.pop("z")
    return GarchFit(GarchParams(omega, alpha, beta), -best["f"] * n, mean, s0, n, results)


# ------------------------------------------------------------------- HAR-RV

@dataclass(frozen=True)
class HarParams:
    c: float
    beta_d: float
    beta_w: float
    beta_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c, self.beta_d, self.beta_w, self.beta_m])


HAR_LAG = 22


def _har_rows(rv: np.ndarray) -> np.ndarray:
    """Feature rows for every 1-indexed t in [22, n]."""
    d = rv[HAR_LAG - 1:]
    w = sliding_window_view(rv, 5).mean(axis=1)[HAR_LAG - 5:]
    m = sliding_window_view(rv, HAR_LAG).mean(axis=1)
    return np.column_stack([d, w, m])


def _as_rv(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=np.float64)
    if rv.ndim != 1:
        raise DataError("rv must be a 1-d series")
    if not np.all(np.isfinite(rv)):
        raise DataError("rv contains non-finite values")
    return rv


def har_features(rv) -> np.ndarray:
    """(daily, weekly, monthly) rows for every t that has a next-day target.

    Row k holds the features at 1-indexed day ``t = 22 + k`` and pairs with
    the target ``rv[t]`` (0-indexed), giving ``n - 22`` rows.
    """
    rv = _as_rv(rv)
    if rv.size < HAR_LAG + 1:
        raise DataError(f"HAR needs at least {HAR_LAG + 1} observations, got {rv.size}")
    return _har_rows(rv)[:-1]


def har_feature_row(rv, t: int) -> np.ndarray:
    """Features built from ``rv[:t]`` (the first ``t`` observations), t >= 22."""
    rv = _as_rv(rv)
    if t < HAR_LAG or t > rv.size:
        raise DataError(f"cannot build HAR features from the first {t} observations")
    window = rv[t - HAR_LAG:t]
    return np.array([window[-1], window[-5:].mean(), window.mean()])


def har_fit(rv, cond_limit: float = 1e10) -> HarParams:
    """OLS of next-day RV on (1, d, w, m).

    Normal equations are used unless the Gram matrix is worse conditioned
    than ``cond_limit``, in which case an SVD least-squares solve is used.
    """
    feats = har_features(rv)
    if feats.shape[0] < 30:
        raise DataError(f"HAR fit needs at least 30 usable rows, got {feats.shape[0]}")
    rv = np.asarray(rv, dtype=np.float64)
    X = np.column_stack([np.ones(feats.shape[0]), feats])
    y = rv[HAR_LAG:]
    gram = X.T @ X
    coef = None
    if np.linalg.cond(gram) < cond_limit:
        coef = np.linalg.solve(gram, X.T @ y)
    else:
        logger.info("HAR design near-singular; falling back to SVD least squares")
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise NumericalError("HAR design is singular; least squares produced non-finite coefficients")
    return HarParams(*map(float, coef))


def har_forecast(p: HarParams, features) -> float | np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    return p.c + p.beta_d * f[..., 0] + p.beta_w * f[..., 1] + p.beta_m * f[..., 2]


# ------------------------------------------------------- parameter export

def format_params(params, variant: str, loglik: float | None = None, **extra) -> str:
    """Key = value text export of fitted parameters."""
    lines = [f"variant = {variant}"]
    for k, v in asdict(params).items():
        lines.append(f"{k} = {float(v)!r}")
    if loglik is not None:
        lines.append(f"loglik = {float(loglik)!r}")
    for k, v in extra.items():
        lines.append(f"{k} = {float(v)!r}")
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> tuple[str, object, dict]:
    """Inverse of :func:`format_params`; returns (variant, params, extras)."""
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    variant = kv.pop("variant", None)
    if variant is None:
        raise DataError("parameter file has no 'variant' entry")
    cls = HarParams if variant == "har" else GarchParams
    names = [f for f in cls.__dataclass_fields__]
    params = cls(**{k: float(kv.pop(k)) for k in names if k in kv})
    return variant, params, {k: float(v) for k, v in kv.items()}
