"""Price ingestion, daily realized volatility, scaling and chronological splits."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError, DataWarning

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class PriceSeries:
    timestamps: np.ndarray  # epoch seconds, float64, strictly increasing
    prices: np.ndarray

    def __len__(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class RvSeries:
    """Aligned daily series; ``ret[0]`` is NaN when the first day has no prior close."""

    dates: np.ndarray  # datetime64[D]
    rv: np.ndarray
    ret: np.ndarray

    def __len__(self) -> int:
        return self.rv.size

    def __getitem__(self, sl: slice) -> "RvSeries":
        return RvSeries(self.dates[sl], self.rv[sl], self.ret[sl])


def _parse_timestamp(text: str) -> float:
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def load_prices(path, delimiter: str = ",") -> PriceSeries:
    """Read a ``timestamp,price`` CSV.

    Rows are sorted by time; duplicated timestamps keep the last row in file
    order. Both conditions are reported as a DataWarning.
    """
    ts: list[float] = []
    px: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "price"]:
            raise DataError(f"{path}: expected header 'timestamp,price', got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                t = _parse_timestamp(row[0])
                p = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: cannot parse row {row}: {exc}") from None
            if not np.isfinite(p) or p <= 0:
                raise DataError(f"{path}:{line}: price must be positive, got {row[1].strip()}")
            ts.append(t)
            px.append(p)
    if not ts:
        raise DataError(f"{path}: no price rows")

    t_arr = np.array(ts)
    p_arr = np.array(px)
    if np.any(np.diff(t_arr) < 0):
        warnings.warn(f"{path}: rows out of time order; sorted", DataWarning, stacklevel=2)
    order = np.argsort(t_arr, kind="stable")
    t_arr, p_arr = t_arr[order], p_arr[order]
    keep = np.append(t_arr[1:] != t_arr[:-1], True)  # last of each run of equal stamps
    n_dup = int((~keep).sum())
    if n_dup:
        warnings.warn(f"{path}: {n_dup} duplicate timestamps collapsed to last value", DataWarning, stacklevel=2)
    return PriceSeries(t_arr[keep], p_arr[keep])


def daily_realized_vol(p: PriceSeries, min_obs: int = 30) -> RvSeries:
    """Per UTC day: RV = sqrt(sum of squared intraday log returns).

    Days with fewer than ``min_obs`` observations are dropped. Daily returns
    are log ratios of consecutive retained closes.
    """
    if min_obs < 2:
        raise ValueError("min_obs must be at least 2")
    day = np.floor(p.timestamps / SECONDS_PER_DAY).astype(np.int64)
    starts = np.flatnonzero(np.r_[True, day[1:] != day[:-1]])
    ends = np.r_[starts[1:], day.size]

    dates, rv, closes = [], [], []
    dropped = 0
    for a, b in zip(starts, ends):
        if b - a < min_obs:
            dropped += 1
            continue
        seg = p.prices[a:b]
        r = np.log(seg[1:] / seg[:-1])
        rv.append(float(np.sqrt(np.dot(r, r))))
        closes.append(seg[-1])
        dates.append(day[a])
    if dropped:
        warnings.warn(f"dropped {dropped} days with fewer than {min_obs} observations", DataWarning, stacklevel=2)
    if not rv:
        raise DataError("no day has enough observations to compute realized volatility")
    closes = np.array(closes)
    ret = np.r_[np.nan, np.log(closes[1:] / closes[:-1])]
    return RvSeries(np.array(dates, dtype="datetime64[D]"), np.array(rv), ret)


def write_rv_csv(series: RvSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("date,rv,ret\n")
        for d, v, r in zip(series.dates, series.rv, series.ret):
            ret = "" if np.isnan(r) else format(r, ".17g")
            fh.write(f"{d},{format(v, '.17g')},{ret}\n")


def read_rv_csv(path) -> RvSeries:
    dates, rv, ret = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "rv", "ret"]:
            raise DataError(f"{path}: expected header 'date,rv,ret', got {header}")
        for row in reader:
            if not row:
                continue
            try:
                dates.append(np.datetime64(row[0].strip(), "D"))
                rv.append(float(row[1]))
                ret.append(float(row[2]) if row[2].strip() else np.nan)
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{reader.line_num}: cannot parse row {row}: {exc}") from None
    if not rv:
        raise DataError(f"{path}: no rows")
    out = RvSeries(np.array(dates, dtype="datetime64[D]"), np.array(rv), np.array(ret))
    if np.any(np.diff(out.dates.astype(np.int64)) <= 0):
        raise DataError(f"{path}: dates must be strictly increasing")
    if np.any(out.rv < 0) or not np.all(np.isfinite(out.rv)):
        raise DataError(f"{path}: rv must be finite and non-negative")
    return out


@dataclass(frozen=True)
class Scaler:
    """Affine map fitted on the training segment.

    ``minmax``: y = (x - lo) / (hi - lo). ``scale-only``: y = x / hi with
    hi = max |x|. Values outside the training range are not clipped.
    """

    mode: str
    lo: float
    hi: float

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.mode == "minmax":
            return (x - self.lo) / (self.hi - self.lo)
        return x / self.hi

    def invert(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self.mode == "minmax":
            return y * (self.hi - self.lo) + self.lo
        return y * self.hi

    @property
    def factor(self) -> float:
        """Multiplier taking scaled magnitudes back to original units."""
        return self.hi - self.lo if self.mode == "minmax" else self.hi


def fit_scaler(train, mode: str = "minmax") -> Scaler:
    x = np.asarray(train, dtype=np.float64)
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise DataError("cannot fit a scaler on an empty segment")
    if mode == "minmax":
        lo, hi = float(x.min()), float(x.max())
        if not hi > lo:
            raise DataError("min-max scaler needs max > min on the training segment")
        return Scaler(mode, lo, hi)
    if mode == "scale-only":
        s = float(np.abs(x).max())
        if not s > 0:
            raise DataError("scale-only scaler needs a non-zero training segment")
        return Scaler(mode, 0.0, s)
    raise ValueError(f"unknown scaler mode {mode!r}")


@dataclass(frozen=True)
class SplitSpec:
    n_val: int = 200
    n_test: int = 200
    min_train: int = 100


def split(series, spec: SplitSpec = SplitSpec()):
    """Chronological (train, val, test); val and test are the final points."""
    n = len(series)
    need = spec.n_val + spec.n_test + spec.min_train
    if n < need:
        raise DataError(f"series of length {n} is too short; need at least {need}")
    a = n - spec.n_val - spec.n_test
    b = n - spec.n_test
    return series[:a], series[a:b], series[b:]
