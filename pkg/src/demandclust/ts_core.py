"""Time-series containers and the transforms that turn meter data into daily patterns."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Optional, Union

import numpy as np

DEFAULT_PERIOD = 48  # 30-minute samples per day
DEFAULT_WINDOW = 4  # two hours at 30-minute resolution
WORK_HOURS = (20, 31)  # 10:00-16:00 inclusive sample indices at P=48
DAY_CLASSES = ("weekday", "weekend", "all")


def _checked_values(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    interval_seconds: int = 1800
    start_timestamp: Optional[datetime] = None
    id: str = ""

    def __post_init__(self):
        arr = _checked_values(self.values)
        if arr.size < 1:
            raise ValueError("time series needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"time series {self.id!r} has non-finite values")
        if int(self.interval_seconds) <= 0:
            raise ValueError("interval_seconds must be positive")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class DemandPattern:
    """A periodic mean over ``n_periods`` full periods of a meter series."""

    values: np.ndarray
    n_periods: int = 1
    normalized: bool = False
    day_class: str = "all"
    id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = _checked_values(self.values)
        if arr.size < 1:
            raise ValueError("pattern needs at least one sample")
        if self.day_class not in DAY_CLASSES:
            raise ValueError(f"day_class must be one of {DAY_CLASSES}")
        if self.normalized and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("normalized pattern values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def period_samples(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FeatureVector:
    mean_workhours: float
    std_workhours: float

    def __post_init__(self):
        if self.std_workhours < 0:
            raise ValueError("std_workhours must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_workhours, self.std_workhours])


Series = Union[TimeSeries, DemandPattern, np.ndarray, list]


def _values(x) -> np.ndarray:
    if isinstance(x, (TimeSeries, DemandPattern)):
        return x.values
    return np.asarray(x, dtype=np.float64).reshape(-1)


def periodic_mean(x: Series, period: int = DEFAULT_PERIOD,
                  day_class: str = "all") -> DemandPattern:
    """Average the full periods of ``x`` sample by sample.

    Trailing samples that do not fill a whole period are dropped; the
    count of dropped samples is kept in ``meta["discarded"]``.
    """
    v = _values(x)
    period = int(period)
    if period < 1:
        raise ValueError("period must be a positive integer")
    if v.size < period:
        raise ValueError("insufficient data for one period")
    n_periods = v.size // period
    used = v[: n_periods * period].reshape(n_periods, period)
    ident = x.id if isinstance(x, (TimeSeries, DemandPattern)) else ""
    # averaging deviations from the first period is exact for identical periods
    mean = used[0] + (used - used[0]).mean(axis=0)
    return DemandPattern(mean, n_periods=n_periods, day_class=day_class,
                         id=ident, meta={"discarded": int(v.size - n_periods * period)})


def day_class_means(x: TimeSeries, period: int = DEFAULT_PERIOD) -> list:
    """Weekday and weekend periodic means of a series that starts at midnight.

    Day classes follow the calendar of ``start_timestamp``; a series without
    one yields a single ``all`` pattern. A class with no full day is left out.
    """
    if x.start_timestamp is None:
        return [periodic_mean(x, period)]
    n_days = len(x) // int(period)
    if n_days < 1:
        raise ValueError("insufficient data for one period")
    days = x.values[: n_days * period].reshape(n_days, period)
    weekend = np.array([(x.start_timestamp + timedelta(days=d)).weekday() >= 5
                        for d in range(n_days)])
    out = []
    for day_class, mask in (("weekday", ~weekend), ("weekend", weekend)):
        if mask.any():
            p = periodic_mean(days[mask].reshape(-1), period, day_class=day_class)
            out.append(replace(p, id=x.id, meta={"discarded": len(x) - n_days * period}))
    return out


def moving_average(x: Series, window: int = DEFAULT_WINDOW, circular: bool = True):
    """Centered moving average that keeps the series length.

    The window spans offsets ``-(window // 2) .. window - 1 - window // 2``.
    With ``circular`` the series wraps around (daily patterns); otherwise the
    window shrinks at both ends. Returns the same type as the input.
    """
    v = _values(x)
    window = int(window)
    if window < 1:
        raise ValueError("window must be at least 1")
    if window > v.size:
        raise ValueError(f"window {window} exceeds series length {v.size}")
    lo = -(window // 2)
    offsets = np.arange(lo, lo + window)
    if circular:
        idx = (np.arange(v.size)[:, None] + offsets[None, :]) % v.size
        out = v[idx].mean(axis=1)
    else:
        csum = np.concatenate(([0.0], np.cumsum(v)))
        start = np.clip(np.arange(v.size) + lo, 0, v.size)
        stop = np.clip(np.arange(v.size) + lo + window, 0, v.size)
        out = (csum[stop] - csum[start]) / (stop - start)
    if isinstance(x, (TimeSeries, DemandPattern)):
        return replace(x, values=out)
    return out


def min_max_normalize(y: Series) -> DemandPattern:
    """Rescale a pattern to [0, 1]; a constant pattern maps to all zeros."""
    v = _values(y)
    lo, hi = v.min(), v.max()
    out = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    # guard against 1 + eps from rounding
    out = np.clip(out, 0.0, 1.0)
    if isinstance(y, DemandPattern):
        return replace(y, values=out, normalized=True)
    return DemandPattern(out, normalized=True)


def work_hour_features(y: Series, window: tuple[int, int] = WORK_HOURS) -> FeatureVector:
    """Mean and population standard deviation over an inclusive index window."""
    v = _values(y)
    start, stop = int(window[0]), int(window[1])
    if start < 0 or stop >= v.size:
        raise ValueError(f"window {window} out of range for length {v.size}")
    seg = v[start: stop + 1]
    if seg.size == 0:
        raise ValueError("empty work-hour window")
    if np.all(seg == seg[0]):
        return FeatureVector(float(seg[0]), 0.0)
    return FeatureVector(float(seg.mean()), float(seg.std()))


def stack(patterns) -> np.ndarray:
    """Stack patterns (or raw arrays) into an (n, P) float matrix."""
    rows = [_values(p) for p in patterns]
    if not rows:
        raise ValueError("empty dataset")
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent pattern lengths: {sorted(lengths)}")
    return np.ascontiguousarray(np.vstack(rows))
