"""Labeled synthetic household water demand.

Each day is a sum of wrapped Gaussian bumps (morning, midday, evening...)
whose times move with a per-household routine offset plus per-day jitter.
Bumps are normalized over the day, so shifting them never changes the
daily volume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional
from datetime import datetime, timedelta

import numpy as np

from .ts_core import DEFAULT_PERIOD, TimeSeries

PROFILE_LABELS = ("work", "home", "anomaly_morning_only", "anomaly_triple_peak")
EXPERIMENTS = ("single_person", "multi_person", "with_anomalies")
START = datetime(2021, 1, 4)  # a Monday

# (center hour, width hours, share of daily volume)
TEMPLATES = {
    "work": ((6.75, 0.6, 0.42), (18.75, 0.9, 0.43), (22.25, 0.6, 0.15)),
    "home": ((8.0, 0.8, 0.27), (12.5, 1.0, 0.22), (15.25, 1.0, 0.14), (19.0, 0.9, 0.37)),
    "anomaly_morning_only": ((7.5, 1.0, 0.90), (13.0, 3.0, 0.10)),
    "anomaly_triple_peak": ((6.5, 0.5, 0.34), (12.75, 0.5, 0.32), (21.0, 0.5, 0.34)),
}
# extra afternoon use when children live in the home
CHILDREN_BUMP = (16.25, 0.8, 0.18)
# household-to-household variation of bump volume shares
SHARE_SPREAD = {"work": 0.2, "home": 0.5}
# Dutch household size shares for 1..5 residents
HOUSEHOLD_SIZES = (0.36, 0.33, 0.13, 0.12, 0.06)


@dataclass(frozen=True)
class HouseholdProfile:
    """Parameters of one simulated household.

    ``routine_offsets_minutes`` is the household's own schedule shift per
    template bump; ``day_jitter_minutes`` bounds the extra uniform shift
    drawn independently for every day and defaults to a third of
    ``peak_shift_minutes``.
    """

    label: str
    residents: int = 1
    peak_shift_minutes: float = 90.0
    base_consumption: float = 130.0
    noise_level: float = 0.2
    routine_offsets_minutes: tuple = ()
    day_jitter_minutes: Optional[float] = None
    share_scales: tuple = ()
    id: str = ""

    def __post_init__(self):
        if self.label not in PROFILE_LABELS:
            raise ValueError(f"unknown profile label {self.label!r}")
        if self.residents < 1:
            raise ValueError("residents must be >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if self.peak_shift_minutes < 0:
            raise ValueError("peak_shift_minutes must be >= 0")
        if self.day_jitter_minutes is None:
            object.__setattr__(self, "day_jitter_minutes", self.peak_shift_minutes / 3.0)

    def bumps(self) -> tuple:
        base = TEMPLATES[self.label]
        if self.label == "home" and self.residents >= 3:
            base = base + (CHILDREN_BUMP,)
        scales = list(self.share_scales)[: len(base)]
        scales += [1.0] * (len(base) - len(scales))
        shares = [b[2] * f for b, f in zip(base, scales)]
        total = sum(shares)
        return tuple((c, w, s / total) for (c, w, _), s in zip(base, shares))


@dataclass(frozen=True)
class LabeledDataset:
    series: list
    labels: list
    profiles: list
    seed: int
    experiment: str = ""
    days: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def ids(self) -> list:
        return [s.id for s in self.series]

    def patterns(self, period: int = DEFAULT_PERIOD, window: int = 4, normalize: bool = False):
        from .ts_core import min_max_normalize, moving_average, periodic_mean

        out = []
        for s in self.series:
            p = moving_average(periodic_mean(s, period), window)
            out.append(min_max_normalize(p) if normalize else p)
        return out


def _day_shape(bumps, shifts_hours: np.ndarray, period: int) -> np.ndarray:
    hours = (np.arange(period) + 0.5) * 24.0 / period
    day = np.zeros((len(bumps), period))
    for k, (center, width, _) in enumerate(bumps):
        c = (center + shifts_hours[k]) % 24.0
        # wrap over neighbouring days so midnight is continuous
        d = hours[None, :] - c + np.array([[-24.0], [0.0], [24.0]])
        dens = np.exp(-0.5 * (d / width) ** 2).sum(axis=0)
        day[k] = dens / dens.sum()
    return day


def generate_household(profile: HouseholdProfile, days: int, rng: np.random.Generator,
                       period: int = DEFAULT_PERIOD, start: datetime = START) -> TimeSeries:
    """Simulate ``days`` days of demand (liters per interval) for one household."""
    if days < 1:
        raise ValueError("days must be >= 1")
    bumps = profile.bumps()
    n_b = len(bumps)
    routine = np.zeros(n_b)
    given = np.asarray(profile.routine_offsets_minutes, dtype=float)
    routine[: min(n_b, given.size)] = given[:n_b]
    shares = np.array([b[2] for b in bumps])
    daily = profile.base_consumption * profile.residents
    out = np.empty((days, period))
    for d in range(days):
        jitter = rng.uniform(-1.0, 1.0, n_b) * profile.day_jitter_minutes
        shape = _day_shape(bumps, (routine + jitter) / 60.0, period)
        factor = 1.0 + profile.noise_level * rng.standard_normal(n_b)
        vol = daily * shares * np.clip(factor, 0.0, None)
        out[d] = vol @ shape
    return TimeSeries(out.reshape(-1), interval_seconds=86400 // period,
                      start_timestamp=start, id=profile.id)


def _draw_profile(label, residents, rng, peak_shift, noise_level, hid):
    n_b = len(HouseholdProfile(label, residents).bumps())
    offsets = tuple(float(v) for v in rng.uniform(-peak_shift, peak_shift, n_b))
    spread = SHARE_SPREAD.get(label, 0.0)
    scales = tuple(float(v) for v in rng.uniform(1.0 - spread, 1.0 + spread, n_b))
    base = float(130.0 * rng.uniform(0.75, 1.25))
    return HouseholdProfile(label=label, residents=residents, peak_shift_minutes=peak_shift,
                            base_consumption=base, noise_level=noise_level,
                            routine_offsets_minutes=offsets, share_scales=scales, id=hid)


def generate_dataset(experiment: str, n_households: int = 100, days: int = 100,
                     seed: int = 0, peak_shift_minutes: float = 90.0,
                     noise_level: float = 0.2, n_anomalies: int = 2) -> LabeledDataset:
    """Build one of the labeled experiments.

    ``single_person``: even work/home split. ``multi_person``: household
    sizes 1-5, truth label ``family`` for 3+ residents. ``with_anomalies``:
    work/home base with ``n_anomalies`` anomalous households appended.
    """
    if experiment not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}")
    if n_households < 2:
        raise ValueError("n_households must be >= 2")
    root = np.random.SeedSequence(seed)
    rng = np.random.default_rng(root.spawn(1)[0])
    labels, kinds, sizes = [], [], []
    if experiment == "single_person":
        n_work = n_households // 2
        kinds = ["work"] * n_work + ["home"] * (n_households - n_work)
        labels = list(kinds)
        sizes = [1] * n_households
    elif experiment == "multi_person":
        sizes = [int(s) for s in rng.choice(np.arange(1, 6), size=n_households, p=HOUSEHOLD_SIZES)]
        kinds = ["home" if s >= 3 else "work" for s in sizes]
        labels = ["family" if s >= 3 else "non_family" for s in sizes]
    else:
        if n_anomalies >= n_households - 1:
            raise ValueError("too many anomalies for the dataset size")
        n_base = n_households - n_anomalies
        n_work = n_base // 2
        kinds = ["work"] * n_work + ["home"] * (n_base - n_work)
        anomalies = [("anomaly_morning_only", "anomaly_triple_peak")[i % 2] for i in range(n_anomalies)]
        kinds += anomalies
        labels = list(kinds)
        sizes = [1] * n_households
    width = len(str(n_households))
    series, profiles = [], []
    for i, (kind, size, child) in enumerate(zip(kinds, sizes, root.spawn(n_households))):
        hrng = np.random.default_rng(child)
        prof = _draw_profile(kind, size, hrng, peak_shift_minutes, noise_level,
                             f"H{i:0{width}d}")
        profiles.append(prof)
        series.append(generate_household(prof, days, hrng))
    return LabeledDataset(series=series, labels=labels, profiles=profiles, seed=seed,
                          experiment=experiment, days=days,
                          meta={"peak_shift_minutes": peak_shift_minutes,
                                "noise_level": noise_level})


def timestamps(series: TimeSeries) -> list:
    start = series.start_timestamp or START
    step = timedelta(seconds=series.interval_seconds)
    return [start + i * step for i in range(len(series))]
