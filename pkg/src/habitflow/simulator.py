"""Synthetic cohorts with known habit dynamics, and matching accelerometer traces.

Each simulated participant starts from a random habit strength and full
accessibility. On every day the behavior is drawn with probability
``sigmoid(a + b * hs + c * acc)`` from the state entering that day, after which
the state is advanced with the true parameters. Weekly surveys report
``1 + 6 * hs`` plus Gaussian noise, clipped to the 1-7 scale. Missing days are
masked only in the emitted series; the latent behavior stays in the truth log.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from habitflow.dynamics import CognitiveParams
from habitflow.learning import sigmoid
from habitflow.sensor import SAMPLE_RATE, DayOutcome, RawTrace
from habitflow.series import ParticipantSeries, Survey

DEFAULT_SCHEDULE = "daily_week1_alternate_week2_none_after"
DEFAULT_TRUE_PARAMS = CognitiveParams(hdp=0.175, hgp=0.15, adp=0.3, agp_beh=0.3, agp_rem=0.5)


def reminder_days(schedule, n_days: int) -> np.ndarray:
    """0/1 reminder flags for days 1..n_days."""
    flags = np.zeros(n_days, dtype=np.int64)
    if schedule == DEFAULT_SCHEDULE:
        for day in range(1, n_days + 1):
            if day <= 7 or (day <= 14 and day % 2 == 0):
                flags[day - 1] = 1
        return flags
    if isinstance(schedule, str):
        raise ValueError(f"unknown reminder schedule {schedule!r}")
    for day in schedule:
        if not 1 <= int(day) <= n_days:
            raise ValueError(f"reminder day {day} outside 1..{n_days}")
        flags[int(day) - 1] = 1
    return flags


@dataclass(frozen=True)
class SimCohortSpec:
    n_participants: int = 75
    n_days: int = 21
    true_params: CognitiveParams = DEFAULT_TRUE_PARAMS
    link_a: float = -3.0
    link_b: float = 10.0
    link_c: float = 1.0
    reminder_schedule: str | tuple[int, ...] = DEFAULT_SCHEDULE
    lab_days: tuple[int, ...] = (1,)
    survey_days: tuple[int, ...] = (0, 7, 14, 21)
    survey_noise_sd: float = 1.0
    missing_rate: float = 0.05
    hs0_range: tuple[float, float] = (0.0, 0.6)
    study_mode: str = "study1"
    id_prefix: str = "p"
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.n_days < 1 or self.n_participants < 1:
            raise ValueError("need at least one participant and one day")
        for name in ("link_a", "link_b", "link_c", "survey_noise_sd", "missing_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.survey_noise_sd < 0 or not 0 <= self.missing_rate < 1:
            raise ValueError("survey_noise_sd must be >= 0 and missing_rate in [0, 1)")
        lo, hi = self.hs0_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("hs0_range must be an ordered pair inside [0, 1]")
        if self.study_mode not in ("study1", "study2"):
            raise ValueError("study_mode must be 'study1' or 'study2'")
        if any(not 0 <= d <= self.n_days for d in self.survey_days):
            raise ValueError(f"survey days must lie in 0..{self.n_days}")
        if any(not 1 <= d <= self.n_days for d in self.lab_days):
            raise ValueError(f"lab days must lie in 1..{self.n_days}")
        reminder_days(self.reminder_schedule, self.n_days)

    def link(self, hs, acc):
        return sigmoid(self.link_a + self.link_b * np.asarray(hs) + self.link_c * np.asarray(acc))


@dataclass(frozen=True, eq=False)
class TruthLog:
    """Latent quantities for one participant. ``hs``/``acc`` have one more entry than days."""

    participant_id: str
    hs0: float
    behavior: np.ndarray
    hs: np.ndarray
    acc: np.ndarray
    p: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulatedCohort:
    spec: SimCohortSpec
    series: tuple[ParticipantSeries, ...]
    truth: dict[str, TruthLog] = field(repr=False)

    def __iter__(self):
        return iter(self.series)

    def __len__(self):
        return len(self.series)


def _clip_scale(value: float) -> float:
    return float(min(max(value, 1.0), 7.0))


def _simulate_participant(spec: SimCohortSpec, index: int) -> tuple[ParticipantSeries, TruthLog]:
    rng = np.random.default_rng([spec.seed, index])
    pid = f"{spec.id_prefix}{index + 1:03d}"
    T = spec.n_days
    days = np.arange(1, T + 1)
    hs0 = float(rng.uniform(*spec.hs0_range))
    instrumental_mean = rng.uniform(4.0, 7.0)
    affective_mean = rng.uniform(3.0, 6.0)

    reminder = reminder_days(spec.reminder_schedule, T)
    lab = np.isin(days, spec.lab_days).astype(np.int64)
    surveyed = np.isin(days, spec.survey_days).astype(np.int64)
    rem = np.maximum(np.maximum(reminder, surveyed), lab)

    params = spec.true_params
    hs = np.empty(T + 1)
    acc = np.empty(T + 1)
    p = np.empty(T)
    behavior = np.empty(T)
    hs[0], acc[0] = hs0, 1.0
    uniforms = rng.random(T)
    for t in range(T):
        h, a = hs[t], acc[t]
        p[t] = spec.link(h, a)
        b = float(uniforms[t] < p[t])
        behavior[t] = b
        hs[t + 1] = h - h * params.hdp + (1 - h) * b * 1 * params.hgp
        raw = a - a * params.adp + (1 - a) * (b * params.agp_beh + rem[t] * params.agp_rem)
        acc[t + 1] = min(max(raw, 0.0), 1.0)

    surveys = []
    for day in sorted(set(spec.survey_days)):
        noise = rng.normal(0.0, spec.survey_noise_sd, size=3) if spec.survey_noise_sd > 0 else np.zeros(3)
        surveys.append(
            Survey(
                day=int(day),
                instrumental=_clip_scale(instrumental_mean + noise[0]),
                affective=_clip_scale(affective_mean + noise[1]),
                srbai=_clip_scale(1.0 + 6.0 * hs[day] + noise[2]),
            )
        )

    missing = rng.random(T) < spec.missing_rate
    observed = np.where(missing, np.nan, behavior)
    if spec.study_mode == "study2":
        initial_rate = float(np.round(7 * sigmoid(spec.link_a + spec.link_b * hs0)) / 7)
    else:
        initial_rate = 0.0
    series = ParticipantSeries(pid, days, observed, reminder, lab, tuple(surveys), initial_rate)
    return series, TruthLog(pid, hs0, behavior, hs, acc, p)


def simulate_cohort(spec: SimCohortSpec = SimCohortSpec()) -> SimulatedCohort:
    series, truth = [], {}
    for i in range(spec.n_participants):
        s, log = _simulate_participant(spec, i)
        series.append(s)
        truth[s.participant_id] = log
    return SimulatedCohort(spec, tuple(series), truth)


@dataclass(frozen=True)
class SimTraceSpec:
    """Synthetic brushing signal: gravity on z, Gaussian jitter, and a sinusoidal shake on x during episodes.

    Only short blocks around episodes (plus a quiet block at ``quiet_time``
    every day) are recorded, which keeps multi-week traces small.
    """

    morning_time: dt.time = dt.time(7, 30)
    evening_time: dt.time = dt.time(22, 15)
    episode_duration: float = 120.0
    spike_magnitude: float = 1.0
    shake_hz: float = 4.0
    noise_sd: float = 0.01
    sample_rate: int = SAMPLE_RATE
    padding: float = 60.0
    quiet_time: dt.time = dt.time(3, 0)
    quiet_duration: float = 30.0
    episodes: dict[dt.date, tuple[dt.time, ...]] | None = None
    timezone: str = "UTC"
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.episode_duration <= 0:
            raise ValueError("episode_duration must be positive")


def _timestamp(date: dt.date, time: dt.time, timezone: str) -> float:
    from zoneinfo import ZoneInfo

    return dt.datetime.combine(date, time, tzinfo=ZoneInfo(timezone)).timestamp()


def episode_schedule(spec: SimTraceSpec, day_outcomes: Sequence[DayOutcome]) -> list[tuple[float, float]]:
    """(start, end) timestamps of every intended episode, sorted."""
    intervals = []
    for outcome in day_outcomes:
        if spec.episodes is not None and outcome.date in spec.episodes:
            times = spec.episodes[outcome.date]
        else:
            times = []
            if outcome.morning == 1:
                times.append(spec.morning_time)
            if outcome.evening == 1:
                times.append(spec.evening_time)
        for time in times:
            start = _timestamp(outcome.date, time, spec.timezone)
            intervals.append((start, start + spec.episode_duration))
    intervals.sort()
    for (_, end), (start, _) in zip(intervals, intervals[1:]):
        if start < end:
            raise ValueError("overlapping episodes")
    return intervals


def simulate_trace(spec: SimTraceSpec, day_outcomes: Sequence[DayOutcome]) -> RawTrace:
    episodes = episode_schedule(spec, day_outcomes)
    blocks = [(s - spec.padding, e + spec.padding) for s, e in episodes]
    for outcome in day_outcomes:
        start = _timestamp(outcome.date, spec.quiet_time, spec.timezone)
        blocks.append((start, start + spec.quiet_duration))
    blocks.sort()
    merged: list[list[float]] = []
    for start, end in blocks:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    rng = np.random.default_rng(spec.seed)
    dt_s = 1.0 / spec.sample_rate
    pieces = []
    for start, end in merged:
        n = int(round((end - start) * spec.sample_rate))
        t = start + np.arange(n) * dt_s
        x = rng.normal(0.0, spec.noise_sd, n)
        y = rng.normal(0.0, spec.noise_sd, n)
        z = 1.0 + rng.normal(0.0, spec.noise_sd, n)
        for ep_start, ep_end in episodes:
            inside = (t >= ep_start) & (t < ep_end)
            x[inside] += spec.spike_magnitude * np.sin(2 * np.pi * spec.shake_hz * (t[inside] - ep_start))
        pieces.append(RawTrace(t, x, y, z))
    return RawTrace.concat(pieces) if pieces else RawTrace([], [], [], [])
