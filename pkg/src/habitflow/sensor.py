"""From 50 Hz toothbrush accelerometer traces to day-level brushing outcomes.

1. ``to_svm``: each 1 s window of 50 samples becomes the mean of
   ``|sqrt(x^2 + y^2 + z^2) - 1|`` (gravity removed, in g).
2. ``extract_episodes``: runs of seconds at or above an activity threshold;
   runs separated by less than ``merge_gap`` are joined, and joined runs
   shorter than ``min_duration`` are dropped.
3. ``classify_day``: episodes are binned by local start time into six
   half-open categories and turned into morning / evening indicators.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

SAMPLE_RATE = 50
SAMPLE_SPACING = 1.0 / SAMPLE_RATE

# (name, start hour, end hour), half-open
CATEGORIES = (
    ("overnight", 0, 5),
    ("morning", 5, 12),
    ("morning-afternoon", 12, 15),
    ("afternoon", 15, 19),
    ("afternoon-evening", 19, 21),
    ("evening", 21, 24),
)
TARGET_RULES = ("morning", "evening", "twice")


@dataclass(frozen=True, eq=False)
class RawTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64).ravel() for a in (self.t, self.x, self.y, self.z)]
        if len({a.size for a in arrays}) != 1:
            raise ValueError("t, x, y, z must have equal length")
        if arrays[0].size > 1 and np.any(np.diff(arrays[0]) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for name, arr in zip("txyz", arrays):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def concat(cls, traces: Sequence[RawTrace]) -> RawTrace:
        return cls(*(np.concatenate([getattr(tr, a) for tr in traces]) for a in "txyz"))


@dataclass(frozen=True, eq=False)
class SvmSeries:
    window_start: np.ndarray
    magnitude: np.ndarray

    def __len__(self) -> int:
        return self.window_start.size


@dataclass(frozen=True)
class ThresholdConfig:
    activity_threshold: float = 0.08
    min_duration: float = 30.0
    merge_gap: float = 10.0
    timezone: str = "UTC"

    def __post_init__(self):
        if self.activity_threshold <= 0 or self.min_duration < 0 or self.merge_gap < 0:
            raise ValueError("threshold must be positive, durations non-negative")
        ZoneInfo(self.timezone)


@dataclass(frozen=True)
class BrushEpisode:
    start: float
    end: float
    category: str
    valid: bool = True

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("episode end must follow its start")


@dataclass(frozen=True)
class DayOutcome:
    participant_id: str
    date: dt.date
    morning: int | None
    evening: int | None
    target: int | None


@dataclass(frozen=True)
class NoiseWindow:
    participant_id: str
    start_date: dt.date
    end_date: dt.date

    def __post_init__(self):
        if self.end_date < self.start_date:
            raise ValueError(f"noise window for {self.participant_id} ends before it starts")

    def covers(self, outcome: DayOutcome) -> bool:
        return outcome.participant_id == self.participant_id and self.start_date <= outcome.date <= self.end_date


def _segments(t: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges of gap-free stretches (spacing at most twice nominal)."""
    breaks = np.flatnonzero(np.diff(t) > 2 * SAMPLE_SPACING) + 1
    edges = np.r_[0, breaks, t.size]
    return list(zip(edges[:-1], edges[1:]))


def to_svm(trace: RawTrace, n: int = SAMPLE_RATE) -> SvmSeries:
    if len(trace) == 0:
        raise ValueError("empty trace")
    if len(trace) < n:
        raise ValueError(f"need at least {n} samples, got {len(trace)}")
    deviation = np.abs(np.sqrt(trace.x**2 + trace.y**2 + trace.z**2) - 1.0)
    starts, mags = [], []
    for lo, hi in _segments(trace.t):
        usable = (hi - lo) // n * n
        if usable == 0:
            continue
        starts.append(trace.t[lo : lo + usable : n])
        mags.append(deviation[lo : lo + usable].reshape(-1, n).mean(axis=1))
    if not starts:
        return SvmSeries(np.empty(0), np.empty(0))
    return SvmSeries(np.concatenate(starts), np.concatenate(mags))


def category_of(timestamp: float, timezone: str = "UTC") -> str:
    hour = dt.datetime.fromtimestamp(timestamp, ZoneInfo(timezone)).hour
    for name, lo, hi in CATEGORIES:
        if lo <= hour < hi:
            return name
    raise AssertionError(hour)


def local_date(timestamp: float, timezone: str = "UTC") -> dt.date:
    return dt.datetime.fromtimestamp(timestamp, ZoneInfo(timezone)).date()


def _active_runs(series: SvmSeries, threshold: float) -> list[tuple[float, float]]:
    runs = []
    active = series.magnitude >= threshold
    t = series.window_start
    i, n = 0, len(series)
    while i < n:
        if not active[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and active[j + 1] and t[j + 1] - t[j] <= 1.5:
            j += 1
        runs.append((float(t[i]), float(t[j]) + 1.0))
        i = j + 1
    return runs


def extract_episodes(series: SvmSeries, cfg: ThresholdConfig = ThresholdConfig()) -> list[BrushEpisode]:
    if len(series) == 0:
        raise ValueError("empty SVM series")
    merged: list[list[float]] = []
    for start, end in _active_runs(series, cfg.activity_threshold):
        if merged and start - merged[-1][1] < cfg.merge_gap:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    return [
        BrushEpisode(start, end, category_of(start, cfg.timezone))
        for start, end in merged
        if end - start >= cfg.min_duration
    ]


def target_value(morning: int | None, evening: int | None, rule: str) -> int | None:
    if rule not in TARGET_RULES:
        raise ValueError(f"unknown target rule {rule!r}; expected one of {TARGET_RULES}")
    if morning is None or evening is None:
        return None
    if rule == "morning":
        return morning
    if rule == "evening":
        return evening
    return int(morning == 1 and evening == 1)


def classify_day(
    episodes: Iterable[BrushEpisode],
    date: dt.date,
    participant_id: str = "",
    target_rule: str = "twice",
    timezone: str = "UTC",
) -> DayOutcome:
    """Day-level indicators with the primary category searched before its fallback.

    Morning: ``morning``, else ``morning-afternoon``. Evening: ``evening`` or
    ``overnight`` (same calendar date), else ``afternoon-evening``. Because any
    hit in either tier sets the indicator, the search order only matters for
    which category is credited, not for the 0/1 value.
    """
    found = set()
    for ep in episodes:
        if not ep.valid:
            continue
        if local_date(ep.start, timezone) != date:
            raise ValueError(f"episode starting at {ep.start} is not on {date}")
        found.add(ep.category)
    morning = int("morning" in found or "morning-afternoon" in found)
    evening = int("evening" in found or "overnight" in found or "afternoon-evening" in found)
    return DayOutcome(participant_id, date, morning, evening, target_value(morning, evening, target_rule))


def mark_missing(outcomes: Sequence[DayOutcome], noise_windows: Sequence[NoiseWindow]) -> list[DayOutcome]:
    out = []
    for o in outcomes:
        if any(w.covers(o) for w in noise_windows):
            o = DayOutcome(o.participant_id, o.date, None, None, None)
        out.append(o)
    return out


def preprocess_trace(
    participant_id: str,
    trace: RawTrace,
    cfg: ThresholdConfig = ThresholdConfig(),
    target_rule: str = "twice",
    noise_windows: Sequence[NoiseWindow] = (),
) -> list[DayOutcome]:
    """Full pipeline for one participant: one outcome per calendar date spanned by the trace.

    Dates inside the span without a single SVM window are coded missing.
    """
    svm = to_svm(trace)
    if len(svm) == 0:
        raise ValueError(f"participant {participant_id}: no complete 1 s window in trace")
    episodes = extract_episodes(svm, cfg)
    covered = {local_date(t, cfg.timezone) for t in svm.window_start}
    by_date: dict[dt.date, list[BrushEpisode]] = {}
    for ep in episodes:
        by_date.setdefault(local_date(ep.start, cfg.timezone), []).append(ep)
    first, last = min(covered), max(covered)
    outcomes = []
    for offset in range((last - first).days + 1):
        date = first + dt.timedelta(days=offset)
        if date in covered:
            outcomes.append(classify_day(by_date.get(date, []), date, participant_id, target_rule, cfg.timezone))
        else:
            outcomes.append(DayOutcome(participant_id, date, None, None, None))
    return mark_missing(outcomes, noise_windows)
