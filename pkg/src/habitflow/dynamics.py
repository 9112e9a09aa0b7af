"""Habit strength and memory accessibility recurrences.

Habit strength decays proportionally each day and grows toward 1 whenever the
behavior is performed in the presence of its cue::

    hs' = hs - hs * hdp + (1 - hs) * beh * cue * hgp

Accessibility decays the same way and is restored by behavior executions and
by reminders, each with its own gain::

    acc' = acc - acc * adp + (1 - acc) * (beh * agp_beh + rem * agp_rem)

The accessibility gain can overshoot 1 when both stimuli arrive on the same day
and ``agp_beh + agp_rem > 1``; the result is clamped to [0, 1].

A day with missing behavior still advances time: decay applies and the gain
terms use ``beh = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from habitflow.series import ParticipantSeries, scale_srbai

PARAM_NAMES = ("hdp", "hgp", "adp", "agp_beh", "agp_rem")


def _check_fraction(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class CognitiveParams:
    """Free parameters of the two recurrences, each a fraction in [0, 1]."""

    hdp: float
    hgp: float
    adp: float = 0.0
    agp_beh: float = 0.0
    agp_rem: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _check_fraction(f.name, getattr(self, f.name)))

    @classmethod
    def from_sequence(cls, values) -> CognitiveParams:
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in PARAM_NAMES)

    @property
    def habit_fixed_point(self) -> float:
        """Limit of hs under daily cued behavior: hgp / (hdp + hgp)."""
        total = self.hdp + self.hgp
        if total == 0:
            raise ValueError("fixed point undefined when hdp + hgp == 0")
        return self.hgp / total


@dataclass(frozen=True)
class CognitiveState:
    hs: float
    acc: float
    t: int


@dataclass(frozen=True)
class DayEvent:
    """Inputs for one day. ``beh=None`` marks a missing observation."""

    beh: int | None
    cue: int = 1
    rem: int = 0
    lab: int = 0

    def __post_init__(self):
        for name in ("cue", "rem", "lab"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if self.beh is not None and self.beh not in (0, 1):
            raise ValueError("beh must be 0, 1 or None")


def _observed_beh(event: DayEvent) -> int:
    if event.beh is None:
        raise ValueError("behavior is missing; use trajectory() for decay-only handling")
    return event.beh


def step_habit(state_hs: float, event: DayEvent, params: CognitiveParams) -> float:
    hs = _check_fraction("state_hs", state_hs)
    beh = _observed_beh(event)
    return hs - hs * params.hdp + (1 - hs) * beh * event.cue * params.hgp


def step_accessibility(state_acc: float, event: DayEvent, params: CognitiveParams) -> float:
    acc = _check_fraction("state_acc", state_acc)
    beh = _observed_beh(event)
    raw = acc - acc * params.adp + (1 - acc) * (beh * params.agp_beh + event.rem * params.agp_rem)
    return min(max(raw, 0.0), 1.0)


def default_initial_hs(self_report: float | None) -> float:
    """Initial habit strength: the scaled self-report if given, else 0."""
    if self_report is None:
        return 0.0
    return _check_fraction("self_report", self_report)


def initial_hs_for(series: ParticipantSeries) -> float:
    """hs0 for a participant, taken from the baseline SRBAI when one exists."""
    srbai = series.baseline_srbai()
    return default_initial_hs(None if srbai is None else scale_srbai(srbai))


def series_events(series: ParticipantSeries) -> list[DayEvent]:
    rem = series.accessibility_reminders
    return [
        DayEvent(
            beh=None if math.isnan(b) else int(b),
            rem=int(r),
            lab=int(lab),
        )
        for b, r, lab in zip(series.behavior, rem, series.lab)
    ]


def trajectory(
    series: ParticipantSeries,
    params: CognitiveParams,
    hs0: float,
    acc0: float = 1.0,
) -> list[CognitiveState]:
    """States for t = 0..T, where state t has absorbed the first t days of ``series``.

    ``acc0`` defaults to 1: a freshly trained behavior is maximally accessible.
    """
    if len(series) == 0:
        raise ValueError(f"participant {series.participant_id}: empty series")
    series.require_consecutive()
    hs = _check_fraction("hs0", hs0)
    acc = _check_fraction("acc0", acc0)
    hdp, hgp, adp, agp_beh, agp_rem = params.as_tuple()
    # same arithmetic as step_habit / step_accessibility with missing days as beh=0,
    # inlined because the states provably stay in [0, 1]
    behavior = [0 if math.isnan(b) else int(b) for b in series.behavior.tolist()]
    states = [CognitiveState(hs, acc, 0)]
    for t, (beh, rem) in enumerate(zip(behavior, series.accessibility_reminders.tolist()), start=1):
        hs = hs - hs * hdp + (1 - hs) * beh * 1 * hgp
        raw = acc - acc * adp + (1 - acc) * (beh * agp_beh + rem * agp_rem)
        acc = min(max(raw, 0.0), 1.0)
        states.append(CognitiveState(hs, acc, t))
    return states


def batch_trajectory(
    behavior: np.ndarray,
    reminders: np.ndarray,
    params: CognitiveParams,
    hs0: np.ndarray,
    acc0: float | np.ndarray = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`trajectory` over participants.

    ``behavior`` and ``reminders`` are (P, T) arrays; NaN behavior is treated as
    a missing day. Returns ``(hs, acc)`` of shape (P, T + 1). Arithmetic follows
    the scalar path operation for operation, so results agree bit for bit.
    """
    behavior = np.asarray(behavior, dtype=np.float64)
    reminders = np.asarray(reminders, dtype=np.float64)
    n_part, n_days = behavior.shape
    beh = np.where(np.isnan(behavior), 0.0, behavior)
    hs = np.empty((n_part, n_days + 1))
    acc = np.empty((n_part, n_days + 1))
    hs[:, 0] = hs0
    acc[:, 0] = acc0
    hdp, hgp, adp, agp_beh, agp_rem = params.as_tuple()
    for t in range(n_days):
        h = hs[:, t]
        a = acc[:, t]
        b = beh[:, t]
        hs[:, t + 1] = h - h * hdp + (1 - h) * b * 1 * hgp
        raw = a - a * adp + (1 - a) * (b * agp_beh + reminders[:, t] * agp_rem)
        acc[:, t + 1] = np.minimum(np.maximum(raw, 0.0), 1.0)
    return hs, acc
