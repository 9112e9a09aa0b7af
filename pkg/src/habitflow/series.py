"""Per-participant daily records shared by the dynamics, features and simulator modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SURVEY_SCALE = (1.0, 7.0)


@dataclass(frozen=True)
class Survey:
    """One administered questionnaire. Values are on the 1-7 scale; NaN marks a skipped item."""

    day: int
    instrumental: float = math.nan
    affective: float = math.nan
    srbai: float = math.nan

    def __post_init__(self):
        lo, hi = SURVEY_SCALE
        for name in ("instrumental", "affective", "srbai"):
            value = getattr(self, name)
            if not math.isnan(value) and not lo <= value <= hi:
                raise ValueError(f"survey {name}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class ParticipantSeries:
    """Aligned daily sequences for one participant.

    ``behavior`` holds 0/1 with NaN for missing days; ``reminder`` and ``lab``
    are dense 0/1 arrays. Surveys are sparse and may include a baseline survey
    dated before the first observed day.
    """

    participant_id: str
    days: np.ndarray
    behavior: np.ndarray
    reminder: np.ndarray
    lab: np.ndarray
    surveys: tuple[Survey, ...] = ()
    initial_behavior_rate: float = 0.0
    _survey_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        behavior = np.asarray(self.behavior, dtype=np.float64)
        reminder = np.asarray(self.reminder, dtype=np.int64)
        lab = np.asarray(self.lab, dtype=np.int64)
        n = len(days)
        for name, arr in (("behavior", behavior), ("reminder", reminder), ("lab", lab)):
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        if n > 1 and np.any(np.diff(days) <= 0):
            raise ValueError("day indices must be strictly increasing")
        observed = behavior[~np.isnan(behavior)]
        if np.any((observed != 0) & (observed != 1)):
            raise ValueError("behavior must be 0, 1 or NaN")
        for name, arr in (("reminder", reminder), ("lab", lab)):
            if np.any((arr != 0) & (arr != 1)):
                raise ValueError(f"{name} must be binary")
        if not 0.0 <= self.initial_behavior_rate <= 1.0:
            raise ValueError("initial_behavior_rate must lie in [0, 1]")
        surveys = tuple(sorted(self.surveys, key=lambda s: s.day))
        if len({s.day for s in surveys}) != len(surveys):
            raise ValueError("at most one survey per day")
        for arr in (days, behavior, reminder, lab):
            arr.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "behavior", behavior)
        object.__setattr__(self, "reminder", reminder)
        object.__setattr__(self, "lab", lab)
        object.__setattr__(self, "surveys", surveys)
        mask = np.isin(days, [s.day for s in surveys]).astype(np.int64)
        mask.setflags(write=False)
        object.__setattr__(self, "_survey_mask", mask)

    def __len__(self) -> int:
        return len(self.days)

    @property
    def is_consecutive(self) -> bool:
        return len(self.days) < 2 or bool(np.all(np.diff(self.days) == 1))

    def require_consecutive(self) -> None:
        if not self.is_consecutive:
            raise ValueError(f"participant {self.participant_id}: day indices are not consecutive")

    @property
    def survey_administered(self) -> np.ndarray:
        """0/1 per day: a survey (and its e-mail prompt) arrived that day."""
        return self._survey_mask

    @property
    def reminder_events(self) -> np.ndarray:
        """Everything that prompted the participant: reminders proper plus survey e-mails."""
        return np.maximum(self.reminder, self._survey_mask)

    @property
    def accessibility_reminders(self) -> np.ndarray:
        """Rem input to the accessibility update: reminders, survey e-mails and lab sessions."""
        return np.maximum(self.reminder_events, self.lab)

    def baseline_srbai(self) -> float | None:
        """Most recent SRBAI answered before the first observed day, if any."""
        if len(self.days) == 0:
            return None
        before = [s for s in self.surveys if s.day < self.days[0] and not math.isnan(s.srbai)]
        return before[-1].srbai if before else None

    def replace(self, **changes) -> ParticipantSeries:
        kwargs = {
            "participant_id": self.participant_id,
            "days": self.days,
            "behavior": self.behavior,
            "reminder": self.reminder,
            "lab": self.lab,
            "surveys": self.surveys,
            "initial_behavior_rate": self.initial_behavior_rate,
        }
        kwargs.update(changes)
        return ParticipantSeries(**kwargs)


def scale_srbai(value: float) -> float:
    """Map the 1-7 automaticity scale onto [0, 1]."""
    lo, hi = SURVEY_SCALE
    return (value - lo) / (hi - lo)
