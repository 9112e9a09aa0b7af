"""Feature sets for one-step-ahead behavior prediction.

Every observation predicts day ``d`` from information available through day
``d - 1``. The label codes *non-performance* as the positive class:
``label = 1 - behavior[d]``; days with missing behavior yield no observation.

Four feature sets are built:

========== ===========================================================
survey     forward-filled weekly survey answers + occurrence flags
past       running behavior rate + occurrence flags
theory     computed habit strength and accessibility
combined   past-behavior columns followed by the theory columns
========== ===========================================================

Occurrence flags encode reminders (including survey e-mails) and lab sessions
as "happened on the last observed day" and "happened within the last
:data:`RECENT_WINDOW` days". Reminders falling on the predicted day are never
used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from habitflow.dynamics import CognitiveParams, batch_trajectory, initial_hs_for, trajectory
from habitflow.series import ParticipantSeries

MODEL_TYPES = ("survey", "past_behavior", "theory", "combined")
PARAMETRIC_MODEL_TYPES = ("theory", "combined")
RECENT_WINDOW = 3

OCCURRENCE_NAMES = ("lab_today", "lab_recent", "reminder_today", "reminder_recent")
SURVEY_NAMES = ("instrumental", "affective", "srbai") + OCCURRENCE_NAMES
PAST_BEHAVIOR_NAMES = ("past_rate",) + OCCURRENCE_NAMES
THEORY_NAMES = ("hs", "acc")
COMBINED_NAMES = PAST_BEHAVIOR_NAMES + THEORY_NAMES

FEATURE_NAMES = {
    "survey": SURVEY_NAMES,
    "past_behavior": PAST_BEHAVIOR_NAMES,
    "theory": THEORY_NAMES,
    "combined": COMBINED_NAMES,
}


@dataclass(frozen=True)
class Observation:
    participant_id: str
    predict_day: int
    label: int
    features: dict[str, float]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Column-oriented observations sharing one ordered list of feature names."""

    model_type: str
    feature_names: tuple[str, ...]
    X: np.ndarray
    participant_ids: np.ndarray
    predict_days: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.feature_names))
        n = X.shape[0]
        pids = np.asarray(self.participant_ids, dtype=object).reshape(n)
        days = np.asarray(self.predict_days, dtype=np.int64).reshape(n)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(n)
        if np.isnan(X).any():
            raise ValueError("feature matrix contains missing values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "participant_ids", pids)
        object.__setattr__(self, "predict_days", days)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def keys(self) -> list[tuple[str, int]]:
        return list(zip(self.participant_ids.tolist(), self.predict_days.tolist()))

    def observations(self) -> list[Observation]:
        return [
            Observation(pid, int(day), int(label), dict(zip(self.feature_names, row.tolist())))
            for pid, day, label, row in zip(self.participant_ids, self.predict_days, self.labels, self.X)
        ]

    def subset(self, mask: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(
            self.model_type,
            self.feature_names,
            self.X[mask],
            self.participant_ids[mask],
            self.predict_days[mask],
            self.labels[mask],
        )

    def with_X(self, X: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(
            self.model_type, self.feature_names, X, self.participant_ids, self.predict_days, self.labels
        )

    @classmethod
    def empty(cls, model_type: str) -> FeatureMatrix:
        names = FEATURE_NAMES[model_type]
        return cls(model_type, names, np.empty((0, len(names))), [], [], [])

    @classmethod
    def concat(cls, matrices: Sequence[FeatureMatrix], model_type: str | None = None) -> FeatureMatrix:
        if not matrices:
            if model_type is None:
                raise ValueError("cannot concatenate zero matrices without a model_type")
            return cls.empty(model_type)
        names = matrices[0].feature_names
        if any(m.feature_names != names for m in matrices):
            raise ValueError("feature names differ between matrices")
        return cls(
            matrices[0].model_type,
            names,
            np.vstack([m.X for m in matrices]),
            np.concatenate([m.participant_ids for m in matrices]),
            np.concatenate([m.predict_days for m in matrices]),
            np.concatenate([m.labels for m in matrices]),
        )


def _labelled_positions(series: ParticipantSeries) -> np.ndarray:
    return np.flatnonzero(~np.isnan(series.behavior))


def _occurrence(flags: np.ndarray, pos: int) -> tuple[float, float]:
    if pos == 0:
        return 0.0, 0.0
    return float(flags[pos - 1]), float(flags[max(0, pos - RECENT_WINDOW) : pos].max())


def _occurrence_row(series: ParticipantSeries, pos: int) -> list[float]:
    return [*_occurrence(series.lab, pos), *_occurrence(series.reminder_events, pos)]


def _matrix(model_type, series, rows, positions, names=None) -> FeatureMatrix:
    names = names or FEATURE_NAMES[model_type]
    positions = np.asarray(positions, dtype=np.int64)
    return FeatureMatrix(
        model_type,
        names,
        np.asarray(rows, dtype=np.float64).reshape(len(positions), len(names)),
        [series.participant_id] * len(positions),
        series.days[positions] if len(positions) else [],
        (1 - series.behavior[positions]).astype(np.int64) if len(positions) else [],
    )


def build_survey_features(series: ParticipantSeries) -> FeatureMatrix:
    """Survey answers carried forward from the most recent survey dated before each prediction day.

    Each item is forward-filled independently. Observations for which some item
    has not been answered yet are dropped.
    """
    series.require_consecutive()
    rows, positions = [], []
    for pos in _labelled_positions(series):
        last_known = series.days[pos] - 1
        values = []
        for item in ("instrumental", "affective", "srbai"):
            answered = [
                getattr(s, item)
                for s in series.surveys
                if s.day <= last_known and not math.isnan(getattr(s, item))
            ]
            values.append(answered[-1] if answered else math.nan)
        if any(math.isnan(v) for v in values):
            continue
        rows.append(values + _occurrence_row(series, pos))
        positions.append(pos)
    return _matrix("survey", series, rows, positions)


def past_rates(series: ParticipantSeries) -> np.ndarray:
    """Past behavior rate attached to every day of the series.

    Entry ``i`` is the mean of the non-missing behavior strictly before day
    ``i``; with no such history it is ``series.initial_behavior_rate``.
    """
    observed = ~np.isnan(series.behavior)
    counts = np.concatenate([[0], np.cumsum(observed)])[:-1]
    sums = np.concatenate([[0.0], np.cumsum(np.where(observed, series.behavior, 0.0))])[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = sums / counts
    return np.where(counts > 0, rates, series.initial_behavior_rate)


def build_past_behavior_features(series: ParticipantSeries) -> FeatureMatrix:
    series.require_consecutive()
    rates = past_rates(series)
    positions = _labelled_positions(series)
    rows = [[rates[pos], *_occurrence_row(series, pos)] for pos in positions]
    return _matrix("past_behavior", series, rows, positions)


def build_theory_features(series: ParticipantSeries, params: CognitiveParams) -> FeatureMatrix:
    """Computed (hs, acc) entering each prediction day.

    hs0 comes from the baseline SRBAI (0 without one) and acc0 is 1.
    """
    if len(series) == 0:
        return FeatureMatrix.empty("theory")
    states = trajectory(series, params, initial_hs_for(series), 1.0)
    positions = _labelled_positions(series)
    rows = [[states[pos].hs, states[pos].acc] for pos in positions]
    return _matrix("theory", series, rows, positions)


def build_combined_features(series: ParticipantSeries, params: CognitiveParams) -> FeatureMatrix:
    past = build_past_behavior_features(series)
    theory = build_theory_features(series, params)
    return FeatureMatrix(
        "combined",
        COMBINED_NAMES,
        np.hstack([past.X, theory.X]),
        past.participant_ids,
        past.predict_days,
        past.labels,
    )


def build_features(
    cohort: Sequence[ParticipantSeries],
    model_type: str,
    params: CognitiveParams | None = None,
) -> FeatureMatrix:
    """Stack one feature set over a cohort, participants in the given order."""
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}; expected one of {MODEL_TYPES}")
    if model_type in PARAMETRIC_MODEL_TYPES and params is None:
        raise ValueError(f"{model_type} features need CognitiveParams")
    builders = {
        "survey": build_survey_features,
        "past_behavior": build_past_behavior_features,
        "theory": lambda s: build_theory_features(s, params),
        "combined": lambda s: build_combined_features(s, params),
    }
    return FeatureMatrix.concat([builders[model_type](s) for s in cohort], model_type)


class CohortFeaturizer:
    """Builds one feature set for a fixed cohort, repeatedly and cheaply.

    Parameter-free feature sets are built once. For the theory and combined
    sets the cohort is padded into (participants, days) arrays so that each new
    parameter draw costs a single vectorised trajectory. Row order matches
    :func:`build_features`.
    """

    def __init__(self, cohort: Sequence[ParticipantSeries], model_type: str):
        if model_type not in MODEL_TYPES:
            raise ValueError(f"unknown model type {model_type!r}; expected one of {MODEL_TYPES}")
        self.model_type = model_type
        self.cohort = tuple(cohort)
        self.parametric = model_type in PARAMETRIC_MODEL_TYPES
        if not self.parametric:
            self._static = build_features(self.cohort, model_type)
            return
        for s in self.cohort:
            s.require_consecutive()
        self._static = build_features(self.cohort, "past_behavior")
        n_days = max((len(s) for s in self.cohort), default=0)
        self._behavior = np.full((len(self.cohort), n_days), np.nan)
        self._reminders = np.zeros((len(self.cohort), n_days))
        rows_p, rows_t = [], []
        for i, s in enumerate(self.cohort):
            self._behavior[i, : len(s)] = s.behavior
            self._reminders[i, : len(s)] = s.accessibility_reminders
            pos = _labelled_positions(s)
            rows_p.append(np.full(len(pos), i))
            rows_t.append(pos)
        self._rows_p = np.concatenate(rows_p) if rows_p else np.empty(0, dtype=np.int64)
        self._rows_t = np.concatenate(rows_t) if rows_t else np.empty(0, dtype=np.int64)
        self._hs0 = np.array([initial_hs_for(s) for s in self.cohort])

    @property
    def participant_ids(self) -> np.ndarray:
        return self._static.participant_ids

    @property
    def labels(self) -> np.ndarray:
        return self._static.labels

    def theory_columns(self, params: CognitiveParams) -> np.ndarray:
        hs, acc = batch_trajectory(self._behavior, self._reminders, params, self._hs0, 1.0)
        return np.column_stack([hs[self._rows_p, self._rows_t], acc[self._rows_p, self._rows_t]])

    def matrix(self, params: CognitiveParams | None = None) -> FeatureMatrix:
        if not self.parametric:
            return self._static
        if params is None:
            raise ValueError(f"{self.model_type} features need CognitiveParams")
        theory = self.theory_columns(params)
        if self.model_type == "theory":
            X, names = theory, THEORY_NAMES
        else:
            X, names = np.hstack([self._static.X, theory]), COMBINED_NAMES
        return FeatureMatrix(
            self.model_type,
            names,
            X,
            self._static.participant_ids,
            self._static.predict_days,
            self._static.labels,
        )
