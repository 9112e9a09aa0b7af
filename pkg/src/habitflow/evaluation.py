"""Participant-grouped nested cross-validation with random-search tuning.

Outer loop: each fold of participants is held out once for testing. Inner
loop: within the remaining ``k - 1`` folds, one fold (by default the next one
round-robin; optionally every one) is held out to score candidate
:class:`CognitiveParams` by validation AUC. The best draw is then refit on all
``k - 1`` training folds and applied to the test fold. The decision threshold
comes from the inner validation predictions, never from test rows.

Every random draw descends from ``SearchSpec.seed``: outer round ``f`` uses
the stream ``default_rng([seed, f])``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from habitflow.dynamics import PARAM_NAMES, CognitiveParams
from habitflow.features import MODEL_TYPES, CohortFeaturizer, FeatureMatrix
from habitflow.learning import (
    ConvergenceError,
    FittedModel,
    LearnerConfig,
    LogisticRegression,
    choose_threshold,
)
from habitflow.metrics import METRIC_NAMES, ThresholdMetrics, compute_auc, confusion_metrics, roc_curve
from habitflow.series import ParticipantSeries

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("model_type", "fold", "n_obs", "n_pos", "auc") + METRIC_NAMES + ("threshold",)
LANDSCAPE_COLUMNS = ("model_type", "fold", "step") + PARAM_NAMES + ("inner_auc",)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def members(self, fold: int) -> tuple[str, ...]:
        return tuple(sorted(p for p, f in self.assignment.items() if f == fold))

    def sizes(self) -> list[int]:
        return [len(self.members(f)) for f in range(self.k)]

    def fold_of(self, participant_ids) -> np.ndarray:
        return np.array([self.assignment.get(p, -1) for p in participant_ids], dtype=np.int64)


def make_folds(participants: Sequence[str], k: int, seed: int) -> FoldPlan:
    """Seeded shuffle of the (sorted, de-duplicated) ids, then round-robin into ``k`` folds."""
    ids = sorted(set(participants))
    if k < 2:
        raise ValueError("k must be at least 2 so that a fold can be held out")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds the number of participants ({len(ids)})")
    order = np.random.default_rng(seed).permutation(len(ids))
    return FoldPlan(k, {ids[j]: i % k for i, j in enumerate(order)}, seed)


@dataclass(frozen=True)
class SearchSpec:
    n_steps: int = 1000
    seed: int = 0
    inner_rotation: str = "single"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.inner_rotation not in ("single", "full"):
            raise ValueError("inner_rotation must be 'single' or 'full'")

    def draws(self, stream: int = 0) -> np.ndarray:
        """(n_steps, 5) uniform draws on [0, 1), one column per parameter."""
        rng = np.random.default_rng([self.seed, stream])
        return rng.uniform(0.0, 1.0, size=(self.n_steps, len(PARAM_NAMES)))


Split = tuple[tuple[str, ...], tuple[str, ...]]


def _split_masks(row_pids: np.ndarray, splits: Sequence[Split]):
    return [(np.isin(row_pids, fit_ids), np.isin(row_pids, val_ids)) for fit_ids, val_ids in splits]


def validation_predictions(matrix: FeatureMatrix, masks, learner) -> tuple[np.ndarray, np.ndarray]:
    """Pooled held-out probabilities and labels over the given (fit, validate) row masks."""
    probs, labels = [], []
    for fit_mask, val_mask in masks:
        model = learner.fit(matrix.X[fit_mask], matrix.labels[fit_mask], matrix.feature_names)
        probs.append(model.predict_proba(matrix.X[val_mask]))
        labels.append(matrix.labels[val_mask])
    return np.concatenate(probs), np.concatenate(labels)


def _safe_auc(probs, labels) -> float:
    if labels.size == 0 or labels.min() == labels.max():
        return math.nan
    return compute_auc(probs, labels)


def inner_auc(
    featurizer: CohortFeaturizer,
    splits: Sequence[Split],
    params: CognitiveParams | None,
    learner_cfg: LearnerConfig = LearnerConfig(),
) -> float:
    """Validation AUC of one parameter setting on participant-level splits; NaN if undefined."""
    matrix = featurizer.matrix(params)
    masks = _split_masks(matrix.participant_ids, splits)
    try:
        return _safe_auc(*validation_predictions(matrix, masks, LogisticRegression(learner_cfg)))
    except (ConvergenceError, ValueError):
        return math.nan


@dataclass(frozen=True)
class LandscapeRow:
    model_type: str
    fold: str
    step: int
    params: CognitiveParams
    inner_auc: float


@dataclass
class LandscapeReport:
    rows: list[LandscapeRow] = field(default_factory=list)

    def extend(self, other: LandscapeReport) -> None:
        self.rows.extend(other.rows)

    def arrays(self, fold: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.rows if fold is None or r.fold == fold]
        return np.array([r.params.as_tuple() for r in rows]).reshape(-1, 5), np.array([r.inner_auc for r in rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LANDSCAPE_COLUMNS)
        for r in self.rows:
            writer.writerow([r.model_type, r.fold, r.step, *map(_fmt, r.params.as_tuple()), _fmt(r.inner_auc)])
        return buf.getvalue()


def random_search(
    featurizer: CohortFeaturizer,
    splits: Sequence[Split],
    draws: np.ndarray,
    learner_cfg: LearnerConfig,
    fold_label: str,
) -> tuple[CognitiveParams, float, LandscapeReport]:
    """Score every draw by validation AUC; the first draw attaining the maximum wins."""
    learner = LogisticRegression(learner_cfg)
    landscape = LandscapeReport()
    masks = None
    best, best_auc = None, -math.inf
    for step, values in enumerate(draws):
        params = CognitiveParams.from_sequence(values)
        matrix = featurizer.matrix(params)
        if masks is None:
            masks = _split_masks(matrix.participant_ids, splits)
        try:
            auc = _safe_auc(*validation_predictions(matrix, masks, learner))
        except ConvergenceError as exc:
            log.warning("draw %d in fold %s did not converge: %s", step, fold_label, exc)
            auc = math.nan
        landscape.rows.append(LandscapeRow(featurizer.model_type, fold_label, step, params, auc))
        if auc > best_auc:
            best, best_auc = params, auc
    if best is None:
        raise RuntimeError(f"fold {fold_label}: no parameter draw produced a defined validation AUC")
    return best, best_auc, landscape


@dataclass(frozen=True, eq=False)
class FoldResult:
    fold: str
    test_participants: tuple[str, ...]
    train_participants: tuple[str, ...]
    inner_splits: tuple[Split, ...]
    params: CognitiveParams | None
    inner_auc: float
    threshold: float
    model: FittedModel
    participant_ids: np.ndarray
    predict_days: np.ndarray
    probs: np.ndarray
    labels: np.ndarray

    @property
    def predicted(self) -> np.ndarray:
        return self.probs >= self.threshold

    @property
    def auc(self) -> float | None:
        value = _safe_auc(self.probs, self.labels)
        return None if math.isnan(value) else value

    @property
    def metrics(self) -> ThresholdMetrics | None:
        if self.labels.size == 0 or self.labels.min() == self.labels.max():
            return None
        return confusion_metrics(self.predicted, self.labels)


@dataclass(frozen=True)
class ReportRow:
    model_type: str
    fold: str
    n_obs: int
    n_pos: int
    auc: float | None
    metrics: ThresholdMetrics | None
    threshold: float

    def values(self) -> list[str]:
        metric_values = [getattr(self.metrics, m) if self.metrics else None for m in METRIC_NAMES]
        return [
            self.model_type,
            self.fold,
            str(self.n_obs),
            str(self.n_pos),
            _fmt(self.auc),
            *map(_fmt, metric_values),
            _fmt(self.threshold),
        ]


@dataclass(frozen=True, eq=False)
class EvalReport:
    model_type: str
    folds: tuple[FoldResult, ...]

    @property
    def probs(self) -> np.ndarray:
        return np.concatenate([f.probs for f in self.folds])

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([f.labels for f in self.folds])

    @property
    def auc(self) -> float:
        return compute_auc(self.probs, self.labels)

    @property
    def metrics(self) -> ThresholdMetrics:
        """Pooled confusion counts, each row thresholded by its own fold's threshold."""
        return confusion_metrics(np.concatenate([f.predicted for f in self.folds]), self.labels)

    @property
    def roc_points(self) -> tuple[np.ndarray, np.ndarray]:
        fpr, tpr, _ = roc_curve(self.probs, self.labels)
        return fpr, tpr

    @property
    def selected_params(self) -> list[CognitiveParams | None]:
        return [f.params for f in self.folds]

    def rows(self) -> list[ReportRow]:
        out = [
            ReportRow(
                self.model_type,
                f.fold,
                int(f.labels.size),
                int(f.labels.sum()),
                f.auc,
                f.metrics,
                f.threshold,
            )
            for f in self.folds
        ]
        labels = self.labels
        both = labels.size > 0 and labels.min() != labels.max()
        out.append(
            ReportRow(
                self.model_type,
                "pooled",
                int(labels.size),
                int(labels.sum()),
                self.auc if both else None,
                self.metrics if both else None,
                float(np.mean([f.threshold for f in self.folds])),
            )
        )
        return out


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for report in reports:
        for row in report.rows():
            writer.writerow(row.values())
    return buf.getvalue()


def roc_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("model_type", "fpr", "tpr"))
    for report in reports:
        for x, y in zip(*report.roc_points):
            writer.writerow((report.model_type, _fmt(x), _fmt(y)))
    return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def observed_participants(cohort: Sequence[ParticipantSeries]) -> list[str]:
    """Participants contributing at least one labelled day."""
    return [s.participant_id for s in cohort if np.any(~np.isnan(s.behavior))]


def _check_model_type(model_type: str) -> None:
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}; expected one of {MODEL_TYPES}")


def kfold_splits(plan: FoldPlan, folds: Sequence[int] | None = None, held_out: Sequence[int] = ()) -> tuple[Split, ...]:
    """Participant-level (fit, validate) splits holding out each fold in ``held_out`` in turn.

    ``folds`` restricts the pool (default: all folds of ``plan``).
    """
    pool = list(range(plan.k)) if folds is None else list(folds)
    return tuple(
        (tuple(p for h in pool if h != g for p in plan.members(h)), plan.members(g))
        for g in (held_out or pool)
    )


def tune(
    featurizer: CohortFeaturizer,
    splits: Sequence[Split],
    search: SearchSpec,
    stream: int,
    learner_cfg: LearnerConfig = LearnerConfig(),
    label: str = "",
) -> tuple[CognitiveParams | None, float, LandscapeReport, float]:
    """Best params (None for parameter-free sets), their validation AUC, the landscape and a threshold."""
    learner = LogisticRegression(learner_cfg)
    if featurizer.parametric:
        params, auc, landscape = random_search(featurizer, splits, search.draws(stream), learner_cfg, label)
    else:
        params, landscape = None, LandscapeReport()
        auc = math.nan
    matrix = featurizer.matrix(params)
    probs, labels = validation_predictions(matrix, _split_masks(matrix.participant_ids, splits), learner)
    if not featurizer.parametric:
        auc = _safe_auc(probs, labels)
    if labels.size and labels.min() != labels.max():
        threshold = choose_threshold(probs, labels).threshold
    else:
        threshold = 0.5
        log.warning("fold %s: validation rows hold one class, threshold defaults to 0.5", label)
    return params, auc, landscape, threshold


def nested_cv(
    dataset: Sequence[ParticipantSeries],
    model_type: str,
    k: int,
    search: SearchSpec = SearchSpec(),
    learner_cfg: LearnerConfig = LearnerConfig(),
    fold_seed: int | None = None,
    featurizer: CohortFeaturizer | None = None,
) -> tuple[EvalReport, LandscapeReport]:
    """Two-level grouped cross-validation of one feature set.

    Fold assignment depends only on the participants and ``fold_seed``
    (defaulting to ``search.seed``), so every model type sees the same folds.
    """
    _check_model_type(model_type)
    if k < 3:
        raise ValueError(f"nested cross-validation needs k >= 3 (one test fold, at least two inner folds); got k={k}")
    featurizer = featurizer or CohortFeaturizer(dataset, model_type)
    plan = make_folds(observed_participants(dataset), k, search.seed if fold_seed is None else fold_seed)
    learner = LogisticRegression(learner_cfg)
    landscape = LandscapeReport()
    folds = []
    for f in range(k):
        train_folds = [g for g in range(k) if g != f]
        tuning_folds = [train_folds[f % len(train_folds)]] if search.inner_rotation == "single" else train_folds
        splits = kfold_splits(plan, train_folds, tuning_folds)
        train_ids = tuple(sorted(p for g in train_folds for p in plan.members(g)))
        test_ids = plan.members(f)
        params, auc, fold_landscape, threshold = tune(featurizer, splits, search, f, learner_cfg, str(f))
        landscape.extend(fold_landscape)
        matrix = featurizer.matrix(params)
        train_mask = np.isin(matrix.participant_ids, train_ids)
        test_mask = np.isin(matrix.participant_ids, test_ids)
        model = learner.fit(matrix.X[train_mask], matrix.labels[train_mask], matrix.feature_names)
        folds.append(
            FoldResult(
                fold=str(f),
                test_participants=test_ids,
                train_participants=train_ids,
                inner_splits=splits,
                params=params,
                inner_auc=auc,
                threshold=threshold,
                model=model,
                participant_ids=matrix.participant_ids[test_mask],
                predict_days=matrix.predict_days[test_mask],
                probs=model.predict_proba(matrix.X[test_mask]),
                labels=matrix.labels[test_mask],
            )
        )
        log.debug("%s fold %d: params=%s inner_auc=%.4f", model_type, f, params, auc)
    return EvalReport(model_type, tuple(folds)), landscape


def cross_predict(
    train_dataset: Sequence[ParticipantSeries],
    test_dataset: Sequence[ParticipantSeries],
    model_type: str,
    k: int,
    search: SearchSpec = SearchSpec(),
    learner_cfg: LearnerConfig = LearnerConfig(),
    fold_seed: int | None = None,
) -> tuple[EvalReport, LandscapeReport]:
    """Tune by k-fold CV on the whole training cohort, fit once, predict the other cohort."""
    _check_model_type(model_type)
    train_ids = {s.participant_id for s in train_dataset}
    overlap = train_ids & {s.participant_id for s in test_dataset}
    if overlap:
        raise ValueError(f"training and test cohorts share participants: {sorted(overlap)[:5]}")
    featurizer = CohortFeaturizer(train_dataset, model_type)
    plan = make_folds(observed_participants(train_dataset), k, search.seed if fold_seed is None else fold_seed)
    splits = kfold_splits(plan)
    params, auc, landscape, threshold = tune(featurizer, splits, search, 0, learner_cfg, "cross")
    train_matrix = featurizer.matrix(params)
    model = LogisticRegression(learner_cfg).fit(train_matrix.X, train_matrix.labels, train_matrix.feature_names)
    test_matrix = CohortFeaturizer(test_dataset, model_type).matrix(params)
    result = FoldResult(
        fold="cross",
        test_participants=tuple(sorted({s.participant_id for s in test_dataset})),
        train_participants=tuple(sorted(train_ids)),
        inner_splits=splits,
        params=params,
        inner_auc=auc,
        threshold=threshold,
        model=model,
        participant_ids=test_matrix.participant_ids,
        predict_days=test_matrix.predict_days,
        probs=model.predict_proba(test_matrix.X),
        labels=test_matrix.labels,
    )
    return EvalReport(model_type, (result,)), landscape
