"""Logistic regression and decision-threshold selection.

The learner minimises the mean negative log-likelihood plus
``0.5 * l2_penalty * ||w||^2`` (the intercept is not penalised) with damped
Newton iterations starting from all-zero weights, so fits are deterministic.
Features are z-scored with statistics of the training rows only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from habitflow.features import FeatureMatrix
from habitflow.metrics import _validate, mcc_from_counts


class ConvergenceError(RuntimeError):
    def __init__(self, grad_norm: float, n_iter: int):
        super().__init__(f"no convergence after {n_iter} iterations (gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm
        self.n_iter = n_iter


@dataclass(frozen=True)
class LearnerConfig:
    max_iterations: int = 500
    convergence_tol: float = 1e-8
    l2_penalty: float = 1e-6
    standardize: bool = True

    def __post_init__(self):
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class FittedModel:
    feature_names: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    means: np.ndarray
    stds: np.ndarray
    n_iter: int = 0
    loss_history: tuple[float, ...] = field(default=(), repr=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} features, got shape {X.shape}")
        return self.intercept + ((X - self.means) / self.stds) @ self.weights

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


class Learner(Protocol):
    """Anything that turns a training matrix into a model with ``predict_proba``."""

    def fit(self, X: np.ndarray, y: np.ndarray, feature_names: Sequence[str]): ...


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)))


def penalized_loss(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean negative log-likelihood plus ridge term; ``theta = [intercept, *weights]``."""
    z = theta[0] + Z @ theta[1:]
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * theta[1:] @ theta[1:])


def penalized_gradient(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    residual = sigmoid(theta[0] + Z @ theta[1:]) - y
    n = len(y)
    return np.concatenate([[residual.sum() / n], Z.T @ residual / n + l2 * theta[1:]])


def _hessian(theta, Z, y, l2):
    p = sigmoid(theta[0] + Z @ theta[1:])
    A = np.column_stack([np.ones(len(y)), Z])
    H = (A * (p * (1 - p))[:, None]).T @ A / len(y)
    H[1:, 1:] += l2 * np.eye(Z.shape[1])
    return H


def _standardization(X: np.ndarray, enabled: bool) -> tuple[np.ndarray, np.ndarray]:
    if not enabled:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    return means, np.where(stds > 0, stds, 1.0)


def fit_arrays(X, y, feature_names: Sequence[str], cfg: LearnerConfig = LearnerConfig()) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != len(feature_names):
        raise ValueError("X, y and feature_names are not aligned")
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    if np.isnan(X).any():
        raise ValueError("features contain missing values")
    if np.all(y == y[0]):
        raise ValueError("training labels contain a single class")

    means, stds = _standardization(X, cfg.standardize)
    Z = (X - means) / stds
    l2 = cfg.l2_penalty
    theta = np.zeros(X.shape[1] + 1)
    loss = penalized_loss(theta, Z, y, l2)
    history = [loss]
    grad = penalized_gradient(theta, Z, y, l2)
    n_iter = 0
    while np.linalg.norm(grad) > cfg.convergence_tol:
        if n_iter >= cfg.max_iterations:
            raise ConvergenceError(float(np.linalg.norm(grad)), n_iter)
        H = _hessian(theta, Z, y, l2)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        t = 1.0
        for _ in range(60):
            candidate = theta + t * step
            new_loss = penalized_loss(candidate, Z, y, l2)
            if new_loss <= loss + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no decrease representable in floating point: at the optimum to machine precision
            n_iter += 1
            break
        theta, loss = candidate, new_loss
        history.append(loss)
        grad = penalized_gradient(theta, Z, y, l2)
        n_iter += 1
    return FittedModel(
        feature_names=tuple(feature_names),
        weights=theta[1:].copy(),
        intercept=float(theta[0]),
        means=means,
        stds=stds,
        n_iter=n_iter,
        loss_history=tuple(history),
    )


def fit(matrix: FeatureMatrix, cfg: LearnerConfig = LearnerConfig()) -> FittedModel:
    return fit_arrays(matrix.X, matrix.labels, matrix.feature_names, cfg)


def predict_proba(model: FittedModel, features) -> float:
    """Probability of the positive class for a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (len(model.weights),):
        raise ValueError(f"expected {len(model.weights)} features, got shape {x.shape}")
    return float(model.predict_proba(x[None, :])[0])


class LogisticRegression:
    def __init__(self, cfg: LearnerConfig = LearnerConfig()):
        self.cfg = cfg

    def fit(self, X, y, feature_names: Sequence[str]) -> FittedModel:
        return fit_arrays(X, y, feature_names, self.cfg)


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    criterion: str = "max_mcc"
    score: float = 0.0


def threshold_candidates(probs) -> np.ndarray:
    """0 (everything positive) followed by midpoints between consecutive distinct scores."""
    unique = np.unique(np.asarray(probs, dtype=np.float64))
    return np.r_[0.0, (unique[:-1] + unique[1:]) / 2.0]


def choose_threshold(probs, labels) -> ThresholdChoice:
    """Candidate threshold with the largest MCC; ties go to the lowest threshold."""
    probs, labels = _validate(probs, labels)
    candidates = threshold_candidates(probs)
    pos = np.sort(probs[labels == 1])
    neg = np.sort(probs[labels == 0])
    tp = len(pos) - np.searchsorted(pos, candidates, side="left")
    fp = len(neg) - np.searchsorted(neg, candidates, side="left")
    fn = len(pos) - tp
    tn = len(neg) - fp
    scores = mcc_from_counts(tp, fp, tn, fn)
    best = int(np.argmax(scores))
    return ThresholdChoice(float(candidates[best]), "max_mcc", float(scores[best]))


def dump_model(model: FittedModel) -> str:
    """Flat text: one ``name<TAB>mean<TAB>std<TAB>weight`` line per feature, then the intercept."""
    lines = ["feature\tmean\tstd\tweight"]
    for name, mean, std, weight in zip(model.feature_names, model.means, model.stds, model.weights):
        lines.append(f"{name}\t{float(mean)!r}\t{float(std)!r}\t{float(weight)!r}")
    lines.append(f"intercept\t{model.intercept!r}")
    return "\n".join(lines) + "\n"


def load_model(text: str) -> FittedModel:
    names, means, stds, weights = [], [], [], []
    intercept = None
    for line in text.splitlines():
        if not line.strip() or line.startswith("feature\t"):
            continue
        parts = line.split("\t")
        if parts[0] == "intercept" and len(parts) == 2:
            intercept = float(parts[1])
        elif len(parts) == 4:
            names.append(parts[0])
            means.append(float(parts[1]))
            stds.append(float(parts[2]))
            weights.append(float(parts[3]))
        else:
            raise ValueError(f"malformed model line: {line!r}")
    if intercept is None:
        raise ValueError("model text has no intercept line")
    return FittedModel(tuple(names), np.array(weights), intercept, np.array(means), np.array(stds))
