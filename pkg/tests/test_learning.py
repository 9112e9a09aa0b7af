import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from habitflow.learning import (
    ConvergenceError,
    FittedModel,
    LearnerConfig,
    choose_threshold,
    dump_model,
    fit_arrays,
    load_model,
    penalized_gradient,
    penalized_loss,
    predict_proba,
    sigmoid,
    threshold_candidates,
)
from habitflow.metrics import mcc_from_counts


def random_problem(seed, n=60, d=3):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, d)) * r.uniform(0.5, 5, d) + r.normal(size=d)
    w = r.normal(size=d)
    y = (r.random(n) < sigmoid(X @ w / 3)).astype(float)
    y[:2] = [0, 1]
    return X, y


def central_difference(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    X, y = random_problem(seed)
    r = np.random.default_rng(seed + 1)
    theta = r.normal(size=X.shape[1] + 1)
    Z = (X - X.mean(0)) / X.std(0)
    analytic = penalized_gradient(theta, Z, y, 0.1)
    numeric = central_difference(lambda t: penalized_loss(t, Z, y, 0.1), theta)
    assert np.linalg.norm(analytic - numeric) <= 1e-6 * max(1.0, np.linalg.norm(analytic))


def test_intercept_is_not_penalized():
    Z = np.zeros((4, 1))
    y = np.array([1.0, 1, 1, 0])
    g = penalized_gradient(np.array([0.0, 2.0]), Z, y, 1.0)
    assert g[1] == pytest.approx(2.0)
    assert g[0] == pytest.approx(0.5 - 0.75)


def test_intercept_only_recovers_log_odds():
    X = np.ones((40, 2))
    y = np.array([1.0] * 10 + [0.0] * 30)
    model = fit_arrays(X, y, ["a", "b"])
    assert np.allclose(model.weights, 0.0, atol=1e-12)
    assert abs(model.intercept - math.log(0.25 / 0.75)) <= 1e-6


def test_separable_pair_is_ordered():
    model = fit_arrays([[0.0], [1.0]], [0, 1], ["x"], LearnerConfig(l2_penalty=1e-2))
    p = model.predict_proba(np.array([[0.0], [1.0]]))
    assert p[1] > p[0]


def test_loss_history_non_increasing():
    X, y = random_problem(3)
    model = fit_arrays(X, y, ["a", "b", "c"])
    h = model.loss_history
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_fit_is_deterministic():
    X, y = random_problem(4)
    a = fit_arrays(X, y, ["a", "b", "c"])
    b = fit_arrays(X, y, ["a", "b", "c"])
    assert a.weights.tolist() == b.weights.tolist() and a.intercept == b.intercept


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_rescaling_a_column_keeps_ranking(seed, scale):
    X, y = random_problem(seed)
    base = fit_arrays(X, y, ["a", "b", "c"]).predict_proba(X)
    X2 = X.copy()
    X2[:, 1] *= scale
    scaled = fit_arrays(X2, y, ["a", "b", "c"]).predict_proba(X2)
    # standardization absorbs the scale, so the fitted probabilities (and their order) agree
    assert np.allclose(base, scaled, atol=1e-7)


def test_constant_column_gets_unit_std():
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    model = fit_arrays(X, [0, 0, 1, 0, 1, 1], ["c", "x"])
    assert model.stds[0] == 1.0


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_arrays([[1.0], [2.0]], [1, 1], ["x"])
    with pytest.raises(ValueError):
        fit_arrays([[1.0]], [1], ["x"])
    with pytest.raises(ValueError):
        fit_arrays([[np.nan], [1.0]], [0, 1], ["x"])
    with pytest.raises(ConvergenceError):
        fit_arrays(*random_problem(5), ["a", "b", "c"], LearnerConfig(max_iterations=1, convergence_tol=1e-15))


def test_predict_examples():
    zero = FittedModel(("a", "b"), np.zeros(2), 0.0, np.zeros(2), np.ones(2))
    assert predict_proba(zero, [3.0, -2.0]) == 0.5
    model = FittedModel(("a", "b"), np.array([0.5, -1.5]), 0.2, np.array([1.0, 2.0]), np.array([2.0, 0.5]))
    z = 0.2 + 0.5 * (3.0 - 1.0) / 2.0 - 1.5 * (1.0 - 2.0) / 0.5
    assert abs(predict_proba(model, [3.0, 1.0]) - 1 / (1 + math.exp(-z))) <= 1e-12
    probs = [predict_proba(FittedModel(("a",), np.zeros(1), b, np.zeros(1), np.ones(1)), [0.0]) for b in range(0, 40, 5)]
    assert all(b >= a for a, b in zip(probs, probs[1:])) and probs[-1] > 1 - 1e-15


def test_sigmoid_is_stable():
    assert sigmoid(np.array([-1000.0, 1000.0])).tolist() == [0.0, 1.0]


def test_model_text_round_trip():
    X, y = random_problem(6)
    model = fit_arrays(X, y, ["a", "b", "c"])
    back = load_model(dump_model(model))
    assert back.feature_names == model.feature_names
    assert back.predict_proba(X).tolist() == model.predict_proba(X).tolist()
    with pytest.raises(ValueError):
        load_model("feature\tmean\tstd\tweight\n")


def test_threshold_perfect_separation():
    choice = choose_threshold([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1])
    assert choice.score == 1.0
    assert 0.2 < choice.threshold < 0.7


def test_threshold_constant_probs_picks_lowest():
    choice = choose_threshold([0.4] * 6, [0, 1, 0, 1, 1, 0])
    assert choice.score == 0.0 and choice.threshold == 0.0


def brute_force_threshold(probs, labels):
    best = None
    for thr in threshold_candidates(probs):
        pred = probs >= thr
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = int(np.sum(~pred & (labels == 1)))
        tn = int(np.sum(~pred & (labels == 0)))
        score = float(mcc_from_counts(tp, fp, tn, fn))
        if best is None or score > best[1]:
            best = (thr, score)
    return best


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_threshold_matches_exhaustive_scan(seed):
    r = np.random.default_rng(seed)
    probs = r.random(20).round(2)
    labels = np.array([0, 1] + list(r.integers(0, 2, 18)))
    thr, score = brute_force_threshold(probs, labels)
    choice = choose_threshold(probs, labels)
    assert (choice.threshold, choice.score) == (thr, score)
