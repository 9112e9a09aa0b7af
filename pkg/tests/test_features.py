import math

import numpy as np
import pytest
from conftest import make_series
from hypothesis import given, settings
from hypothesis import strategies as st

from habitflow.dynamics import CognitiveParams, trajectory
from habitflow.features import (
    COMBINED_NAMES,
    MODEL_TYPES,
    CohortFeaturizer,
    FeatureMatrix,
    build_combined_features,
    build_features,
    build_past_behavior_features,
    build_survey_features,
    build_theory_features,
    past_rates,
)
from habitflow.series import ParticipantSeries, Survey

P = CognitiveParams(0.175, 0.15, adp=0.3, agp_beh=0.3, agp_rem=0.5)


# ---------------------------------------------------------------- series


def test_series_validation():
    with pytest.raises(ValueError):
        make_series([0, 2])
    with pytest.raises(ValueError):
        make_series([1, 0], reminder=[0, 3])
    with pytest.raises(ValueError):
        ParticipantSeries("p", [2, 1], [1.0, 1.0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        make_series([1], surveys=[Survey(0, srbai=3), Survey(0, srbai=4)])
    with pytest.raises(ValueError):
        Survey(1, srbai=8)


def test_series_reminder_definitions():
    s = make_series([1, 1, 1, 1], reminder=[1, 0, 0, 0], lab=[0, 0, 1, 0], surveys=[Survey(2, srbai=3)])
    assert s.reminder_events.tolist() == [1, 1, 0, 0]
    assert s.accessibility_reminders.tolist() == [1, 1, 1, 0]


# ---------------------------------------------------------------- builders


def test_survey_forward_fill():
    s = make_series(np.ones(12), surveys=[Survey(0, 5, 4, 2), Survey(7, 6, 3, 7)])
    m = build_survey_features(s)
    srbai = dict(zip(m.predict_days.tolist(), m.column("srbai")))
    assert all(srbai[d] == 2 for d in range(1, 8))
    assert all(srbai[d] == 7 for d in range(8, 13))


def test_survey_items_fill_independently():
    s = make_series(np.ones(4), surveys=[Survey(0, 5, 4, 2), Survey(2, instrumental=7)])
    m = build_survey_features(s)
    assert m.column("instrumental").tolist() == [5, 5, 7, 7]
    assert m.column("srbai").tolist() == [2, 2, 2, 2]


def test_survey_without_answers_is_empty():
    assert len(build_survey_features(make_series(np.ones(5)))) == 0


def test_past_rate_examples():
    assert past_rates(make_series(np.ones(11)))[10] == 1.0
    assert past_rates(make_series([1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0]))[10] == pytest.approx(0.8)
    assert past_rates(make_series([1, 0]))[0] == 0.0
    assert past_rates(make_series([1, 0], rate=4 / 7))[0] == pytest.approx(4 / 7)
    assert past_rates(make_series([1, np.nan, 0, 1])).tolist() == [0.0, 1.0, 1.0, 0.5]


def test_occurrence_features_use_past_days_only():
    s = make_series(np.ones(6), reminder=[0, 0, 1, 0, 0, 0], lab=[1, 0, 0, 0, 0, 0])
    m = build_past_behavior_features(s)
    assert m.column("reminder_today").tolist() == [0, 0, 0, 1, 0, 0]
    assert m.column("reminder_recent").tolist() == [0, 0, 0, 1, 1, 1]
    assert m.column("lab_today").tolist() == [0, 1, 0, 0, 0, 0]
    assert m.column("lab_recent").tolist() == [0, 1, 1, 1, 0, 0]


def test_theory_features_shift_trajectory_by_one_day():
    beh = [1, 0, np.nan, 1, 1, 0]
    s = make_series(beh, reminder=[1, 0, 1, 0, 0, 0], surveys=[Survey(0, srbai=4)])
    states = trajectory(s, P, 0.5)
    m = build_theory_features(s, P)
    observed = [i for i, b in enumerate(beh) if not math.isnan(b)]
    assert m.column("hs").tolist() == [states[i].hs for i in observed]
    assert m.column("acc").tolist() == [states[i].acc for i in observed]
    assert m.predict_days.tolist() == [i + 1 for i in observed]


def test_theory_hs_decays_when_nothing_brushed():
    s = make_series(np.zeros(8), surveys=[Survey(0, srbai=7)])
    hs = build_theory_features(s, CognitiveParams(0.2, 0.4)).column("hs")
    assert np.allclose(hs, 0.8 ** np.arange(8), atol=1e-12, rtol=0)


def test_combined_is_union_of_constituents():
    s = make_series([1, 0, 1, np.nan, 1], reminder=[1, 1, 0, 0, 0], surveys=[Survey(0, srbai=3)])
    c = build_combined_features(s, P)
    past, theory = build_past_behavior_features(s), build_theory_features(s, P)
    assert c.feature_names == COMBINED_NAMES and len(set(COMBINED_NAMES)) == len(COMBINED_NAMES)
    assert len(c) == len(past) == len(theory)
    assert np.array_equal(c.X, np.hstack([past.X, theory.X]))


def test_labels_code_non_brushing_as_positive():
    s = make_series([1, 0, np.nan, 0])
    m = build_past_behavior_features(s)
    assert m.labels.tolist() == [0, 1, 1]
    assert m.predict_days.tolist() == [1, 2, 4]


def test_all_builders_share_observations_when_baseline_exists(small_cohort):
    keys = {t: build_features(small_cohort.series, t, P).keys() for t in MODEL_TYPES}
    assert keys["survey"] == keys["past_behavior"] == keys["theory"] == keys["combined"]


def test_positive_fraction_matches_behavior_rate(small_cohort):
    m = build_features(small_cohort.series, "past_behavior")
    beh = np.concatenate([s.behavior for s in small_cohort.series])
    assert m.labels.mean() == pytest.approx(1 - np.nanmean(beh), abs=1e-12)


def test_parametric_types_need_params():
    with pytest.raises(ValueError):
        build_features([make_series([1])], "theory")
    with pytest.raises(ValueError):
        build_features([make_series([1])], "habit")


def test_feature_matrix_rejects_nan():
    with pytest.raises(ValueError):
        FeatureMatrix("theory", ("hs", "acc"), np.array([[np.nan, 1.0]]), ["p"], [1], [0])


@pytest.mark.parametrize("model_type", MODEL_TYPES)
def test_featurizer_matches_build_features(small_cohort, model_type):
    ref = build_features(small_cohort.series, model_type, P)
    got = CohortFeaturizer(small_cohort.series, model_type).matrix(P)
    assert got.keys() == ref.keys()
    assert np.array_equal(got.X, ref.X)
    assert np.array_equal(got.labels, ref.labels)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.sampled_from(MODEL_TYPES))
def test_future_mutation_never_changes_past_features(seed, n, model_type):
    r = np.random.default_rng(seed)
    beh = np.where(r.random(n) < 0.1, np.nan, r.integers(0, 2, n).astype(float))
    rem, lab = r.integers(0, 2, n), r.integers(0, 2, n)
    surveys = [Survey(0, 4, 4, 4), Survey(int(r.integers(1, n + 1)), 2, 6, 6)]
    s = make_series(beh, rem, lab, surveys)
    cut = int(r.integers(1, n))  # mutate everything from day cut+1 onwards
    mb = beh.copy()
    mb[cut:] = np.where(r.random(n - cut) < 0.3, np.nan, r.integers(0, 2, n - cut))
    mrem, mlab = rem.copy(), lab.copy()
    mrem[cut:] = r.integers(0, 2, n - cut)
    mlab[cut:] = r.integers(0, 2, n - cut)
    msurveys = [sv for sv in surveys if sv.day <= cut] + [Survey(cut + 1, 7, 1, 1)]
    mutated = make_series(mb, mrem, mlab, msurveys)
    a = build_features([s], model_type, P)
    b = build_features([mutated], model_type, P)
    # every prediction day up to cut+1 depends only on days <= cut
    for key, row in zip(a.keys(), a.X):
        if key[1] <= cut + 1 and key in b.keys():
            assert b.X[b.keys().index(key)].tolist() == row.tolist()
