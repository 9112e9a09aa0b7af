import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from habitflow import config, io
from habitflow.cli import main
from habitflow.features import build_features
from habitflow.simulator import SimCohortSpec, simulate_cohort

GOLDEN = Path(__file__).parent / "data" / "golden"


def read(path):
    return Path(path).read_bytes()


# ---------------------------------------------------------------- config


def test_config_precedence(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("# comment\nk = 7\nseed = 3\nstudy_mode = study1\n")
    env = {"HABITFLOW_SEED": "5", "HABITFLOW_SEARCH_STEPS": "20"}
    run = config.resolve(path, {"seed": 9, "k": None}, env)
    assert (run["k"], run["seed"], run["search_steps"], run["study_mode"]) == (7, 9, 20, "study1")
    assert config.resolve(None, {}, {})["search_steps"] == 1000


def test_config_rejects_malformed_lines(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("k 7\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        config.resolve(path, {}, {})


def test_config_hash_is_order_free():
    assert config.config_hash({"a": 1, "b": 2}) == config.config_hash({"b": 2, "a": 1})


# ---------------------------------------------------------------- io


def test_dataset_round_trip(tmp_path):
    cohort = simulate_cohort(SimCohortSpec(n_participants=6, n_days=14, survey_days=(0, 7, 14), study_mode="study2"))
    import datetime as dt

    io.write_dataset(tmp_path, cohort.series, dt.date(2024, 1, 1))
    back = io.read_dataset(tmp_path, "study2")
    for a, b in zip(cohort.series, back):
        assert a.participant_id == b.participant_id
        assert np.array_equal(a.behavior, b.behavior, equal_nan=True)
        assert np.array_equal(a.reminder, b.reminder) and np.array_equal(a.lab, b.lab)
        assert a.surveys == b.surveys
        assert a.initial_behavior_rate == b.initial_behavior_rate
    assert all(s.initial_behavior_rate == 0.0 for s in io.read_dataset(tmp_path, "study1"))


def test_feature_matrix_round_trip(tmp_path):
    cohort = simulate_cohort(SimCohortSpec(n_participants=4, n_days=7, survey_days=(0, 7)))
    m = build_features(cohort.series, "past_behavior")
    io.write_feature_matrix_csv(tmp_path / "m.csv", m)
    back = io.read_feature_matrix_csv(tmp_path / "m.csv", "past_behavior")
    assert back.keys() == m.keys() and np.array_equal(back.X, m.X) and np.array_equal(back.labels, m.labels)


def test_trace_reader_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,x,y,z\n0,0,0,1\n")
    with pytest.raises(io.FormatError, match="t,x,y,z"):
        io.read_trace_csv(bad)


# ---------------------------------------------------------------- cli


def test_preprocess_golden_fixture(tmp_path):
    out = tmp_path / "outcomes.csv"
    rc = main(["preprocess", str(GOLDEN / "raw"), "--noise", str(GOLDEN / "noise_windows.csv"), "--out", str(out)])
    assert rc == 0
    assert read(out) == read(GOLDEN / "expected_outcomes.csv")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"]["outcomes.csv"] == io.sha256_file(out)
    assert len(manifest["inputs"]) == 2
    assert (tmp_path / "run_config.txt").exists()


def test_golden_fixture_regenerates_from_simulator(tmp_path):
    rc = main(["simulate", "--spec", str(GOLDEN / "spec.txt"), "--seed", "12", "--out", str(tmp_path)])
    assert rc == 0
    assert read(tmp_path / "raw" / "p001.csv") == read(GOLDEN / "raw" / "p001.csv")
    assert read(tmp_path / "noise_windows.csv") == read(GOLDEN / "noise_windows.csv")
    assert read(tmp_path / "outcomes.csv") == read(GOLDEN / "expected_outcomes.csv")


def test_preprocess_empty_dir_fails(tmp_path, capsys):
    (tmp_path / "raw").mkdir()
    assert main(["preprocess", str(tmp_path / "raw"), "--out", str(tmp_path / "o.csv")]) != 0
    assert "no trace CSVs" in capsys.readouterr().err


def test_preprocess_reports_bad_file(tmp_path, capsys):
    raw = tmp_path / "raw"
    shutil.copytree(GOLDEN / "raw", raw)
    (raw / "p999.csv").write_text("t,x,y,z\n")
    assert main(["preprocess", str(raw), "--out", str(tmp_path / "o.csv")]) == 1
    err = capsys.readouterr().err
    assert "p999.csv" in err and "1 of 2" in err
    assert not (tmp_path / "o.csv").exists()


def test_preprocess_one_trace_gives_one_participant(tmp_path):
    rc = main(["preprocess", str(GOLDEN / "raw"), "--out", str(tmp_path / "o.csv"), "--study-mode", "study1"])
    assert rc == 0
    rows = (tmp_path / "o.csv").read_text().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"p001"}
    assert len(rows) == 3


def test_simulate_default_and_determinism(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["simulate", "--out", str(tmp_path / "b"), "--seed", "1"]) == 0
    spec = config.parse_key_values((tmp_path / "a" / "sim_spec.txt").read_text())
    assert spec["n_participants"] == "75" and spec["n_days"] == "21"
    for name in ("outcomes.csv", "surveys.csv", "events.csv", "truth_days.csv", "manifest.json"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)


def test_simulate_truth_log_consistency(tmp_path):
    from habitflow.dynamics import CognitiveParams, trajectory

    assert main(["simulate", "--out", str(tmp_path), "--seed", "2"]) == 0
    series = io.read_dataset(tmp_path, "study1")
    params = CognitiveParams.from_sequence(
        float(line.split(",")[1]) for line in (tmp_path / "truth_params.csv").read_text().splitlines()[1:]
    )
    truth = {}
    for line in (tmp_path / "truth_days.csv").read_text().splitlines()[1:]:
        pid, day, beh, hs, acc, p = line.split(",")
        truth.setdefault(pid, []).append((float(beh), float(hs), float(acc)))
    for s in series:
        rows = truth[s.participant_id]
        restored = s.replace(behavior=np.array([r[0] for r in rows]))
        states = trajectory(restored, params, rows[0][1])
        assert [st.hs for st in states[:-1]] == [r[1] for r in rows]
        assert [st.acc for st in states[:-1]] == [r[2] for r in rows]


def test_simulate_rejects_unknown_keys(tmp_path, capsys):
    spec = tmp_path / "s.txt"
    spec.write_text("n_particpants = 3\n")
    assert main(["simulate", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "n_particpants" in capsys.readouterr().err


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    spec = root / "spec.txt"
    spec.write_text("n_participants = 12\nn_days = 14\n")
    assert main(["simulate", "--spec", str(spec), "--out", str(root / "a"), "--seed", "0"]) == 0
    spec.write_text("n_participants = 6\nn_days = 14\nid_prefix = q\nhdp = 0.05\nhgp = 0.3\n")
    assert main(["simulate", "--spec", str(spec), "--out", str(root / "b"), "--seed", "1"]) == 0
    return root


def test_evaluate_all_model_types_and_repeat(small_dataset, tmp_path):
    args = ["evaluate", str(small_dataset / "a"), "--k", "3", "--search-steps", "5", "--study-mode", "study1"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    report = (tmp_path / "r1" / "eval_report.csv").read_text().splitlines()
    assert {line.split(",")[0] for line in report[1:]} == {"survey", "past_behavior", "theory", "combined"}
    for name in ("eval_report.csv", "landscape.csv", "roc.csv", "run_config.txt", "manifest.json"):
        assert read(tmp_path / "r1" / name) == read(tmp_path / "r2" / name)
    landscape = (tmp_path / "r1" / "landscape.csv").read_text().splitlines()
    assert len(landscape) == 1 + 2 * 3 * 5


def test_evaluate_too_few_participants(small_dataset, tmp_path, capsys):
    rc = main(["evaluate", str(small_dataset / "a"), "--k", "20", "--out", str(tmp_path)])
    assert rc == 2
    assert "k=20" in capsys.readouterr().err


def test_cross_predict_cli(small_dataset, tmp_path, capsys):
    out = tmp_path / "cp"
    rc = main(["cross-predict", str(small_dataset / "a"), str(small_dataset / "b"), "--out", str(out),
               "--k", "3", "--search-steps", "5", "--model-types", "theory"])
    assert rc == 0
    rows = (out / "eval_report.csv").read_text().splitlines()
    assert [r.split(",")[1] for r in rows[1:]] == ["cross", "pooled"]
    rc = main(["cross-predict", str(small_dataset / "a"), str(small_dataset / "a"), "--out", str(tmp_path / "x")])
    assert rc == 2 and "share participants" in capsys.readouterr().err
    assert main(["report", str(out / "eval_report.csv")]) == 0
    assert "theory" in capsys.readouterr().out


def test_featurize_cli(small_dataset, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["featurize", str(small_dataset / "a"), "--model-type", "theory", "--params", "0.2,0.1", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "hs,acc,participant_id,predict_day,label"
    assert main(["featurize", str(small_dataset / "a"), "--model-type", "theory", "--out", str(out)]) == 2


def test_env_override_reaches_run_config(small_dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("HABITFLOW_SEARCH_STEPS", "3")
    rc = main(["evaluate", str(small_dataset / "a"), "--k", "3", "--model-types", "theory", "--out", str(tmp_path)])
    assert rc == 0
    assert "search_steps = 3" in (tmp_path / "run_config.txt").read_text()
