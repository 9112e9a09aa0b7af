"""``habitflow`` command line: simulate, preprocess, featurize, evaluate, cross-predict, report.

Every command writes its resolved configuration (``run_config.txt``) and a
``manifest.json`` with the config hash, seed and sha256 of every input and
output next to its outputs. Exit status is 0 only when all outputs were
written and read back successfully.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from habitflow import config as cfgmod
from habitflow import io
from habitflow.dynamics import PARAM_NAMES, CognitiveParams
from habitflow.evaluation import (
    REPORT_COLUMNS,
    LandscapeReport,
    SearchSpec,
    cross_predict,
    nested_cv,
    observed_participants,
    reports_to_csv,
    roc_to_csv,
)
from habitflow.features import MODEL_TYPES, PARAMETRIC_MODEL_TYPES, build_features
from habitflow.learning import LearnerConfig
from habitflow.sensor import DayOutcome, NoiseWindow, ThresholdConfig, preprocess_trace
from habitflow.simulator import SimCohortSpec, SimTraceSpec, simulate_cohort, simulate_trace

log = logging.getLogger("habitflow")

DEFAULT_START_DATE = dt.date(2024, 1, 1)


class CommandError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _model_types(text: str) -> list[str]:
    types = [t.strip() for t in text.split(",") if t.strip()]
    unknown = [t for t in types if t not in MODEL_TYPES]
    if unknown or not types:
        raise CommandError(f"unknown model types {unknown}; choose from {','.join(MODEL_TYPES)}")
    return types


def _target_rule(run: dict[str, Any]) -> str:
    if run["study_mode"] == "study2":
        return "twice"
    if run["target_session"] not in ("morning", "evening"):
        raise CommandError("target_session must be 'morning' or 'evening'")
    return run["target_session"]


def _learner(run: dict[str, Any]) -> LearnerConfig:
    return LearnerConfig(
        max_iterations=run["max_iterations"],
        convergence_tol=run["convergence_tol"],
        l2_penalty=run["l2_penalty"],
        standardize=run["standardize"],
    )


def _search(run: dict[str, Any]) -> SearchSpec:
    return SearchSpec(n_steps=run["search_steps"], seed=run["seed"], inner_rotation=run["inner_rotation"])


def _input_files(paths: Sequence[Path]) -> dict[str, str]:
    hashes = {}
    for path in paths:
        files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
        for f in files:
            hashes[str(f)] = io.sha256_file(f)
    return hashes


def _validate_csv(path: Path) -> None:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise CommandError(f"{path}: written file has no header")
    width = len(rows[0])
    bad = [i for i, r in enumerate(rows[1:], start=2) if len(r) != width]
    if bad:
        raise CommandError(f"{path}: rows {bad[:5]} do not match the header width")


def _finish(out_dir: Path, command: str, run: dict[str, Any], inputs: Sequence[Path], outputs: Sequence[Path]) -> int:
    for path in outputs:
        if not path.exists():
            raise CommandError(f"expected output {path} was not written")
        if path.suffix == ".csv":
            _validate_csv(path)
    (out_dir / "run_config.txt").write_text(cfgmod.dump(run))
    manifest = {
        "command": command,
        "config_sha256": cfgmod.config_hash(run),
        "seed": run["seed"],
        "inputs": _input_files(inputs),
        "outputs": {str(p.relative_to(out_dir)): io.sha256_file(p) for p in sorted(outputs)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("%s: wrote %d outputs to %s", command, len(outputs), out_dir)
    return 0


def _read_dataset(path: Path, run: dict[str, Any]):
    if not (path / "outcomes.csv").exists():
        raise CommandError(f"{path}: not a dataset directory (no outcomes.csv)")
    return io.read_dataset(path, run["study_mode"])


# ---------------------------------------------------------------- commands


def cmd_preprocess(raw_dir, noise_csv, out_csv, run: dict[str, Any]) -> int:
    raw_dir, out_csv = Path(raw_dir), Path(out_csv)
    files = sorted(raw_dir.glob("*.csv")) if raw_dir.is_dir() else []
    if not files:
        raise CommandError(f"{raw_dir}: no trace CSVs found")
    windows: list[NoiseWindow] = io.read_noise_windows(noise_csv) if noise_csv else []
    threshold = ThresholdConfig(run["activity_threshold"], run["min_duration"], run["merge_gap"], run["timezone"])
    rule = _target_rule(run)
    outcomes: list[DayOutcome] = []
    failures = []
    for path in files:
        try:
            trace = io.read_trace_csv(path)
            outcomes.extend(preprocess_trace(path.stem, trace, threshold, rule, windows))
        except (ValueError, OSError) as exc:
            failures.append(path.name)
            print(f"error: {path}: {exc}", file=sys.stderr)
    if failures:
        print(f"error: {len(failures)} of {len(files)} traces failed", file=sys.stderr)
        return 1
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    io.write_outcomes_csv(out_csv, outcomes)
    inputs = [raw_dir] + ([Path(noise_csv)] if noise_csv else [])
    return _finish(out_csv.parent, "preprocess", run, inputs, [out_csv])


SIM_KEYS = {
    "n_participants": int,
    "n_days": int,
    "link_a": float,
    "link_b": float,
    "link_c": float,
    "survey_noise_sd": float,
    "missing_rate": float,
    "study_mode": str,
    "id_prefix": str,
}


TRACE_KEYS = ("episode_duration", "padding", "quiet_duration", "noise_sd")


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def sim_spec_from(values: dict[str, str], seed: int) -> tuple[SimCohortSpec, dt.date, int, dict[str, float]]:
    """Build a cohort spec from key-value text.

    Returns ``(spec, start_date, n_trace_participants, trace_overrides)``.
    """
    values = dict(values)
    kwargs: dict[str, Any] = {"seed": seed}
    for key, kind in SIM_KEYS.items():
        if key in values:
            kwargs[key] = kind(values.pop(key))
    defaults = SimCohortSpec()
    params = {name: float(values.pop(name)) for name in PARAM_NAMES if name in values}
    if params:
        kwargs["true_params"] = CognitiveParams(**{**dict(zip(PARAM_NAMES, defaults.true_params.as_tuple())), **params})
    for key in ("lab_days", "survey_days"):
        if key in values:
            kwargs[key] = _int_tuple(values.pop(key))
    if "survey_days" not in kwargs and "n_days" in kwargs:
        # weekly surveys truncated to a shorter study
        kwargs["survey_days"] = tuple(range(0, kwargs["n_days"] + 1, 7))
    if "reminder_schedule" in values:
        text = values.pop("reminder_schedule")
        kwargs["reminder_schedule"] = _int_tuple(text) if text[:1].isdigit() else text
    if "hs0_low" in values or "hs0_high" in values:
        lo, hi = defaults.hs0_range
        kwargs["hs0_range"] = (float(values.pop("hs0_low", lo)), float(values.pop("hs0_high", hi)))
    start = dt.date.fromisoformat(values.pop("start_date", DEFAULT_START_DATE.isoformat()))
    n_traces = int(values.pop("trace_participants", 0))
    trace_kwargs = {
        field: float(values.pop(f"trace_{field}"))
        for field in TRACE_KEYS
        if f"trace_{field}" in values
    }
    if "seed" in values:
        raise CommandError("set the simulation seed with --seed, not in the spec file")
    if values:
        raise CommandError(f"unknown simulation keys: {sorted(values)}")
    return SimCohortSpec(**kwargs), start, n_traces, trace_kwargs


def _spec_text(spec: SimCohortSpec, start: dt.date, n_traces: int, trace_kwargs: dict[str, float]) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for f in fields(spec):
        value = getattr(spec, f.name)
        if isinstance(value, CognitiveParams):
            flat.update(zip(PARAM_NAMES, value.as_tuple()))
        elif f.name == "hs0_range":
            flat["hs0_low"], flat["hs0_high"] = value
        elif isinstance(value, tuple):
            flat[f.name] = ",".join(str(v) for v in value)
        else:
            flat[f.name] = value
    flat["start_date"] = start.isoformat()
    flat["trace_participants"] = n_traces
    base = SimTraceSpec(**trace_kwargs)
    flat.update({f"trace_{key}": getattr(base, key) for key in TRACE_KEYS})
    return flat


def cmd_simulate(spec_file, out_dir, run: dict[str, Any]) -> int:
    out_dir = Path(out_dir)
    values = cfgmod.parse_key_values(Path(spec_file).read_text(), str(spec_file)) if spec_file else {}
    seed = run["seed"]
    spec, start, n_traces, trace_kwargs = sim_spec_from(values, seed)
    cohort = simulate_cohort(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = io.write_dataset(out_dir, cohort.series, start)

    truth_rows = []
    for s in cohort.series:
        t = cohort.truth[s.participant_id]
        for i, day in enumerate(s.days):
            truth_rows.append((s.participant_id, int(day), int(t.behavior[i]), repr(float(t.hs[i])), repr(float(t.acc[i])), repr(float(t.p[i]))))
    io.write_rows(out_dir / "truth_days.csv", ("participant_id", "day", "behavior", "hs", "acc", "p"), truth_rows)
    io.write_rows(out_dir / "truth_params.csv", ("param", "value"), zip(PARAM_NAMES, map(repr, spec.true_params.as_tuple())))
    (out_dir / "sim_spec.txt").write_text(cfgmod.dump(_spec_text(spec, start, n_traces, trace_kwargs)))
    outputs += [out_dir / "truth_days.csv", out_dir / "truth_params.csv", out_dir / "sim_spec.txt"]

    if n_traces:
        raw = out_dir / "raw"
        raw.mkdir(exist_ok=True)
        noise = []
        for index, s in enumerate(cohort.series[:n_traces]):
            truth = cohort.truth[s.participant_id]
            days = []
            for i, day in enumerate(s.days):
                date = start + dt.timedelta(days=int(day) - 1)
                beh = int(truth.behavior[i])
                days.append(DayOutcome(s.participant_id, date, 1, beh, beh))
                if s.behavior[i] != s.behavior[i]:
                    noise.append((s.participant_id, date.isoformat(), date.isoformat()))
            trace = simulate_trace(SimTraceSpec(**trace_kwargs, seed=(seed, index)), days)
            io.write_trace_csv(raw / f"{s.participant_id}.csv", trace)
            outputs.append(raw / f"{s.participant_id}.csv")
        io.write_rows(out_dir / "noise_windows.csv", io.NOISE_HEADER, noise)
        outputs.append(out_dir / "noise_windows.csv")
    spec_inputs = [Path(spec_file)] if spec_file else []
    return _finish(out_dir, "simulate", run, spec_inputs, outputs)


def _parse_params(text: str | None) -> CognitiveParams | None:
    if text is None:
        return None
    values = [float(v) for v in text.split(",")]
    if len(values) not in (2, 5):
        raise CommandError("--params takes hdp,hgp or all five values hdp,hgp,adp,agp_beh,agp_rem")
    return CognitiveParams.from_sequence(values + [0.0] * (5 - len(values)))


def cmd_featurize(dataset, model_type, params_text, out_csv, run: dict[str, Any]) -> int:
    dataset, out_csv = Path(dataset), Path(out_csv)
    [model_type] = _model_types(model_type)
    params = _parse_params(params_text)
    if model_type in PARAMETRIC_MODEL_TYPES and params is None:
        raise CommandError(f"model type {model_type} needs --params")
    matrix = build_features(_read_dataset(dataset, run), model_type, params)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    io.write_feature_matrix_csv(out_csv, matrix)
    return _finish(out_csv.parent, "featurize", run, [dataset], [out_csv])


def _write_reports(out_dir: Path, reports, landscape: LandscapeReport) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "eval_report.csv": reports_to_csv(reports),
        "landscape.csv": landscape.to_csv(),
        "roc.csv": roc_to_csv(reports),
    }
    for name, text in paths.items():
        (out_dir / name).write_text(text)
    return [out_dir / name for name in paths]


def cmd_evaluate(dataset, out_dir, run: dict[str, Any]) -> int:
    dataset, out_dir = Path(dataset), Path(out_dir)
    types = _model_types(run["model_types"])
    cohort = _read_dataset(dataset, run)
    n = len(observed_participants(cohort))
    if n < run["k"]:
        raise CommandError(f"k={run['k']} folds need at least {run['k']} participants with observations; found {n}")
    reports, landscape = [], LandscapeReport()
    for model_type in types:
        report, fold_landscape = nested_cv(cohort, model_type, run["k"], _search(run), _learner(run))
        reports.append(report)
        landscape.extend(fold_landscape)
        log.info("%s: pooled AUC %.4f", model_type, report.auc)
    outputs = _write_reports(out_dir, reports, landscape)
    return _finish(out_dir, "evaluate", run, [dataset], outputs)


def cmd_cross_predict(train, test, out_dir, run: dict[str, Any]) -> int:
    train, test, out_dir = Path(train), Path(test), Path(out_dir)
    types = _model_types(run["model_types"])
    train_cohort, test_cohort = _read_dataset(train, run), _read_dataset(test, run)
    n = len(observed_participants(train_cohort))
    if n < run["k"]:
        raise CommandError(f"k={run['k']} folds need at least {run['k']} training participants; found {n}")
    reports, landscape = [], LandscapeReport()
    for model_type in types:
        report, lsc = cross_predict(train_cohort, test_cohort, model_type, run["k"], _search(run), _learner(run))
        reports.append(report)
        landscape.extend(lsc)
        log.info("%s: cross-cohort AUC %.4f", model_type, report.auc)
    outputs = _write_reports(out_dir, reports, landscape)
    return _finish(out_dir, "cross-predict", run, [train, test], outputs)


def cmd_report(report_csv, out=None) -> int:
    out = out or sys.stdout
    with open(report_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise CommandError(f"{report_csv}: not an evaluation report (expected header {','.join(REPORT_COLUMNS)})")
    shown = ("model_type", "fold", "n_obs", "auc", "mcc", "accuracy", "f1", "threshold")
    idx = [rows[0].index(c) for c in shown]

    def cell(text: str) -> str:
        try:
            return f"{float(text):.4f}" if "." in text else text
        except ValueError:
            return text

    table = [list(shown)] + [[cell(r[i]) for i in idx] for r in rows[1:]]
    widths = [max(len(r[j]) for r in table) for j in range(len(shown))]
    for r in table:
        print("  ".join(v.rjust(w) for v, w in zip(r, widths)), file=out)
    return 0


# ---------------------------------------------------------------- argument parsing


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--study-mode", choices=("study1", "study2"))
    parser.add_argument("--target-session", choices=("morning", "evening"), help="study1 target session")
    parser.add_argument("-v", "--verbose", action="store_true")


def _modelling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int)
    parser.add_argument("--search-steps", type=int)
    parser.add_argument("--model-types", help="comma-separated subset of " + ",".join(MODEL_TYPES))
    parser.add_argument("--inner-rotation", choices=("single", "full"))
    parser.add_argument("--l2-penalty", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="habitflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort with a ground-truth log")
    p.add_argument("--spec", help="key = value simulation spec (defaults if omitted)")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("preprocess", help="turn raw accelerometer CSVs into day outcomes")
    p.add_argument("raw_dir")
    p.add_argument("--noise", help="CSV of participant_id,start_date,end_date windows to code missing")
    p.add_argument("--out", required=True)
    p.add_argument("--activity-threshold", type=float)
    p.add_argument("--min-duration", type=float)
    p.add_argument("--merge-gap", type=float)
    p.add_argument("--timezone")
    _common(p)

    p = sub.add_parser("featurize", help="write one feature matrix")
    p.add_argument("dataset")
    p.add_argument("--model-type", required=True, choices=MODEL_TYPES)
    p.add_argument("--params", help="hdp,hgp[,adp,agp_beh,agp_rem] for theory/combined")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("evaluate", help="nested cross-validation of each model type")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    _common(p)
    _modelling(p)

    p = sub.add_parser("cross-predict", help="tune and fit on one cohort, score another")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--out", required=True)
    _common(p)
    _modelling(p)

    p = sub.add_parser("report", help="print an evaluation report as a table")
    p.add_argument("report_csv")
    return parser


OVERRIDE_FLAGS = (
    "seed",
    "k",
    "search_steps",
    "model_types",
    "study_mode",
    "target_session",
    "inner_rotation",
    "l2_penalty",
    "activity_threshold",
    "min_duration",
    "merge_gap",
    "timezone",
)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.report_csv)
        overrides = {name: getattr(args, name, None) for name in OVERRIDE_FLAGS}
        run = cfgmod.resolve(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(args.spec, args.out, run)
        if args.command == "preprocess":
            return cmd_preprocess(args.raw_dir, args.noise, args.out, run)
        if args.command == "featurize":
            return cmd_featurize(args.dataset, args.model_type, args.params, args.out, run)
        if args.command == "evaluate":
            return cmd_evaluate(args.dataset, args.out, run)
        if args.command == "cross-predict":
            return cmd_cross_predict(args.train, args.test, args.out, run)
    except (CommandError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
