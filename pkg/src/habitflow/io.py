"""CSV readers and writers for traces, day outcomes, datasets and feature matrices.

Dataset directory layout::

    outcomes.csv      participant_id,date,morning,evening,target   (missing = empty)
    surveys.csv       participant_id,day,instrumental,affective,srbai
    events.csv        participant_id,day,reminder,lab
    participants.csv  participant_id,initial_rate                  (optional)

Day numbers count from 1 at each participant's first outcome date; surveys
may carry day 0 (baseline) or earlier.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import math
import warnings
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from habitflow.features import FeatureMatrix
from habitflow.sensor import DayOutcome, NoiseWindow, RawTrace
from habitflow.series import ParticipantSeries, Survey

TRACE_HEADER = ("t", "x", "y", "z")
OUTCOME_HEADER = ("participant_id", "date", "morning", "evening", "target")
NOISE_HEADER = ("participant_id", "start_date", "end_date")
SURVEY_HEADER = ("participant_id", "day", "instrumental", "affective", "srbai")
EVENT_HEADER = ("participant_id", "day", "reminder", "lab")
PARTICIPANT_HEADER = ("participant_id", "initial_rate")


class FormatError(ValueError):
    pass


def _reader(path: Path, header: Sequence[str], required: bool = True) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = tuple(reader.fieldnames or ())
        missing = [h for h in header if h not in fields] if required else []
        if missing:
            raise FormatError(f"{path}: missing columns {missing}; expected header {','.join(header)}")
        return list(reader)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _opt_int(text: str) -> int | None:
    text = text.strip()
    return None if text == "" else int(text)


def _opt_float(text: str) -> float:
    text = (text or "").strip()
    return math.nan if text == "" else float(text)


def _fmt_opt(value) -> str:
    return "" if value is None else str(value)


def read_trace_csv(path) -> RawTrace:
    path = Path(path)
    with open(path) as fh:
        header = tuple(h.strip() for h in fh.readline().strip().split(","))
    if header != TRACE_HEADER:
        raise FormatError(f"{path}: expected header t,x,y,z, got {','.join(header)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty files are reported below
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        raise FormatError(f"{path}: no samples")
    if data.shape[1] != 4:
        raise FormatError(f"{path}: expected 4 columns")
    return RawTrace(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def write_trace_csv(path, trace: RawTrace) -> None:
    data = np.column_stack([trace.t, trace.x, trace.y, trace.z])
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt=["%.3f", "%.6f", "%.6f", "%.6f"])


def read_noise_windows(path) -> list[NoiseWindow]:
    windows = []
    for row in _reader(Path(path), NOISE_HEADER):
        try:
            windows.append(
                NoiseWindow(
                    row["participant_id"],
                    dt.date.fromisoformat(row["start_date"].strip()),
                    dt.date.fromisoformat(row["end_date"].strip()),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{path}: malformed noise window {row}: {exc}") from exc
    return windows


def write_outcomes_csv(path, outcomes: Sequence[DayOutcome]) -> None:
    write_rows(
        path,
        OUTCOME_HEADER,
        (
            (o.participant_id, o.date.isoformat(), _fmt_opt(o.morning), _fmt_opt(o.evening), _fmt_opt(o.target))
            for o in outcomes
        ),
    )


def read_outcomes_csv(path) -> list[DayOutcome]:
    return [
        DayOutcome(
            row["participant_id"],
            dt.date.fromisoformat(row["date"].strip()),
            _opt_int(row["morning"]),
            _opt_int(row["evening"]),
            _opt_int(row["target"]),
        )
        for row in _reader(Path(path), OUTCOME_HEADER)
    ]


def read_dataset(directory, study_mode: str = "study2") -> list[ParticipantSeries]:
    """Assemble participant series from a dataset directory.

    In ``study1`` mode the initial past-behavior rate is 0 for everyone; in
    ``study2`` mode it comes from ``participants.csv`` when present.
    """
    if study_mode not in ("study1", "study2"):
        raise ValueError("study_mode must be 'study1' or 'study2'")
    directory = Path(directory)
    outcomes: dict[str, dict[dt.date, int | None]] = {}
    for o in read_outcomes_csv(directory / "outcomes.csv"):
        outcomes.setdefault(o.participant_id, {})[o.date] = o.target

    surveys: dict[str, list[Survey]] = {}
    if (directory / "surveys.csv").exists():
        for row in _reader(directory / "surveys.csv", SURVEY_HEADER):
            surveys.setdefault(row["participant_id"], []).append(
                Survey(
                    int(row["day"]),
                    _opt_float(row["instrumental"]),
                    _opt_float(row["affective"]),
                    _opt_float(row["srbai"]),
                )
            )
    events: dict[str, dict[int, tuple[int, int]]] = {}
    if (directory / "events.csv").exists():
        for row in _reader(directory / "events.csv", EVENT_HEADER):
            events.setdefault(row["participant_id"], {})[int(row["day"])] = (int(row["reminder"]), int(row["lab"]))
    rates: dict[str, float] = {}
    if study_mode == "study2" and (directory / "participants.csv").exists():
        for row in _reader(directory / "participants.csv", PARTICIPANT_HEADER):
            rates[row["participant_id"]] = float(row["initial_rate"])

    cohort = []
    for pid in sorted(outcomes):
        by_date = outcomes[pid]
        first, last = min(by_date), max(by_date)
        n = (last - first).days + 1
        days = np.arange(1, n + 1)
        behavior = np.full(n, np.nan)
        for date, target in by_date.items():
            if target is not None:
                behavior[(date - first).days] = target
        ev = events.get(pid, {})
        reminder = np.array([ev.get(d, (0, 0))[0] for d in days])
        lab = np.array([ev.get(d, (0, 0))[1] for d in days])
        cohort.append(
            ParticipantSeries(pid, days, behavior, reminder, lab, tuple(surveys.get(pid, ())), rates.get(pid, 0.0))
        )
    return cohort


def write_dataset(directory, cohort: Sequence[ParticipantSeries], start_date: dt.date) -> list[Path]:
    """Write a cohort in the dataset layout; returns the written paths.

    Behavior is stored as the evening session with the morning session
    always performed, so both target rules decode the same value.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    outcome_rows, survey_rows, event_rows, participant_rows = [], [], [], []
    for s in cohort:
        for day, beh, rem, lab in zip(s.days, s.behavior, s.reminder, s.lab):
            date = start_date + dt.timedelta(days=int(day) - 1)
            if math.isnan(beh):
                outcome_rows.append((s.participant_id, date.isoformat(), "", "", ""))
            else:
                outcome_rows.append((s.participant_id, date.isoformat(), 1, int(beh), int(beh)))
            event_rows.append((s.participant_id, int(day), int(rem), int(lab)))
        for sv in s.surveys:
            survey_rows.append(
                (s.participant_id, sv.day, *("" if math.isnan(v) else repr(v) for v in (sv.instrumental, sv.affective, sv.srbai)))
            )
        participant_rows.append((s.participant_id, repr(s.initial_behavior_rate)))
    paths = {
        "outcomes.csv": (OUTCOME_HEADER, outcome_rows),
        "surveys.csv": (SURVEY_HEADER, survey_rows),
        "events.csv": (EVENT_HEADER, event_rows),
        "participants.csv": (PARTICIPANT_HEADER, participant_rows),
    }
    for name, (header, rows) in paths.items():
        write_rows(directory / name, header, rows)
    return [directory / name for name in paths]


def write_feature_matrix_csv(path, matrix: FeatureMatrix) -> None:
    write_rows(
        path,
        (*matrix.feature_names, "participant_id", "predict_day", "label"),
        (
            (*(repr(float(v)) for v in row), pid, int(day), int(label))
            for row, pid, day, label in zip(matrix.X, matrix.participant_ids, matrix.predict_days, matrix.labels)
        ),
    )


def read_feature_matrix_csv(path, model_type: str) -> FeatureMatrix:
    rows = _reader(Path(path), ("participant_id", "predict_day", "label"))
    with open(path) as fh:
        header = next(csv.reader(fh))
    names = [h for h in header if h not in ("participant_id", "predict_day", "label")]
    return FeatureMatrix(
        model_type,
        tuple(names),
        np.array([[float(r[n]) for n in names] for r in rows]).reshape(len(rows), len(names)),
        [r["participant_id"] for r in rows],
        [int(r["predict_day"]) for r in rows],
        [int(r["label"]) for r in rows],
    )


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
