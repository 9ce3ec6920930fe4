"""Case records, outcome labeling, task classes, fold plans, and summaries.

Outcome severities are totally ordered Benign < LG < IntG < HG < Invasive.
A biopsy episode groups events in one breast within 183 days of the
episode's first event and is labeled by its most severe finding.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import itertools
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence, Union

import numpy as np

from .errors import DatasetError
from .schema import Schema, Variable

EPISODE_WINDOW_DAYS = 183

TASK_BM = "bm"
TASK_B1M1 = "b1m1"
TASKS = (TASK_BM, TASK_B1M1)

BREAST_SIDES = ("left", "right")


class Severity(enum.IntEnum):
    """Biopsy outcome severity; integer value is the rank in the total order."""

    BENIGN = 0
    LG = 1
    INTG = 2
    HG = 3
    INVASIVE = 4

    @property
    def label(self) -> str:
        return _SEVERITY_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Severity":
        try:
            return _SEVERITY_BY_LABEL[label]
        except KeyError:
            raise DatasetError(f"unknown outcome severity {label!r}") from None


_SEVERITY_LABELS = {
    Severity.BENIGN: "Benign",
    Severity.LG: "LG",
    Severity.INTG: "IntG",
    Severity.HG: "HG",
    Severity.INVASIVE: "Invasive",
}
_SEVERITY_BY_LABEL = {v: k for k, v in _SEVERITY_LABELS.items()}
SEVERITY_LABELS = tuple(_SEVERITY_LABELS[s] for s in Severity)


@dataclass(frozen=True)
class CaseRecord:
    patient_id: str
    exam_date: dt.date
    states: tuple[int, ...]  # state index per feature, in schema feature order
    outcome: Severity


@dataclass(frozen=True)
class BiopsyEvent:
    patient_id: str
    breast_side: str
    date: dt.date
    severity: Severity

    def __post_init__(self) -> None:
        if self.breast_side not in BREAST_SIDES:
            raise DatasetError(f"unknown breast side {self.breast_side!r}")


@dataclass(frozen=True)
class Dataset:
    schema: Schema
    records: tuple[CaseRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def feature_matrix(self) -> np.ndarray:
        """Cases-by-features matrix of state indices (read-only)."""
        mat = np.array([r.states for r in self.records], dtype=np.int64)
        mat.flags.writeable = False
        return mat

    def outcome_array(self) -> np.ndarray:
        arr = np.array([int(r.outcome) for r in self.records], dtype=np.int64)
        arr.flags.writeable = False
        return arr

    def age_group_labels(self) -> tuple[str, ...]:
        """Per-case age-group state label; empty strings when the schema has none."""
        var = self.schema.age_group_variable
        if var is None:
            return tuple("" for _ in self.records)
        idx = self.schema.feature_index(var.name)
        return tuple(var.states[r.states[idx]] for r in self.records)


def derive_class(outcome: Severity, task: str) -> int:
    """Map a severity to the binary class (0 negative, 1 positive) for a task.

    bm:   Benign vs {LG, IntG, HG, Invasive}
    b1m1: {Benign, LG} vs {IntG, HG, Invasive}
    """
    if task == TASK_BM:
        return 0 if outcome == Severity.BENIGN else 1
    if task == TASK_B1M1:
        return 0 if outcome <= Severity.LG else 1
    raise DatasetError(f"unknown task {task!r}")


def negative_severities(task: str) -> tuple[Severity, ...]:
    return tuple(s for s in Severity if derive_class(s, task) == 0)


def positive_severities(task: str) -> tuple[Severity, ...]:
    return tuple(s for s in Severity if derive_class(s, task) == 1)


def class_array(dataset: Dataset, task: str) -> np.ndarray:
    arr = np.array(
        [derive_class(r.outcome, task) for r in dataset.records], dtype=np.int64
    )
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# CSV ingestion / rendering


def _parse_date(text: str, row_num: int, column: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DatasetError(
            f"row {row_num}, column {column!r}: malformed date {text!r}"
        ) from None


def _state_index(var: Variable, cell: str, row_num: int) -> int:
    if cell == "":
        idx = var.missing_index
        if idx is None:
            raise DatasetError(
                f"row {row_num}, column {var.name!r}: empty cell but the "
                f"variable declares no 'missing' state"
            )
        return idx
    try:
        return var.states.index(cell)
    except ValueError:
        raise DatasetError(
            f"row {row_num}, column {var.name!r}: unknown state {cell!r}"
        ) from None


def parse_dataset(
    source: Union[str, Path, IO[str], bytes],
    schema: Schema,
    events: Sequence[BiopsyEvent] | None = None,
) -> Dataset:
    """Parse a case CSV against the schema.

    Expected columns: patient_id, exam_date, one per feature variable, and
    outcome. The outcome column may be omitted when ``events`` is given, in
    which case each exam's label is resolved from its following biopsy
    episode. Unknown state labels are an error; an empty cell maps to the
    "missing" state only when the variable declares one.
    """
    if isinstance(source, bytes):
        fh: IO[str] = io.StringIO(source.decode("utf-8"))
        rows = _read_rows(fh, schema, events is not None)
    elif isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            rows = _read_rows(fh, schema, events is not None)
    else:
        rows = _read_rows(source, schema, events is not None)

    if events is not None:
        by_patient: dict[str, list[BiopsyEvent]] = defaultdict(list)
        for ev in events:
            by_patient[ev.patient_id].append(ev)

    records = []
    for row_num, patient_id, exam_date, states, outcome in rows:
        if outcome is None:
            outcome = _outcome_from_events(
                patient_id, exam_date, by_patient.get(patient_id, []), row_num
            )
        records.append(CaseRecord(patient_id, exam_date, states, outcome))
    return Dataset(schema=schema, records=tuple(records))


def _read_rows(fh: IO[str], schema: Schema, allow_no_outcome: bool):
    # provenance comment lines may precede the header
    first_line = fh.readline()
    skipped = 0
    while first_line.startswith("#"):
        skipped += 1
        first_line = fh.readline()
    if not first_line:
        raise DatasetError("empty CSV: no header row")
    reader = csv.reader(itertools.chain([first_line], fh))
    header = next(reader)

    feature_names = [v.name for v in schema.features]
    expected = {"patient_id", "exam_date", *feature_names}
    has_outcome = "outcome" in header
    if has_outcome:
        expected.add("outcome")
    elif not allow_no_outcome:
        raise DatasetError("missing required column 'outcome'")
    for col in header:
        if col not in expected:
            raise DatasetError(f"unknown column {col!r}")
    for col in sorted(expected):
        if col not in header:
            raise DatasetError(f"missing required column {col!r}")

    col_of = {name: header.index(name) for name in header}
    feat_cols = [(schema.features[i], col_of[name]) for i, name in enumerate(feature_names)]

    rows = []
    for row_num, cells in enumerate(reader, start=2 + skipped):
        if len(cells) != len(header):
            raise DatasetError(
                f"row {row_num}: expected {len(header)} cells, got {len(cells)}"
            )
        patient_id = cells[col_of["patient_id"]]
        exam_date = _parse_date(cells[col_of["exam_date"]], row_num, "exam_date")
        states = tuple(_state_index(var, cells[col], row_num) for var, col in feat_cols)
        outcome = None
        if has_outcome:
            cell = cells[col_of["outcome"]]
            try:
                outcome = Severity.from_label(cell)
            except DatasetError:
                raise DatasetError(
                    f"row {row_num}, column 'outcome': unknown severity {cell!r}"
                ) from None
        rows.append((row_num, patient_id, exam_date, states, outcome))
    return rows


def render_dataset(dataset: Dataset, config: dict | None = None) -> str:
    """Render a dataset back to its CSV form (inverse of parse_dataset)."""
    out = io.StringIO()
    if config is not None:
        out.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    feature_names = [v.name for v in dataset.schema.features]
    writer.writerow(["patient_id", "exam_date", *feature_names, "outcome"])
    for rec in dataset.records:
        labels = [
            var.states[idx] for var, idx in zip(dataset.schema.features, rec.states)
        ]
        writer.writerow(
            [rec.patient_id, rec.exam_date.isoformat(), *labels, rec.outcome.label]
        )
    return out.getvalue()


def save_dataset(dataset: Dataset, path: Union[str, Path],
                 config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_dataset(dataset, config=config))


def load_biopsy_events(source: Union[str, Path, IO[str]]) -> list[BiopsyEvent]:
    """Read a biopsy-events CSV: patient_id, breast_side, date, severity."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_biopsy_events(fh)
    reader = csv.DictReader(source)
    required = {"patient_id", "breast_side", "date", "severity"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise DatasetError(
            f"biopsy events CSV must have columns {sorted(required)}"
        )
    events = []
    for row_num, row in enumerate(reader, start=2):
        events.append(
            BiopsyEvent(
                patient_id=row["patient_id"],
                breast_side=row["breast_side"],
                date=_parse_date(row["date"], row_num, "date"),
                severity=Severity.from_label(row["severity"]),
            )
        )
    return events


# ---------------------------------------------------------------------------
# Episode-of-care labeling


def resolve_episode_label(events: Sequence[BiopsyEvent]) -> Severity:
    """Label the episode anchored at the earliest event.

    All events must share patient and breast side. Events dated within
    183 days of the first event form the episode; its label is the maximum
    severity among them. Later events fall outside this episode and are
    ignored here.
    """
    if not events:
        raise DatasetError("cannot resolve an episode label from no events")
    keys = {(e.patient_id, e.breast_side) for e in events}
    if len(keys) > 1:
        raise DatasetError(
            f"events span multiple patient/side combinations: {sorted(keys)}"
        )
    first = min(e.date for e in events)
    in_episode = [
        e for e in events if (e.date - first).days <= EPISODE_WINDOW_DAYS
    ]
    return max(e.severity for e in in_episode)


def _outcome_from_events(
    patient_id: str, exam_date: dt.date, events: list[BiopsyEvent], row_num: int
) -> Severity:
    """Match an exam to its following biopsy episode.

    Per breast side, the episode is anchored at the first event on or after
    the exam date; the side whose episode starts earlier wins (ties go to
    the more severe label).
    """
    candidates = []
    for side in BREAST_SIDES:
        following = sorted(
            (e for e in events if e.breast_side == side and e.date >= exam_date),
            key=lambda e: e.date,
        )
        if following:
            candidates.append((following[0].date, resolve_episode_label(following)))
    if not candidates:
        raise DatasetError(
            f"row {row_num}: no biopsy events on or after {exam_date.isoformat()} "
            f"for patient {patient_id!r}"
        )
    anchor = min(d for d, _ in candidates)
    return max(label for d, label in candidates if d == anchor)


# ---------------------------------------------------------------------------
# Fold plans


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: tuple[int, ...]  # fold index per case, in dataset order

    def fold_of(self, case_index: int) -> int:
        return self.assignment[case_index]


def build_fold_plan(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    """Assign whole patients to folds, stratified by (age group, severity).

    Each patient group lands in the stratum of its most severe case and the
    groups of a stratum are dealt round-robin in seeded shuffled order. One
    fold cursor runs across strata so overall fold sizes stay balanced.
    """
    if k < 2:
        raise DatasetError(f"fold count must be >= 2, got {k}")
    if not dataset.records:
        raise DatasetError("cannot build a fold plan for an empty dataset")

    by_patient: dict[str, list[int]] = defaultdict(list)
    for i, rec in enumerate(dataset.records):
        by_patient[rec.patient_id].append(i)
    if k > len(by_patient):
        raise DatasetError(
            f"fold count {k} exceeds the {len(by_patient)} distinct patients"
        )

    age_labels = dataset.age_group_labels()
    strata: dict[tuple[int, str], list[str]] = defaultdict(list)
    for patient_id, case_ids in by_patient.items():
        worst = max(case_ids, key=lambda i: (int(dataset.records[i].outcome), -i))
        key = (int(dataset.records[worst].outcome), age_labels[worst])
        strata[key].append(patient_id)

    rng = random.Random(seed)
    assignment = [-1] * len(dataset.records)
    cursor = 0
    for key in sorted(strata):
        group_ids = sorted(strata[key])
        rng.shuffle(group_ids)
        for patient_id in group_ids:
            fold = cursor % k
            cursor += 1
            for case_id in by_patient[patient_id]:
                assignment[case_id] = fold
    return FoldPlan(k=k, assignment=tuple(assignment))


# ---------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class DatasetSummary:
    n_cases: int
    state_counts: dict  # variable name -> {state label: count}
    outcome_by_age_group: dict  # age-group label -> {severity label: count}
    outcome_counts: dict = field(default_factory=dict)  # severity label -> count


def summarize(dataset: Dataset) -> DatasetSummary:
    """Per-variable state counts plus the per-age-group outcome breakdown."""
    state_counts: dict[str, dict[str, int]] = {}
    mat = dataset.feature_matrix() if dataset.records else None
    for j, var in enumerate(dataset.schema.features):
        counts = Counter(mat[:, j].tolist()) if mat is not None else Counter()
        state_counts[var.name] = {
            s: int(counts.get(i, 0)) for i, s in enumerate(var.states)
        }
    outcome_counts = Counter(r.outcome.label for r in dataset.records)
    by_age: dict[str, Counter] = defaultdict(Counter)
    for rec, age in zip(dataset.records, dataset.age_group_labels()):
        by_age[age or "all"][rec.outcome.label] += 1
    return DatasetSummary(
        n_cases=len(dataset.records),
        state_counts=state_counts,
        outcome_by_age_group={
            age: {s: int(c[s]) for s in SEVERITY_LABELS if s in c}
            for age, c in sorted(by_age.items())
        },
        outcome_counts={
            s: int(outcome_counts[s]) for s in SEVERITY_LABELS if s in outcome_counts
        },
    )


def render_summary(summary: DatasetSummary, schema: Schema) -> str:
    """Fixed-width text table of the summary, one variable per block."""
    lines = [f"Variables\tInstances", f"{len(schema.variables)}\t{summary.n_cases}", ""]
    role_order: dict[str, list[str]] = defaultdict(list)
    for var in schema.features:
        role_order[var.role].append(var.name)
    for role in ("demographic", "imaging"):
        if not role_order.get(role):
            continue
        lines.append(role.capitalize())
        for name in role_order[role]:
            cells = [name]
            for state, count in summary.state_counts[name].items():
                cells.append(f"{state} {count}")
            lines.append("\t".join(cells))
        lines.append("")
    lines.append("Outcomes")
    for sev, count in summary.outcome_counts.items():
        lines.append(f"{sev}\t{count}")
    lines.append("")
    lines.append("Outcomes by age group")
    for age, counts in summary.outcome_by_age_group.items():
        cells = [age] + [f"{s} {c}" for s, c in counts.items()]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
