"""Cross-validation scoring, biopsy-threshold sweeps, and ROC/PR curves.

Scores from the ten held-out folds are pooled into one evaluation set by
default; a per-fold mode computes curves and areas fold by fold instead.
The biopsy rule is: recommend biopsy exactly when the predicted malignancy
probability is greater than or equal to the threshold.
"""

from __future__ import annotations

import bisect
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence, Union

import numpy as np

from .dataset import (
    Dataset,
    FoldPlan,
    Severity,
    class_array,
    negative_severities,
    positive_severities,
)
from .errors import EvaluationError
from .tan import (
    WEIGHT_CMI,
    estimate_cpts_from_counts,
    learn_structure_from_counts,
    posterior_batch,
    tabulate_counts_arrays,
)

MODE_POOLED = "pooled"
MODE_PER_FOLD = "per_fold"


@dataclass(frozen=True)
class ScoredCase:
    case_index: int
    patient_id: str
    probability: float
    true_class: int
    severity: Severity
    age_group: str
    fold_index: int


@dataclass(frozen=True)
class ScoreSet:
    """Pooled held-out predictions plus the task that defined the classes."""

    task: str
    scored: tuple[ScoredCase, ...]

    def __len__(self) -> int:
        return len(self.scored)

    @property
    def n_positive(self) -> int:
        return sum(1 for s in self.scored if s.true_class == 1)

    @property
    def n_negative(self) -> int:
        return sum(1 for s in self.scored if s.true_class == 0)

    def fold_indices(self) -> list[int]:
        return sorted({s.fold_index for s in self.scored})


def run_cross_validation(
    dataset: Dataset,
    fold_plan: FoldPlan,
    task: str,
    alpha: float = 0.5,
    weight_kind: str = WEIGHT_CMI,
    max_workers: int | None = None,
) -> ScoreSet:
    """Train on k-1 folds, score the held-out fold, pool all predictions.

    Every case is scored exactly once, by the one model that never saw it.
    Fold trainings are independent; with max_workers > 1 they run in a
    thread pool and the result is identical to the sequential order.
    """
    if len(fold_plan.assignment) != len(dataset):
        raise EvaluationError("fold plan does not cover the dataset")
    X = dataset.feature_matrix()
    y = class_array(dataset, task)
    n_states = [v.n_states for v in dataset.schema.features]
    assignment = np.array(fold_plan.assignment)
    folds = sorted(set(fold_plan.assignment))

    def score_fold(fold: int) -> tuple[np.ndarray, np.ndarray]:
        train = assignment != fold
        y_train = y[train]
        if len(np.unique(y_train)) < 2:
            raise EvaluationError(
                f"training set for fold {fold} is missing one of the two classes"
            )
        counts = tabulate_counts_arrays(X[train], y_train, n_states)
        structure = learn_structure_from_counts(counts, weight_kind)
        model = estimate_cpts_from_counts(counts, structure, alpha)
        test_idx = np.flatnonzero(~train)
        return test_idx, posterior_batch(model, X[test_idx])

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(score_fold, folds))
    else:
        results = [score_fold(fold) for fold in folds]

    probs = np.empty(len(dataset))
    for test_idx, p in results:
        probs[test_idx] = p

    ages = dataset.age_group_labels()
    scored = tuple(
        ScoredCase(
            case_index=i,
            patient_id=rec.patient_id,
            probability=float(probs[i]),
            true_class=int(y[i]),
            severity=rec.outcome,
            age_group=ages[i],
            fold_index=fold_plan.assignment[i],
        )
        for i, rec in enumerate(dataset.records)
    )
    return ScoreSet(task=task, scored=scored)


def filter_subpopulation(scores: ScoreSet, age_group: str) -> ScoreSet:
    """Order-preserving restriction to one age-group state."""
    return ScoreSet(
        task=scores.task,
        scored=tuple(s for s in scores.scored if s.age_group == age_group),
    )


# ---------------------------------------------------------------------------
# Confusion counts and metrics


@dataclass(frozen=True)
class ConfusionCounts:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    missed_by_severity: dict  # positive-class severity label -> count
    avoided_by_severity: dict  # negative-class severity label -> count

    @property
    def avoided_negatives(self) -> int:
        return self.tn


@dataclass(frozen=True)
class Metrics:
    ppv: float | None
    sensitivity: float | None
    specificity: float | None


def confusion_at_threshold(scores: ScoreSet, threshold: float) -> ConfusionCounts:
    """Count biopsy outcomes under the >= rule at one threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise EvaluationError(f"threshold {threshold} outside [0, 1]")
    tp = fp = tn = fn = 0
    missed = {s.label: 0 for s in positive_severities(scores.task)}
    avoided = {s.label: 0 for s in negative_severities(scores.task)}
    for case in scores.scored:
        biopsy = case.probability >= threshold
        if case.true_class == 1:
            if biopsy:
                tp += 1
            else:
                fn += 1
                missed[case.severity.label] += 1
        else:
            if biopsy:
                fp += 1
            else:
                tn += 1
                avoided[case.severity.label] += 1
    return ConfusionCounts(
        threshold=threshold, tp=tp, fp=fp, tn=tn, fn=fn,
        missed_by_severity=missed, avoided_by_severity=avoided,
    )


def metrics_from_counts(c: ConfusionCounts) -> Metrics:
    """PPV, sensitivity, specificity; None marks an undefined ratio."""
    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    return Metrics(
        ppv=ratio(c.tp, c.tp + c.fp),
        sensitivity=ratio(c.tp, c.tp + c.fn),
        specificity=ratio(c.tn, c.tn + c.fp),
    )


# ---------------------------------------------------------------------------
# Threshold sweep


@dataclass(frozen=True)
class SweepRow:
    counts: ConfusionCounts
    metrics: Metrics


@dataclass(frozen=True)
class ThresholdReport:
    task: str
    subpopulation: str  # "" for the whole population
    grid_points: int
    rows: tuple[SweepRow, ...]
    config: dict | None = None


def threshold_sweep(
    scores: ScoreSet, grid_points: int = 5001, subpopulation: str = "",
    config: dict | None = None,
) -> ThresholdReport:
    """Confusion counts and metrics on an even threshold grid over [0, 1].

    The default 5001-point grid steps by 0.02%; the biopsied count is
    non-increasing in the threshold by construction.
    """
    if grid_points < 2:
        raise EvaluationError(f"grid needs at least 2 points, got {grid_points}")
    pos_sevs = positive_severities(scores.task)
    neg_sevs = negative_severities(scores.task)
    by_severity: dict[Severity, list[float]] = {s: [] for s in Severity}
    for case in scores.scored:
        by_severity[case.severity].append(case.probability)
    for probs in by_severity.values():
        probs.sort()

    def at_or_above(probs: list[float], t: float) -> int:
        return len(probs) - bisect.bisect_left(probs, t)

    rows = []
    for g in range(grid_points):
        t = g / (grid_points - 1)
        missed, avoided = {}, {}
        tp = fn = fp = tn = 0
        for s in pos_sevs:
            n_biopsied = at_or_above(by_severity[s], t)
            tp += n_biopsied
            missed[s.label] = len(by_severity[s]) - n_biopsied
            fn += missed[s.label]
        for s in neg_sevs:
            n_biopsied = at_or_above(by_severity[s], t)
            fp += n_biopsied
            avoided[s.label] = len(by_severity[s]) - n_biopsied
            tn += avoided[s.label]
        counts = ConfusionCounts(
            threshold=t, tp=tp, fp=fp, tn=tn, fn=fn,
            missed_by_severity=missed, avoided_by_severity=avoided,
        )
        rows.append(SweepRow(counts=counts, metrics=metrics_from_counts(counts)))
    return ThresholdReport(
        task=scores.task, subpopulation=subpopulation,
        grid_points=grid_points, rows=tuple(rows), config=config,
    )


def lookup_threshold_row(report: ThresholdReport, t: float) -> SweepRow:
    """Nearest grid row at or below the requested threshold."""
    if not 0.0 <= t <= 1.0:
        raise EvaluationError(f"threshold {t} outside [0, 1]")
    step = 1.0 / (report.grid_points - 1)
    g = int(t / step + 1e-9)
    g = min(g, report.grid_points - 1)
    if report.rows[g].counts.threshold > t + 1e-15:
        g -= 1
    return report.rows[g]


# ---------------------------------------------------------------------------
# ROC / PR curves


@dataclass(frozen=True)
class CurvePoint:
    x: float
    y: float
    threshold: float


def _sorted_scores(scores: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    probs = np.array([s.probability for s in scores.scored])
    labels = np.array([s.true_class for s in scores.scored])
    order = np.argsort(-probs, kind="stable")
    return probs[order], labels[order]


def roc_curve(scores: ScoreSet) -> list[CurvePoint]:
    """One point per distinct score (ties collapse) plus the (0, 0) anchor.

    x is the false positive rate and y the sensitivity of biopsying at
    that score; the anchor's threshold is a sentinel above every score.
    """
    n_pos, n_neg = scores.n_positive, scores.n_negative
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs at least one positive and one negative")
    probs, labels = _sorted_scores(scores)
    points = [CurvePoint(x=0.0, y=0.0, threshold=float(probs[0]) + 1.0)]
    tp = fp = 0
    for i in range(len(probs)):
        tp += labels[i]
        fp += 1 - labels[i]
        last_of_tie = i + 1 == len(probs) or probs[i + 1] != probs[i]
        if last_of_tie:
            points.append(
                CurvePoint(x=fp / n_neg, y=tp / n_pos, threshold=float(probs[i]))
            )
    return points


def pr_curve(scores: ScoreSet) -> list[CurvePoint]:
    """One point per distinct score; x is recall, y is precision.

    The rightmost point always sits at recall 1 with precision equal to
    the positive prevalence.
    """
    n_pos = scores.n_positive
    if n_pos == 0:
        raise EvaluationError("PR curve needs at least one positive")
    probs, labels = _sorted_scores(scores)
    points = []
    tp = fp = 0
    for i in range(len(probs)):
        tp += labels[i]
        fp += 1 - labels[i]
        last_of_tie = i + 1 == len(probs) or probs[i + 1] != probs[i]
        if last_of_tie:
            points.append(
                CurvePoint(x=tp / n_pos, y=tp / (tp + fp), threshold=float(probs[i]))
            )
    return points


def area_under_curve(points: Sequence[CurvePoint], kind: str) -> float:
    """Trapezoidal area over the achieved points.

    For PR curves this linear interpolation is a documented, slightly
    optimistic approximation; no extrapolation below the least recall.
    """
    if kind not in ("roc", "pr"):
        raise EvaluationError(f"unknown curve kind {kind!r}")
    if len(points) < 2:
        raise EvaluationError("area needs at least 2 points")
    area = 0.0
    for a, b in zip(points, points[1:]):
        if b.x < a.x:
            raise EvaluationError("curve points must be sorted by non-decreasing x")
        area += (b.x - a.x) * (a.y + b.y) / 2.0
    return area


@dataclass(frozen=True)
class CurveSummary:
    kind: str
    mode: str
    curves: dict  # key "all" (pooled) or fold index as str -> list[CurvePoint]
    areas: dict  # same keys -> area
    n_pos: int
    n_neg: int


def curve_summary(scores: ScoreSet, kind: str, mode: str = MODE_POOLED) -> CurveSummary:
    """Pooled: one curve over all held-out scores. Per-fold: one per fold."""
    curve_fn = {"roc": roc_curve, "pr": pr_curve}[kind]
    if mode == MODE_POOLED:
        pts = curve_fn(scores)
        return CurveSummary(
            kind=kind, mode=mode,
            curves={"all": pts}, areas={"all": area_under_curve(pts, kind)},
            n_pos=scores.n_positive, n_neg=scores.n_negative,
        )
    if mode != MODE_PER_FOLD:
        raise EvaluationError(f"unknown scoring mode {mode!r}")
    curves, areas = {}, {}
    for fold in scores.fold_indices():
        subset = ScoreSet(
            task=scores.task,
            scored=tuple(s for s in scores.scored if s.fold_index == fold),
        )
        pts = curve_fn(subset)
        curves[str(fold)] = pts
        areas[str(fold)] = area_under_curve(pts, kind)
    return CurveSummary(
        kind=kind, mode=mode, curves=curves, areas=areas,
        n_pos=scores.n_positive, n_neg=scores.n_negative,
    )


# ---------------------------------------------------------------------------
# Artifact I/O (scores, sweep, curves as CSV with an embedded config line)


def _config_line(config: dict | None) -> str:
    return "# config: " + json.dumps(config or {}, sort_keys=True) + "\n"


def _read_config_line(fh: IO[str]) -> dict:
    line = fh.readline()
    if not line.startswith("# config: "):
        raise EvaluationError("artifact is missing its leading config line")
    return json.loads(line[len("# config: "):])


def write_scores_csv(scores: ScoreSet, path: Union[str, Path],
                     config: dict | None = None) -> None:
    cfg = dict(config or {})
    cfg.setdefault("task", scores.task)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_config_line(cfg))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["case_index", "patient_id", "fold", "age_group", "severity",
             "true_class", "probability"]
        )
        for s in scores.scored:
            writer.writerow(
                [s.case_index, s.patient_id, s.fold_index, s.age_group,
                 s.severity.label, s.true_class, repr(s.probability)]
            )


def read_scores_csv(path: Union[str, Path]) -> tuple[ScoreSet, dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        config = _read_config_line(fh)
        reader = csv.DictReader(fh)
        scored = tuple(
            ScoredCase(
                case_index=int(row["case_index"]),
                patient_id=row["patient_id"],
                probability=float(row["probability"]),
                true_class=int(row["true_class"]),
                severity=Severity.from_label(row["severity"]),
                age_group=row["age_group"],
                fold_index=int(row["fold"]),
            )
            for row in reader
        )
    task = config.get("task")
    if task is None:
        raise EvaluationError("scores artifact does not record its task")
    return ScoreSet(task=task, scored=scored), config


def format_metric(value: float | None) -> str:
    """4-decimal metric cell; undefined ratios render as an empty cell."""
    return "" if value is None else f"{value:.4f}"


def _sweep_columns(task: str) -> tuple[list, list]:
    neg = [s.label for s in negative_severities(task)]
    pos = [s.label for s in positive_severities(task)]
    return neg, pos


def write_sweep_csv(report: ThresholdReport, path: Union[str, Path]) -> None:
    """One row per grid threshold: biopsies by class, avoided and missed
    by severity, then the three metrics at 4 decimals."""
    neg_sevs, pos_sevs = _sweep_columns(report.task)
    cfg = dict(report.config or {})
    cfg.update(
        {"task": report.task, "grid": report.grid_points,
         "subpop": report.subpopulation}
    )
    header = (
        ["threshold_pct", "negative_biopsies", "positive_biopsies"]
        + [f"avoided_{s}" for s in neg_sevs]
        + [f"missed_{s}" for s in pos_sevs]
        + ["ppv", "sensitivity", "specificity"]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_config_line(cfg))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in report.rows:
            c, m = row.counts, row.metrics
            writer.writerow(
                [f"{100.0 * c.threshold:.4f}", c.fp, c.tp]
                + [c.avoided_by_severity[s] for s in neg_sevs]
                + [c.missed_by_severity[s] for s in pos_sevs]
                + [format_metric(m.ppv), format_metric(m.sensitivity),
                   format_metric(m.specificity)]
            )


def read_sweep_csv(path: Union[str, Path]) -> ThresholdReport:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        config = _read_config_line(fh)
        task = config["task"]
        grid = int(config["grid"])
        subpop = config.get("subpop", "")
        neg_sevs, pos_sevs = _sweep_columns(task)
        reader = csv.DictReader(fh)
        rows = []
        for g, raw in enumerate(reader):
            counts = ConfusionCounts(
                threshold=g / (grid - 1),
                tp=int(raw["positive_biopsies"]),
                fp=int(raw["negative_biopsies"]),
                tn=sum(int(raw[f"avoided_{s}"]) for s in neg_sevs),
                fn=sum(int(raw[f"missed_{s}"]) for s in pos_sevs),
                missed_by_severity={s: int(raw[f"missed_{s}"]) for s in pos_sevs},
                avoided_by_severity={s: int(raw[f"avoided_{s}"]) for s in neg_sevs},
            )
            rows.append(
                SweepRow(
                    counts=counts,
                    metrics=Metrics(
                        ppv=float(raw["ppv"]) if raw["ppv"] else None,
                        sensitivity=(
                            float(raw["sensitivity"]) if raw["sensitivity"] else None
                        ),
                        specificity=(
                            float(raw["specificity"]) if raw["specificity"] else None
                        ),
                    ),
                )
            )
    if len(rows) != grid:
        raise EvaluationError(
            f"sweep artifact declares {grid} grid points but has {len(rows)} rows"
        )
    return ThresholdReport(
        task=task, subpopulation=subpop, grid_points=grid,
        rows=tuple(rows), config=config,
    )


def write_curves_csv(summary: CurveSummary, path: Union[str, Path],
                     config: dict | None = None) -> None:
    per_fold = summary.mode == MODE_PER_FOLD
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_config_line({**(config or {}), "kind": summary.kind,
                               "mode": summary.mode}))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow((["fold"] if per_fold else []) + ["threshold", "x", "y"])
        for key in summary.curves:
            for p in summary.curves[key]:
                row = [repr(p.threshold), repr(p.x), repr(p.y)]
                writer.writerow(([key] if per_fold else []) + row)


def curve_sidecar(summary: CurveSummary, config: dict | None = None) -> dict:
    doc = {
        "kind": summary.kind,
        "mode": summary.mode,
        "n_pos": summary.n_pos,
        "n_neg": summary.n_neg,
        # linear PR interpolation is known-optimistic; the label records it
        "area_method": "trapezoid_over_achieved_points",
        "config": config or {},
    }
    if summary.mode == MODE_POOLED:
        doc["area"] = summary.areas["all"]
    else:
        per_fold = {k: v for k, v in sorted(summary.areas.items(), key=lambda kv: int(kv[0]))}
        values = list(per_fold.values())
        doc["areas_per_fold"] = per_fold
        doc["area_mean"] = sum(values) / len(values)
        doc["area_min"] = min(values)
        doc["area_max"] = max(values)
    return doc
