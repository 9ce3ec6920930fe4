"""Ground-truth TAN models and ancestral sampling.

The real clinical data is private, so the pipeline is verified closed-loop:
sample from a known model, relearn, and compare. The published-cohort model
mirrors the published variable table and severity mix; the dependent truth
builder makes trees whose edge strengths are verified by exact enumeration.
"""

from __future__ import annotations

import bisect
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .dataset import CaseRecord, Dataset, Severity
from .errors import ModelError
from .model_io import FORMAT_NAME, float_repr, model_from_dict, model_to_dict
from .schema import (
    ROLE_CLASS,
    ROLE_DEMOGRAPHIC,
    ROLE_IMAGING,
    Schema,
    Variable,
)
from .tan import TanModel, TanStructure, orient_tree

# Published variable table: (name, role, states with case counts). The
# source table header counts 31 variables including the class, so one of
# its 31 printed feature rows is surplus; the near-empty "Mass Density Fat"
# row (9 of 5607) is the one omitted here to keep 30 features.
_present = lambda missing, present: (("missing", missing), ("present", present))
PUBLISHED_VARIABLE_TABLE: tuple[tuple[str, str, tuple[tuple[str, int], ...]], ...] = (
    ("Age Group", ROLE_DEMOGRAPHIC,
     (("Younger", 2091), ("Middle", 2141), ("Older", 1375))),
    ("Personal History", ROLE_DEMOGRAPHIC, (("No", 4697), ("Yes", 910))),
    ("Family History", ROLE_DEMOGRAPHIC,
     (("None", 3888), ("Minor", 1014), ("Major", 416), ("missing", 289))),
    ("BIRADS Category", ROLE_IMAGING,
     (("0", 440), ("1", 0), ("2", 2), ("3", 2), ("4", 4513), ("5", 650),
      ("7", 0), ("8", 0), ("9", 0))),
    ("Breast Density", ROLE_IMAGING,
     (("Predominantly Fatty", 484), ("Scattered Fibroglandular", 2164),
      ("Heterogeneously Dense", 2384), ("Extremely Dense", 574), ("missing", 1))),
    ("Mass Margin Circumscribed", ROLE_IMAGING, _present(4927, 680)),
    ("Mass Margin Obscured", ROLE_IMAGING, _present(5195, 412)),
    ("Mass Margin Microlobulated", ROLE_IMAGING, _present(5561, 46)),
    ("Mass Margin Spiculated", ROLE_IMAGING, _present(5116, 491)),
    ("Mass Margin Indistinct", ROLE_IMAGING, _present(4825, 782)),
    ("Mass Shape Oval", ROLE_IMAGING, _present(5065, 542)),
    ("Mass Shape Round", ROLE_IMAGING, _present(5425, 182)),
    ("Mass Shape Lobular", ROLE_IMAGING, _present(5167, 440)),
    ("Mass Shape Irregular", ROLE_IMAGING, _present(5012, 595)),
    ("Mass Density Low", ROLE_IMAGING, _present(5578, 29)),
    ("Mass Density Equal", ROLE_IMAGING, _present(5201, 406)),
    ("Mass Density High", ROLE_IMAGING, _present(5373, 234)),
    ("Calcification Morphology Round", ROLE_IMAGING, _present(5566, 41)),
    ("Calcification Morphology Punctate", ROLE_IMAGING, _present(5490, 117)),
    ("Calcification Morphology Amorphous", ROLE_IMAGING, _present(4950, 657)),
    ("Calcification Morphology Pleomorphic", ROLE_IMAGING, _present(4696, 911)),
    ("Calcification Morphology Fine Linear", ROLE_IMAGING, _present(5323, 284)),
    ("Calcification Distribution Diffuse", ROLE_IMAGING, _present(5434, 173)),
    ("Calcification Distribution Regional", ROLE_IMAGING, _present(5576, 31)),
    ("Calcification Distribution Clustered", ROLE_IMAGING, _present(3693, 1914)),
    ("Calcification Distribution Segmental", ROLE_IMAGING, _present(5521, 86)),
    ("Calcification Distribution Linear", ROLE_IMAGING, _present(5441, 166)),
    ("Asymmetric Density", ROLE_IMAGING, _present(5116, 491)),
    ("Architectural Distortion", ROLE_IMAGING, _present(5140, 467)),
    ("Palpable Lump", ROLE_IMAGING,
     (("missing", 1376), ("No", 2560), ("Yes", 1671))),
)

PUBLISHED_TOTAL_CASES = 5607
# Benign / LG / IntG / HG / Invasive case counts; 739 of the 2038 positives
# and 636 of the 3569 negatives are in the "Older" age group.
PUBLISHED_SEVERITY_COUNTS = {
    Severity.BENIGN: 3569, Severity.LG: 134, Severity.INTG: 179,
    Severity.HG: 216, Severity.INVASIVE: 1509,
}
_OLDER_NEG, _OLDER_POS = 636, 739


def published_schema() -> Schema:
    variables = [
        Variable(name=name, states=tuple(s for s, _ in states), role=role)
        for name, role, states in PUBLISHED_VARIABLE_TABLE
    ]
    variables.append(
        Variable(name="Malignancy", states=("negative", "positive"), role=ROLE_CLASS)
    )
    return Schema(variables=tuple(variables), class_variable_name="Malignancy")


@dataclass(frozen=True)
class GroundTruthModel:
    schema: Schema
    model: TanModel
    severity_mix: dict  # class index -> {Severity: probability}
    seed: int
    target_size: int


# ---------------------------------------------------------------------------
# Exact distributions implied by a model (enumeration along the tree)


def class_conditional_marginals(model: TanModel) -> list[np.ndarray]:
    """P(x_i | c) for every feature, shape (2, states_i) each."""
    marg: list[np.ndarray | None] = [None] * model.n_features
    for node in model.structure.topological_order():
        parent = model.structure.feature_parent[node]
        if parent is None:
            marg[node] = model.cpts[node]
        else:
            marg[node] = np.einsum("cp,cps->cs", marg[parent], model.cpts[node])
    return marg  # type: ignore[return-value]


def exact_marginals(model: TanModel) -> list[np.ndarray]:
    """Unconditional P(x_i) per feature."""
    cond = class_conditional_marginals(model)
    return [model.class_prior @ m for m in cond]


def exact_edge_cmi(model: TanModel, child: int) -> float:
    """I(X_child ; X_parent | C) implied by the model parameters."""
    parent = model.structure.feature_parent[child]
    if parent is None:
        raise ModelError(f"feature {child} is the root; it has no tree edge")
    cond = class_conditional_marginals(model)
    pm = cond[parent]  # (2, sp)
    cm = cond[child]  # (2, sc)
    joint = model.class_prior[:, None, None] * pm[:, :, None] * model.cpts[child]
    # ratio P(xp,xc|c) / (P(xp|c) P(xc|c)) reduces to cpt / P(xc|c)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(model.cpts[child] / cm[:, None, :])
    mask = joint > 0
    return float(np.sum(joint[mask] * log_ratio[mask]))


# ---------------------------------------------------------------------------
# Sampling


def _draw_states(rng: np.random.Generator, probs: np.ndarray, count: int) -> np.ndarray:
    """Inverse-CDF draw of `count` categorical samples."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(count), side="right").astype(np.int64)


def sample_dataset(truth: GroundTruthModel, n: int, seed: int) -> Dataset:
    """Ancestral sampling: class from the prior, then features down the tree.

    Severities come from the class-conditional mixing table, so both
    classification tasks stay exercisable on the same draw. Each case gets
    its own synthetic patient.
    """
    if n < 1:
        raise ModelError(f"sample size must be >= 1, got {n}")
    model = truth.model
    rng = np.random.default_rng(seed)
    classes = _draw_states(rng, model.class_prior, n)

    X = np.zeros((n, model.n_features), dtype=np.int64)
    for node in model.structure.topological_order():
        parent = model.structure.feature_parent[node]
        for c in (0, 1):
            if parent is None:
                mask = classes == c
                X[mask, node] = _draw_states(rng, model.cpts[node][c], int(mask.sum()))
            else:
                for sp in range(model.cpts[node].shape[1]):
                    mask = (classes == c) & (X[:, parent] == sp)
                    X[mask, node] = _draw_states(
                        rng, model.cpts[node][c, sp], int(mask.sum())
                    )

    severities = np.zeros(n, dtype=np.int64)
    for c in (0, 1):
        mix = truth.severity_mix[c]
        sev_ids = np.array(sorted(int(s) for s in mix), dtype=np.int64)
        probs = np.array([mix[Severity(s)] for s in sev_ids])
        mask = classes == c
        severities[mask] = sev_ids[_draw_states(rng, probs, int(mask.sum()))]

    base = dt.date(2005, 1, 1)
    records = tuple(
        CaseRecord(
            patient_id=f"P{i:06d}",
            exam_date=base + dt.timedelta(days=int(i % 3653)),
            states=tuple(int(s) for s in X[i]),
            outcome=Severity(int(severities[i])),
        )
        for i in range(n)
    )
    return Dataset(schema=truth.schema, records=records)


# ---------------------------------------------------------------------------
# Model builders


def _random_tree_structure(n_features: int, rng: np.random.Generator) -> TanStructure:
    """Uniform random labeled tree (Prüfer sequence), oriented from feature 0."""
    if n_features == 1:
        return TanStructure(root_feature=0, feature_parent=(None,))
    if n_features == 2:
        return orient_tree([(0, 1)], root=0, n_features=2)
    prufer = rng.integers(0, n_features, size=n_features - 2)
    degree = np.ones(n_features, dtype=np.int64)
    for v in prufer:
        degree[v] += 1
    edges = []
    leaves = sorted(int(v) for v in range(n_features) if degree[v] == 1)
    for v in prufer:
        leaf = leaves.pop(0)
        edges.append((min(leaf, int(v)), max(leaf, int(v))))
        degree[v] -= 1
        if degree[v] == 1:
            bisect.insort(leaves, int(v))
    edges.append((leaves[0], leaves[1]))
    return orient_tree(edges, root=0, n_features=n_features)


def _normalize_rows(table: np.ndarray) -> np.ndarray:
    return table / table.sum(axis=-1, keepdims=True)


def make_published_cohort_model(seed: int) -> GroundTruthModel:
    """Truth model over the published 30-variable table.

    Feature marginals track the published state counts (the age-group
    marginal is exact), the class prior and severity mix match the
    published case mix, and mild seeded tilts create real tree dependence.
    """
    schema = published_schema()
    rng = np.random.default_rng(seed)
    structure = _random_tree_structure(schema.n_features, rng)

    n_pos = sum(
        c for s, c in PUBLISHED_SEVERITY_COUNTS.items() if s != Severity.BENIGN
    )
    n_neg = PUBLISHED_SEVERITY_COUNTS[Severity.BENIGN]
    prior = np.array([n_neg, n_pos], dtype=np.float64) / PUBLISHED_TOTAL_CASES

    marginals = [
        np.array([c for _, c in states], dtype=np.float64) / PUBLISHED_TOTAL_CASES
        for _, _, states in PUBLISHED_VARIABLE_TABLE
    ]

    cpts: list[np.ndarray] = []
    for i, var in enumerate(schema.features):
        parent = structure.feature_parent[i]
        m = marginals[i]
        if var.name == "Age Group":
            # Split each age state across classes to hit the published
            # Older-by-class counts exactly; Younger/Middle split pro rata.
            non_older_neg = n_neg - _OLDER_NEG
            non_older_pos = n_pos - _OLDER_POS
            non_older = non_older_neg + non_older_pos
            younger, middle = (
                dict(PUBLISHED_VARIABLE_TABLE[0][2])["Younger"],
                dict(PUBLISHED_VARIABLE_TABLE[0][2])["Middle"],
            )
            neg_counts = np.array(
                [younger * non_older_neg / non_older,
                 middle * non_older_neg / non_older, _OLDER_NEG]
            )
            pos_counts = np.array(
                [younger * non_older_pos / non_older,
                 middle * non_older_pos / non_older, _OLDER_POS]
            )
            table = np.stack([neg_counts / n_neg, pos_counts / n_pos])
        elif parent is None:
            tilt = np.exp(rng.normal(0.0, 0.25, size=(2, len(m))))
            table = _normalize_rows(m[None, :] * tilt)
        else:
            sp = len(marginals[parent])
            tilt = np.exp(rng.normal(0.0, 0.25, size=(2, sp, len(m))))
            table = _normalize_rows(m[None, None, :] * tilt)
        cpts.append(table)

    pos_mix = {
        s: PUBLISHED_SEVERITY_COUNTS[s] / n_pos
        for s in Severity
        if s != Severity.BENIGN
    }
    model = TanModel(
        structure=structure, class_prior=prior, cpts=tuple(cpts),
        smoothing_alpha=0.0,
    )
    return GroundTruthModel(
        schema=schema, model=model,
        severity_mix={0: {Severity.BENIGN: 1.0}, 1: pos_mix},
        seed=seed, target_size=PUBLISHED_TOTAL_CASES,
    )


def make_dependent_truth(
    n_features: int = 10, n_states: int = 3, seed: int = 0,
    min_edge_cmi: float = 0.05,
) -> GroundTruthModel:
    """Random tree truth whose every tree edge carries strong dependence.

    Child tables are peaked on a parent-shifted state, then every edge's
    conditional mutual information is verified by exact enumeration against
    the requested floor.
    """
    rng = np.random.default_rng(seed)
    structure = _random_tree_structure(n_features, rng)
    prior = np.array([0.5, 0.5]) + rng.uniform(-0.1, 0.1) * np.array([1.0, -1.0])

    variables = tuple(
        Variable(
            name=f"F{i:02d}",
            states=tuple(f"s{k}" for k in range(n_states)),
            role=ROLE_IMAGING,
        )
        for i in range(n_features)
    ) + (Variable(name="Class", states=("negative", "positive"), role=ROLE_CLASS),)
    schema = Schema(variables=variables, class_variable_name="Class")

    peak = 0.7
    rest = (1.0 - peak) / (n_states - 1)
    cpts: list[np.ndarray] = []
    for i in range(n_features):
        parent = structure.feature_parent[i]
        if parent is None:
            table = _normalize_rows(
                np.exp(rng.normal(0.0, 0.5, size=(2, n_states)))
            )
        else:
            table = np.full((2, n_states, n_states), rest)
            for c in (0, 1):
                for sp in range(n_states):
                    table[c, sp, (sp + c) % n_states] = peak
            jitter = np.exp(rng.normal(0.0, 0.1, size=table.shape))
            table = _normalize_rows(table * jitter)
        cpts.append(table)

    model = TanModel(
        structure=structure, class_prior=prior, cpts=tuple(cpts),
        smoothing_alpha=0.0,
    )
    for child in range(n_features):
        if structure.feature_parent[child] is None:
            continue
        cmi = exact_edge_cmi(model, child)
        if cmi < min_edge_cmi:
            raise ModelError(
                f"constructed edge into feature {child} has CMI {cmi:.4f} "
                f"below the floor {min_edge_cmi}"
            )
    # Benign-only negatives keep the "bm"-derived class identical to the
    # truth class; the LG share still exercises the "b1m1" split.
    mix = {
        0: {Severity.BENIGN: 1.0},
        1: {Severity.LG: 0.1, Severity.INTG: 0.2, Severity.HG: 0.2,
            Severity.INVASIVE: 0.5},
    }
    return GroundTruthModel(
        schema=schema, model=model, severity_mix=mix, seed=seed, target_size=0,
    )


def structure_recovery_score(learned: TanStructure, truth: TanStructure) -> float:
    """Fraction of the truth's undirected tree edges present in the learned tree."""
    if learned.n_features != truth.n_features:
        raise ModelError(
            f"feature sets differ: {learned.n_features} vs {truth.n_features}"
        )
    truth_edges = truth.undirected_edges()
    if not truth_edges:
        return 1.0
    return len(truth_edges & learned.undirected_edges()) / len(truth_edges)


# ---------------------------------------------------------------------------
# Ground-truth model files (model format plus a generation block)


def save_ground_truth(truth: GroundTruthModel, path: Union[str, Path],
                      task: str = "bm", config: dict | None = None) -> None:
    doc = model_to_dict(truth.model, truth.schema, task)
    doc["generation"] = {
        "seed": truth.seed,
        "target_size": truth.target_size,
        "severity_mix": {
            ("negative" if c == 0 else "positive"): {
                sev.label: float_repr(p) for sev, p in mix.items()
            }
            for c, mix in truth.severity_mix.items()
        },
    }
    doc["schema"] = truth.schema.to_dict()
    if config is not None:
        doc["config"] = config
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ground_truth(path: Union[str, Path]) -> GroundTruthModel:
    from .schema import schema_from_dict

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_NAME or "generation" not in doc:
        raise ModelError("not a ground-truth model document")
    model, _ = model_from_dict(doc)
    gen = doc["generation"]
    mix = {
        (0 if name == "negative" else 1): {
            Severity.from_label(lbl): float(p) for lbl, p in entries.items()
        }
        for name, entries in gen["severity_mix"].items()
    }
    return GroundTruthModel(
        schema=schema_from_dict(doc["schema"]),
        model=model,
        severity_mix=mix,
        seed=int(gen["seed"]),
        target_size=int(gen["target_size"]),
    )
