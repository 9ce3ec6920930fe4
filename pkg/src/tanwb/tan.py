"""Tree-augmented naive Bayes: structure learning, parameters, inference.

The class variable is an implicit parent of every feature; on top of that,
features are connected by a maximum-weight spanning tree whose edge weights
are conditional mutual information values computed from raw counts. Each
feature therefore has at most one feature parent. Parameters are additive-
smoothed conditional probability tables; inference runs in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, class_array
from .errors import EvaluationError, ModelError

WEIGHT_CMI = "cmi"  # conditional mutual information given the class
WEIGHT_MI = "mi"  # plain mutual information, for comparison runs
N_CLASSES = 2


@dataclass(frozen=True)
class CountCube:
    """Exact joint counts over the class and every feature pair.

    pair[(i, j)] with i < j has shape (2, states_i, states_j); feature[i]
    has shape (2, states_i); class_counts has shape (2,).
    """

    n_features: int
    states: tuple[int, ...]
    total: int
    class_counts: np.ndarray
    feature: tuple[np.ndarray, ...]
    pair: Mapping[tuple[int, int], np.ndarray]

    def pair_tensor(self, i: int, j: int) -> np.ndarray:
        """Joint count tensor N[c, x_i, x_j] for any i != j."""
        if i < j:
            return self.pair[(i, j)]
        return np.swapaxes(self.pair[(j, i)], 1, 2)


def tabulate_counts(dataset: Dataset, task: str) -> CountCube:
    if not dataset.records:
        raise EvaluationError("cannot tabulate an empty dataset")
    X = dataset.feature_matrix()
    y = class_array(dataset, task)
    return tabulate_counts_arrays(X, y, [v.n_states for v in dataset.schema.features])


def tabulate_counts_arrays(
    X: np.ndarray, y: np.ndarray, n_states: Sequence[int]
) -> CountCube:
    n, f = X.shape
    states = tuple(int(s) for s in n_states)
    class_counts = np.bincount(y, minlength=N_CLASSES).astype(np.int64)
    feature = tuple(
        np.bincount(y * states[i] + X[:, i], minlength=N_CLASSES * states[i])
        .reshape(N_CLASSES, states[i])
        .astype(np.int64)
        for i in range(f)
    )
    pair: dict[tuple[int, int], np.ndarray] = {}
    for i in range(f):
        yi = (y * states[i] + X[:, i])
        for j in range(i + 1, f):
            flat = np.bincount(
                yi * states[j] + X[:, j], minlength=N_CLASSES * states[i] * states[j]
            )
            pair[(i, j)] = flat.reshape(N_CLASSES, states[i], states[j]).astype(np.int64)
    return CountCube(
        n_features=f,
        states=states,
        total=n,
        class_counts=class_counts,
        feature=feature,
        pair=pair,
    )


def conditional_mutual_information(counts: CountCube, i: int, j: int) -> float:
    """I(X_i ; X_j | C) in nats from raw counts, clamped at zero.

    Cells with zero joint count contribute nothing (0 log 0 = 0); the
    result is exactly symmetric in (i, j).
    """
    if i == j:
        raise EvaluationError("conditional MI needs two distinct features")
    a, b = (i, j) if i < j else (j, i)
    nij = counts.pair[(a, b)].astype(np.float64)  # (2, s_a, s_b)
    ni = nij.sum(axis=2, keepdims=True)
    nj = nij.sum(axis=1, keepdims=True)
    nc = counts.class_counts.astype(np.float64).reshape(N_CLASSES, 1, 1)
    mask = nij > 0
    # P(c,xi,xj) log [P(xi,xj|c) / (P(xi|c) P(xj|c))] == (n_ij/N) log(n_ij n_c / (n_i n_j))
    ratio = nij[mask] * np.broadcast_to(nc, nij.shape)[mask]
    ratio /= np.broadcast_to(ni, nij.shape)[mask] * np.broadcast_to(nj, nij.shape)[mask]
    value = float(np.sum(nij[mask] * np.log(ratio)) / counts.total)
    return max(value, 0.0)


def mutual_information(counts: CountCube, i: int, j: int) -> float:
    """Plain I(X_i ; X_j) in nats, ignoring the class."""
    if i == j:
        raise EvaluationError("mutual information needs two distinct features")
    a, b = (i, j) if i < j else (j, i)
    nij = counts.pair[(a, b)].sum(axis=0).astype(np.float64)  # (s_a, s_b)
    ni = nij.sum(axis=1, keepdims=True)
    nj = nij.sum(axis=0, keepdims=True)
    n = float(counts.total)
    mask = nij > 0
    ratio = nij[mask] * n
    ratio /= np.broadcast_to(ni, nij.shape)[mask] * np.broadcast_to(nj, nij.shape)[mask]
    value = float(np.sum(nij[mask] * np.log(ratio)) / n)
    return max(value, 0.0)


def pairwise_weights(counts: CountCube, kind: str = WEIGHT_CMI) -> np.ndarray:
    weight_fn = {WEIGHT_CMI: conditional_mutual_information, WEIGHT_MI: mutual_information}
    try:
        fn = weight_fn[kind]
    except KeyError:
        raise EvaluationError(f"unknown weight kind {kind!r}") from None
    f = counts.n_features
    w = np.zeros((f, f))
    for i in range(f):
        for j in range(i + 1, f):
            w[i, j] = w[j, i] = fn(counts, i, j)
    return w


def max_weight_spanning_tree(weights: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-weight spanning tree of the complete graph, Prim-style from node 0.

    Ties break toward the lexicographically smaller (min, max) edge, so the
    result is deterministic across runs and platforms. Returns the edge list
    sorted canonically; one feature yields no edges.
    """
    f = weights.shape[0]
    if weights.shape != (f, f):
        raise EvaluationError("weight matrix must be square")
    if not np.all(np.isfinite(weights)):
        raise EvaluationError("weights must be finite")
    if f == 1:
        return []
    in_tree = [0]
    out = set(range(1, f))
    edges = []
    for _ in range(f - 1):
        best = None
        for u in in_tree:
            for v in out:
                cand = (weights[u, v], (min(u, v), max(u, v)))
                if best is None or cand[0] > best[0] or (
                    cand[0] == best[0] and cand[1] < best[1]
                ):
                    best = cand
        edge = best[1]
        edges.append(edge)
        v = edge[1] if edge[0] in in_tree else edge[0]
        in_tree.append(v)
        out.remove(v)
    return sorted(edges)


@dataclass(frozen=True)
class TanStructure:
    root_feature: int
    feature_parent: tuple[int | None, ...]  # parent feature index, None for root

    @property
    def n_features(self) -> int:
        return len(self.feature_parent)

    def undirected_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(
            (min(i, p), max(i, p))
            for i, p in enumerate(self.feature_parent)
            if p is not None
        )

    def topological_order(self) -> list[int]:
        children: dict[int, list[int]] = {i: [] for i in range(self.n_features)}
        for i, p in enumerate(self.feature_parent):
            if p is not None:
                children[p].append(i)
        order, queue = [], [self.root_feature]
        while queue:
            node = queue.pop(0)
            order.append(node)
            queue.extend(sorted(children[node]))
        return order


def orient_tree(
    edges: Sequence[tuple[int, int]], root: int, n_features: int
) -> TanStructure:
    """Direct a spanning tree's edges away from the root (breadth-first)."""
    if len(edges) != n_features - 1:
        raise EvaluationError(
            f"{len(edges)} edges cannot form a spanning tree over {n_features} features"
        )
    adj: dict[int, list[int]] = {i: [] for i in range(n_features)}
    for u, v in edges:
        if not (0 <= u < n_features and 0 <= v < n_features):
            raise EvaluationError(f"edge ({u}, {v}) references an unknown feature")
        adj[u].append(v)
        adj[v].append(u)
    parent: list[int | None] = [None] * n_features
    seen = {root}
    queue = [root]
    while queue:
        node = queue.pop(0)
        for nbr in sorted(adj[node]):
            if nbr not in seen:
                seen.add(nbr)
                parent[nbr] = node
                queue.append(nbr)
    if len(seen) != n_features:
        raise EvaluationError("edges do not connect all features (not a tree)")
    return TanStructure(root_feature=root, feature_parent=tuple(parent))


def learn_structure(
    dataset: Dataset, task: str, weight_kind: str = WEIGHT_CMI
) -> TanStructure:
    """Full structure step: counts -> pairwise weights -> MST -> orientation.

    The root is the first feature in schema order; root choice does not
    change the undirected model class.
    """
    counts = tabulate_counts(dataset, task)
    return learn_structure_from_counts(counts, weight_kind)


def learn_structure_from_counts(
    counts: CountCube, weight_kind: str = WEIGHT_CMI
) -> TanStructure:
    if counts.n_features < 1:
        raise EvaluationError("need at least one feature")
    if counts.n_features == 1:
        return TanStructure(root_feature=0, feature_parent=(None,))
    weights = pairwise_weights(counts, weight_kind)
    edges = max_weight_spanning_tree(weights)
    return orient_tree(edges, root=0, n_features=counts.n_features)


@dataclass(frozen=True)
class TanModel:
    """Immutable TAN classifier: prior, structure, and smoothed CPTs.

    Root-feature CPTs have shape (2, states); a child with parent p has
    shape (2, states_parent, states_child), indexed [class, parent state,
    own state]. Rows with no data and zero smoothing are NaN and flag the
    model invalid for inference paths that touch them.
    """

    structure: TanStructure
    class_prior: np.ndarray
    cpts: tuple[np.ndarray, ...]
    smoothing_alpha: float
    has_undefined_rows: bool = False
    _log_prior: np.ndarray = field(init=False, repr=False, compare=False)
    _log_cpts: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_prior", np.log(self.class_prior))
            object.__setattr__(
                self, "_log_cpts", tuple(np.log(t) for t in self.cpts)
            )

    @property
    def n_features(self) -> int:
        return self.structure.n_features

    def n_states(self, feature: int) -> int:
        return self.cpts[feature].shape[-1]


def estimate_cpts(
    dataset: Dataset, structure: TanStructure, alpha: float = 0.5, task: str = "bm"
) -> TanModel:
    counts = tabulate_counts(dataset, task)
    return estimate_cpts_from_counts(counts, structure, alpha)


def estimate_cpts_from_counts(
    counts: CountCube, structure: TanStructure, alpha: float
) -> TanModel:
    """Additive smoothing: (N[s, parents] + alpha) / (N[parents] + alpha * states).

    With alpha = 0 an unseen parent configuration leaves the row undefined;
    the model records the fact and inference fails only if it hits one.
    """
    if alpha < 0:
        raise ModelError(f"smoothing alpha must be nonnegative, got {alpha}")
    n = counts.total
    prior = (counts.class_counts + alpha) / (n + alpha * N_CLASSES)
    undefined = bool(n == 0 and alpha == 0)

    cpts: list[np.ndarray] = []
    for i in range(counts.n_features):
        parent = structure.feature_parent[i]
        si = counts.states[i]
        if parent is None:
            num = counts.feature[i] + alpha  # (2, s_i)
            den = counts.class_counts.astype(np.float64).reshape(N_CLASSES, 1) + alpha * si
        else:
            joint = counts.pair_tensor(i, parent)  # (2, s_i, s_p)
            joint = np.swapaxes(joint, 1, 2)  # (2, s_p, s_i)
            num = joint + alpha
            den = joint.sum(axis=2, keepdims=True) + alpha * si
        with np.errstate(invalid="ignore", divide="ignore"):
            table = num / den
        bad = den == 0
        if np.any(bad):
            undefined = True
            table = np.where(np.broadcast_to(bad, table.shape), np.nan, table)
        cpts.append(table)
    return TanModel(
        structure=structure,
        class_prior=prior,
        cpts=tuple(cpts),
        smoothing_alpha=float(alpha),
        has_undefined_rows=undefined,
    )


def _check_record(model: TanModel, record: Sequence[int]) -> None:
    if len(record) != model.n_features:
        raise ModelError(
            f"record has {len(record)} states, model expects {model.n_features}"
        )
    for i, s in enumerate(record):
        if not 0 <= s < model.n_states(i):
            raise ModelError(
                f"feature {i}: state index {s} out of range [0, {model.n_states(i)})"
            )


def posterior(model: TanModel, record: Sequence[int]) -> float:
    """P(positive class | record), computed in log space and normalized."""
    _check_record(model, record)
    log_p = model._log_prior.copy()
    for i in range(model.n_features):
        parent = model.structure.feature_parent[i]
        table = model._log_cpts[i]
        if parent is None:
            log_p += table[:, record[i]]
        else:
            log_p += table[:, record[parent], record[i]]
    if np.any(np.isnan(log_p)):
        raise ModelError(
            "record hits an undefined CPT row (unsmoothed, unseen parent configuration)"
        )
    if np.all(np.isinf(log_p)):
        raise ModelError("record has zero probability under both classes")
    return float(np.exp(log_p[1] - np.logaddexp(log_p[0], log_p[1])))


def posterior_batch(model: TanModel, X: np.ndarray) -> np.ndarray:
    """Vectorized posterior over rows of a state-index matrix."""
    n = X.shape[0]
    if X.shape[1] != model.n_features:
        raise ModelError(
            f"matrix has {X.shape[1]} features, model expects {model.n_features}"
        )
    log_p = np.tile(model._log_prior, (n, 1))
    for i in range(model.n_features):
        parent = model.structure.feature_parent[i]
        table = model._log_cpts[i]
        if parent is None:
            log_p += table[:, X[:, i]].T
        else:
            log_p += table[:, X[:, parent], X[:, i]].T
    if np.any(np.isnan(log_p)):
        raise ModelError(
            "some record hits an undefined CPT row (unsmoothed, unseen parent configuration)"
        )
    with np.errstate(invalid="ignore"):
        result = np.exp(log_p[:, 1] - np.logaddexp(log_p[:, 0], log_p[:, 1]))
    if np.any(np.isnan(result)):
        raise ModelError("some record has zero probability under both classes")
    return result


def fit(dataset: Dataset, task: str, alpha: float = 0.5,
        weight_kind: str = WEIGHT_CMI) -> TanModel:
    """Learn structure and parameters in one pass over the data."""
    counts = tabulate_counts(dataset, task)
    structure = learn_structure_from_counts(counts, weight_kind)
    return estimate_cpts_from_counts(counts, structure, alpha)
