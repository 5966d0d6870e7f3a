"""LambdaMART ranker built from scratch.

Pairwise lambda gradients scaled by the NDCG@k change of swapping a pair
drive gradient-boosted regression trees. Trees grow best-first with
second-order (Newton) split gains and leaf values, the construction used
by modern boosting libraries. Per-feature split gains are accumulated
across all trees as the model's feature importance.

Everything is deterministic for a fixed config seed: no subsampling by
default, stable sorts, and fixed tie-breaking throughout.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import FEATURE_NAMES, NUM_FEATURES, RankedCandidate, RankingList
from .errors import ModelFormatError, SchemaError, TrainingError

_EPS = 1e-10
_LEAF_CLIP = 10.0
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RankerConfig:
    num_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_per_leaf: int = 20
    sigma: float = 1.0
    ndcg_truncation: int = 5
    seed: int = 0
    # Both default to 1.0: determinism first, subsampling opt-in.
    feature_fraction: float = 1.0
    row_fraction: float = 1.0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if self.ndcg_truncation < 1:
            raise ValueError("ndcg_truncation must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")
        if not 0.0 < self.row_fraction <= 1.0:
            raise ValueError("row_fraction must be in (0, 1]")


@dataclass
class LambdaStats:
    """First- and second-order statistics for one ranking list."""

    lambdas: np.ndarray
    hessians: np.ndarray


def _dcg(gains_in_order: Sequence[int], k: int) -> float:
    return sum(
        (2.0 ** int(g) - 1.0) / math.log2(i + 2) for i, g in enumerate(gains_in_order[:k])
    )


def compute_lambdas(
    scores: Sequence[float],
    gains: Sequence[int],
    sigma: float = 1.0,
    k: int = 5,
) -> LambdaStats:
    """Pairwise lambdas and hessians for one list under the current scores.

    For each pair (i, j) with gain_i > gain_j:
      rho      = 1 / (1 + exp(sigma * (s_i - s_j)))
      lambda_i += sigma * rho * |dNDCG@k|   (and lambda_j gets the negative)
      hess     += sigma^2 * rho * (1 - rho) * |dNDCG@k|  on both items
    where |dNDCG@k| is the NDCG@k change from swapping i and j in the
    current score-sorted order (score ties break by candidate index).
    Lambdas over a list always sum to zero. Positive lambda means the item
    should move up.
    """
    scores = np.asarray(scores, dtype=float)
    gains = [int(g) for g in gains]
    n = len(scores)
    lambdas = np.zeros(n)
    hessians = np.zeros(n)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    position = [0] * n
    for rank, i in enumerate(order, start=1):
        position[i] = rank
    discount = [1.0 / math.log2(p + 1) if p <= k else 0.0 for p in position]
    ideal = _dcg(sorted(gains, reverse=True), k)
    if ideal <= 0.0:
        return LambdaStats(lambdas, hessians)
    for i in range(n):
        for j in range(n):
            if gains[i] <= gains[j]:
                continue
            delta = (
                abs((2.0 ** gains[i] - 2.0 ** gains[j]) * (discount[i] - discount[j]))
                / ideal
            )
            x = sigma * (scores[i] - scores[j])
            rho = 0.5 * (1.0 - math.tanh(0.5 * x))  # stable 1/(1+exp(x))
            lam = sigma * rho * delta
            lambdas[i] += lam
            lambdas[j] -= lam
            hess = sigma * sigma * rho * (1.0 - rho) * delta
            hessians[i] += hess
            hessians[j] += hess
    return LambdaStats(lambdas, hessians)


@dataclass
class TreeNode:
    """Internal node when feature >= 0, leaf otherwise."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    gain: float = 0.0
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class RegressionTree:
    nodes: list[TreeNode] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node_idx, rows = stack.pop()
            node = self.nodes[node_idx]
            if node.is_leaf:
                out[rows] = node.value
            else:
                go_left = X[rows, node.feature] <= node.threshold
                stack.append((node.left, rows[go_left]))
                stack.append((node.right, rows[~go_left]))
        return out

    def split_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes if not n.is_leaf]


def fit_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    config: RankerConfig,
    candidate_features: Sequence[int] | None = None,
) -> RegressionTree:
    """Grow one regression tree, best-first, to at most max_leaves leaves.

    Split gain is G_L^2/(H_L+eps) + G_R^2/(H_R+eps) - G^2/(H+eps) over the
    gradient/hessian sums; candidate thresholds are midpoints between
    consecutive distinct sorted feature values. Splits with non-positive
    gain or a child smaller than min_samples_per_leaf are rejected. Leaf
    values are the Newton step -G/(H+eps), clipped to +-10.
    """
    X = np.asarray(X, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    n = len(grad)
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    if not np.any(hess):
        return RegressionTree([TreeNode(value=0.0)])

    min_leaf = config.min_samples_per_leaf

    def leaf_value(rows: np.ndarray) -> float:
        g, h = grad[rows].sum(), hess[rows].sum()
        return float(np.clip(-g / (h + _EPS), -_LEAF_CLIP, _LEAF_CLIP))

    def best_split(rows: np.ndarray):
        if len(rows) < 2 * min_leaf:
            return None
        g, h = grad[rows], hess[rows]
        g_total, h_total = g.sum(), h.sum()
        parent = g_total * g_total / (h_total + _EPS)
        best = None
        left_sizes = np.arange(1, len(rows))
        for f in candidate_features:
            x = X[rows, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            if xs[0] == xs[-1]:
                continue  # constant column, zero gain
            cg = np.cumsum(g[order])[:-1]
            ch = np.cumsum(h[order])[:-1]
            valid = (
                (xs[:-1] < xs[1:])
                & (left_sizes >= min_leaf)
                & (len(rows) - left_sizes >= min_leaf)
            )
            if not valid.any():
                continue
            gains = (
                cg * cg / (ch + _EPS)
                + (g_total - cg) ** 2 / ((h_total - ch) + _EPS)
                - parent
            )
            gains = np.where(valid, gains, -np.inf)
            pos = int(np.argmax(gains))
            gain = float(gains[pos])
            if gain <= 0.0:
                continue
            # Strict > keeps the lowest feature index on ties.
            if best is None or gain > best[0]:
                best = (gain, int(f), float((xs[pos] + xs[pos + 1]) / 2.0))
        if best is None:
            return None
        gain, feature, threshold = best
        mask = X[rows, feature] <= threshold
        return gain, feature, threshold, rows[mask], rows[~mask]

    nodes = [TreeNode()]
    rows_of = {0: np.arange(n)}
    tick = itertools.count()
    frontier: list = []
    split = best_split(rows_of[0])
    if split is not None:
        heapq.heappush(frontier, (-split[0], next(tick), 0, split))
    leaves = 1
    while frontier and leaves < config.max_leaves:
        _, _, node_idx, (gain, feature, threshold, lrows, rrows) = heapq.heappop(frontier)
        left_idx, right_idx = len(nodes), len(nodes) + 1
        nodes.extend([TreeNode(), TreeNode()])
        rows_of[left_idx], rows_of[right_idx] = lrows, rrows
        node = nodes[node_idx]
        node.feature, node.threshold, node.gain = feature, threshold, gain
        node.left, node.right = left_idx, right_idx
        leaves += 1
        for child in (left_idx, right_idx):
            split = best_split(rows_of[child])
            if split is not None:
                heapq.heappush(frontier, (-split[0], next(tick), child, split))
    for idx, node in enumerate(nodes):
        if node.is_leaf:
            node.value = leaf_value(rows_of[idx])
    return RegressionTree(nodes)


@dataclass
class RankingModel:
    trees: list[RegressionTree]
    learning_rate: float
    schema: list[str]
    cumulative_gain: np.ndarray
    config: RankerConfig


def _mean_ndcg(scores: np.ndarray, slices, gains: np.ndarray, k: int) -> float:
    values = []
    for sl in slices:
        s, g = scores[sl], gains[sl]
        order = sorted(range(len(s)), key=lambda i: (-s[i], i))
        predicted = [int(g[i]) for i in order]
        ideal = _dcg(sorted(predicted, reverse=True), k)
        values.append(_dcg(predicted, k) / ideal if ideal > 0 else 1.0)
    return float(np.mean(values))


def train(
    train_lists: Sequence[RankingList],
    config: RankerConfig,
    schema: Sequence[str] | None = None,
    round_callback: Callable[[int, dict[int, float]], None] | None = None,
) -> RankingModel:
    """Boost `num_trees` rounds: per-list lambdas, one tree on rows pooled.

    Scores start at 0 and move by learning_rate times each tree's output.
    The tree is fit to the negated lambdas (loss gradients), so the Newton
    leaf -G/(H+eps) steps scores toward higher NDCG. When round_callback
    is given it receives (round_index, {k: training NDCG@k}) each round.
    """
    if not train_lists:
        raise TrainingError("training set is empty")
    if any(rl.features is None for rl in train_lists):
        raise TrainingError("training lists are missing feature matrices")
    X = np.vstack([rl.features for rl in train_lists])
    gains = np.array(
        [c.gain for rl in train_lists for c in rl.candidates], dtype=int
    )
    slices = []
    start = 0
    for rl in train_lists:
        slices.append(slice(start, start + len(rl.candidates)))
        start += len(rl.candidates)

    n_rows, n_features = X.shape
    if schema is None:
        if n_features == NUM_FEATURES:
            schema = list(FEATURE_NAMES)
        else:
            schema = [f"feature_{i}" for i in range(n_features)]
    elif len(schema) != n_features:
        raise SchemaError(
            f"schema has {len(schema)} names but features have width {n_features}"
        )

    rng = np.random.default_rng(config.seed)
    scores = np.zeros(n_rows)
    trees: list[RegressionTree] = []
    cumulative_gain = np.zeros(n_features)

    for round_idx in range(config.num_trees):
        grad = np.empty(n_rows)
        hess = np.empty(n_rows)
        for sl in slices:
            stats = compute_lambdas(
                scores[sl], gains[sl], config.sigma, config.ndcg_truncation
            )
            grad[sl] = -stats.lambdas
            hess[sl] = stats.hessians

        features = None
        if config.feature_fraction < 1.0:
            n_pick = max(1, int(config.feature_fraction * n_features))
            features = np.sort(rng.choice(n_features, size=n_pick, replace=False))
        if config.row_fraction < 1.0:
            n_pick = max(2, int(config.row_fraction * n_rows))
            rows = np.sort(rng.choice(n_rows, size=n_pick, replace=False))
            tree = fit_tree(X[rows], grad[rows], hess[rows], config, features)
        else:
            tree = fit_tree(X, grad, hess, config, features)

        scores += config.learning_rate * tree.predict(X)
        for node in tree.split_nodes():
            cumulative_gain[node.feature] += node.gain
        trees.append(tree)
        if round_callback is not None:
            round_callback(
                round_idx,
                {k: _mean_ndcg(scores, slices, gains, k) for k in (1, 5)},
            )

    return RankingModel(
        trees=trees,
        learning_rate=config.learning_rate,
        schema=list(schema),
        cumulative_gain=cumulative_gain,
        config=config,
    )


def predict_scores(model: RankingModel, rows: np.ndarray) -> np.ndarray:
    """Sum of learning_rate-weighted leaf values over all trees."""
    X = np.asarray(rows, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != len(model.schema):
        raise SchemaError(
            f"feature rows have width {X.shape[1]}, model expects {len(model.schema)}"
        )
    out = np.zeros(len(X))
    for tree in model.trees:
        out += model.learning_rate * tree.predict(X)
    return out[0] if single else out


def rank_candidates(
    model: RankingModel, ranking_list: RankingList
) -> list[tuple[RankedCandidate, float]]:
    """Candidates sorted by descending score, ties by ascending grant_id."""
    scores = predict_scores(model, ranking_list.features)
    paired = list(zip(ranking_list.candidates, scores))
    paired.sort(key=lambda cs: (-cs[1], cs[0].grant_id))
    return [(c, float(s)) for c, s in paired]


def feature_importance(model: RankingModel) -> list[tuple[str, float]]:
    """(name, total split gain) pairs, descending; zero-gain features last."""
    indexed = sorted(
        range(len(model.schema)), key=lambda i: (-model.cumulative_gain[i], i)
    )
    return [(model.schema[i], float(model.cumulative_gain[i])) for i in indexed]


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "gain": node.gain,
        "left": node.left,
        "right": node.right,
    }


def _node_from_dict(obj: dict) -> TreeNode:
    if "value" in obj:
        return TreeNode(value=float(obj["value"]))
    return TreeNode(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        gain=float(obj["gain"]),
        left=int(obj["left"]),
        right=int(obj["right"]),
    )


def save_model(model: RankingModel, path: str | Path) -> None:
    """Versioned JSON document; floats keep full round-trip precision."""
    doc = {
        "format_version": _FORMAT_VERSION,
        "config": asdict(model.config),
        "schema": model.schema,
        "cumulative_gain": model.cumulative_gain.tolist(),
        "trees": [[_node_to_dict(n) for n in tree.nodes] for tree in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
        fh.write("\n")


def load_model(
    path: str | Path, expected_schema: Sequence[str] | None = None
) -> RankingModel:
    """Load a model file; the round trip scores identically to the original.

    Pass `expected_schema` to reject models trained on a different feature
    layout (the pipeline passes its 129-name schema).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != _FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model file {path}: expected format_version {_FORMAT_VERSION}"
        )
    try:
        config = RankerConfig(**doc["config"])
        schema = [str(s) for s in doc["schema"]]
        cumulative_gain = np.array(doc["cumulative_gain"], dtype=float)
        trees = [
            RegressionTree([_node_from_dict(n) for n in nodes])
            for nodes in doc["trees"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from exc
    if len(cumulative_gain) != len(schema):
        raise ModelFormatError(
            f"malformed model file {path}: cumulative_gain length mismatch"
        )
    if expected_schema is not None and schema != list(expected_schema):
        raise SchemaError(
            f"model schema ({len(schema)} names) does not match the expected "
            f"schema ({len(list(expected_schema))} names)"
        )
    return RankingModel(
        trees=trees,
        learning_rate=config.learning_rate,
        schema=schema,
        cumulative_gain=cumulative_gain,
        config=config,
    )
