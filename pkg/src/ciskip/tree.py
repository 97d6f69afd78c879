"""Fixed-structure complete binary decision tree.

Nodes live in breadth-first order: node ``i`` has children ``2i+1`` and
``2i+2``. A depth-``d`` tree has ``2**d - 1`` internal nodes and ``2**d``
leaves; every prediction visits exactly ``d`` nodes and goes left when
``x[attribute] <= threshold``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, FeatureSchema, Label

MODEL_FORMAT = "ciskip-tree/1"


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    """Composite action: which attribute a node tests and at which threshold."""
    attribute: int
    threshold: float


@dataclass
class DecisionTree:
    schema: FeatureSchema
    attributes: np.ndarray
    thresholds: np.ndarray
    leaf_labels: np.ndarray

    def __post_init__(self):
        self.attributes = np.asarray(self.attributes, dtype=np.int64)
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.leaf_labels = np.asarray(self.leaf_labels, dtype=np.int8)
        n = len(self.attributes)
        depth = int(np.log2(n + 1))
        if n < 1 or 2 ** depth - 1 != n:
            raise TreeError(f"{n} nodes is not a complete binary tree")
        if len(self.thresholds) != n or len(self.leaf_labels) != n + 1:
            raise TreeError("thresholds / leaf labels do not match node count")
        if np.any(self.attributes < 0) or np.any(self.attributes >= len(self.schema)):
            raise TreeError("attribute index out of schema range")
        if not np.all(np.isfinite(self.thresholds)):
            raise TreeError("non-finite threshold")

    @property
    def depth(self) -> int:
        return int(np.log2(len(self.attributes) + 1))

    @property
    def n_nodes(self) -> int:
        return len(self.attributes)

    def copy(self) -> "DecisionTree":
        return DecisionTree(self.schema, self.attributes.copy(), self.thresholds.copy(),
                            self.leaf_labels.copy())

    def node(self, t: int) -> Action:
        return Action(int(self.attributes[t]), float(self.thresholds[t]))


def random_tree(schema: FeatureSchema, depth: int, rng: np.random.Generator) -> DecisionTree:
    if depth < 1:
        raise TreeError(f"depth must be >= 1, got {depth}")
    n = 2 ** depth - 1
    attrs = rng.integers(0, len(schema), size=n)
    thresholds = rng.uniform(schema.lows[attrs], schema.highs[attrs])
    return DecisionTree(schema, attrs, thresholds, np.full(n + 1, Label.BUILD, dtype=np.int8))


def route(tree: DecisionTree, X: np.ndarray, return_path: bool = False):
    """Leaf index reached by each row (and optionally the visited node ids)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rows = np.arange(len(X))
    node = np.zeros(len(X), dtype=np.int64)
    path = []
    for _ in range(tree.depth):
        path.append(node)
        right = X[rows, tree.attributes[node]] > tree.thresholds[node]
        node = 2 * node + 1 + right
    leaves = node - tree.n_nodes
    if return_path:
        return leaves, np.stack(path, axis=1)
    return leaves


def predict(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    return tree.leaf_labels[route(tree, X)]


def classify(tree: DecisionTree, x) -> Label:
    return Label(int(predict(tree, np.asarray(x, dtype=np.float64)[None, :])[0]))


def node_class_counts(tree: DecisionTree, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-node (build, skip) counts over all ``2N+1`` nodes, leaves included."""
    leaves, path = route(tree, X, return_path=True)
    total = 2 * tree.n_nodes + 1
    ids = np.concatenate([path.ravel(), leaves + tree.n_nodes])
    labels = np.concatenate([np.repeat(y, tree.depth), y]).astype(np.int64)
    counts = np.zeros((total, 2), dtype=np.int64)
    np.add.at(counts, (ids, labels), 1)
    return counts


def _majority(counts) -> int | None:
    build, skip = counts
    if build + skip == 0:
        return None
    return int(Label.SKIP) if skip >= build else int(Label.BUILD)


def assign_leaf_labels(tree: DecisionTree, train: Dataset) -> DecisionTree:
    """Label each leaf with the training majority routed to it.

    Ties go to Skip; an empty leaf takes the majority of its nearest
    non-empty ancestor.
    """
    if len(train) == 0:
        raise TreeError("cannot label leaves from an empty dataset")
    counts = node_class_counts(tree, train.X, train.y)
    labels = np.empty(tree.n_nodes + 1, dtype=np.int8)
    for leaf in range(tree.n_nodes + 1):
        node = leaf + tree.n_nodes
        lab = _majority(counts[node])
        while lab is None:
            node = (node - 1) // 2
            lab = _majority(counts[node])
        labels[leaf] = lab
    out = tree.copy()
    out.leaf_labels = labels
    return out


def set_node(tree: DecisionTree, t: int, action: Action) -> DecisionTree:
    if not 0 <= t < tree.n_nodes:
        raise TreeError(f"node index {t} outside [0, {tree.n_nodes})")
    k = int(action.attribute)
    if not 0 <= k < len(tree.schema):
        raise TreeError(f"attribute {k} outside schema")
    feat = tree.schema.features[k]
    out = tree.copy()
    out.attributes[t] = k
    out.thresholds[t] = min(max(float(action.threshold), feat.min), feat.max)
    return out


def state_size(depth: int, n_features: int, passes: int = 1) -> int:
    remaining = depth - min(passes, depth - 1)
    return (2 ** remaining - 1) * n_features + 1


def encode_state(tree: DecisionTree, next_t: int, passes: int = 1) -> np.ndarray:
    """Tree state: one-hot normalized thresholds, convolved and flattened,
    followed by the index of the node to modify scaled by ``N``."""
    n, K = tree.n_nodes, len(tree.schema)
    if not 0 <= next_t <= n:
        raise TreeError(f"next node {next_t} outside [0, {n}]")
    lows, spans = tree.schema.lows, tree.schema.highs - tree.schema.lows
    a = tree.attributes
    safe = np.where(spans[a] > 0, spans[a], 1.0)
    vec = np.zeros((n, K))
    vec[np.arange(n), a] = np.where(spans[a] > 0, (tree.thresholds - lows[a]) / safe, 0.0)
    depth = tree.depth
    for _ in range(min(passes, depth - 1)):
        m = 2 ** (depth - 1) - 1
        parents = np.arange(m)
        vec = (vec[parents] + vec[2 * parents + 1] + vec[2 * parents + 2]) / 3.0
        depth -= 1
    return np.concatenate([vec.ravel(), [next_t / n]])


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def best_split(X: np.ndarray, y: np.ndarray):
    """Exhaustive CART split: (attribute, threshold, weighted child Gini).

    Thresholds are midpoints between consecutive distinct sorted values.
    Returns None when every column is constant.
    """
    n = len(y)
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order].astype(np.float64)
        valid = np.flatnonzero(xs[1:] > xs[:-1])
        if len(valid) == 0:
            continue
        n_left = valid + 1.0
        skip_left = np.cumsum(ys)[valid]
        n_right = n - n_left
        skip_right = ys.sum() - skip_left
        g_left = 1 - (skip_left / n_left) ** 2 - (1 - skip_left / n_left) ** 2
        g_right = 1 - (skip_right / n_right) ** 2 - (1 - skip_right / n_right) ** 2
        weighted = (n_left * g_left + n_right * g_right) / n
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2] - 1e-15:
            best = (j, float((xs[valid[i]] + xs[valid[i] + 1]) / 2), float(weighted[i]))
    return best


def greedy_gini_build(train: Dataset, max_depth: int, min_samples_split: int = 2) -> DecisionTree:
    """Greedy CART tree padded to the complete-tree representation.

    A node that stops early (pure, too small, or unsplittable) repeats its
    parent's split so every row keeps going the same way, and all leaves
    below it get the node's majority label.
    """
    if len(train) == 0:
        raise TreeError("cannot build a tree from an empty dataset")
    if max_depth < 1:
        raise TreeError("max_depth must be >= 1")
    n = 2 ** max_depth - 1
    attrs = np.zeros(n, dtype=np.int64)
    thresholds = np.zeros(n)
    labels = np.zeros(n + 1, dtype=np.int8)
    X, y = train.X, train.y

    def majority(idx):
        skip = int(y[idx].sum())
        return int(Label.SKIP) if 2 * skip >= len(idx) else int(Label.BUILD)

    def fill_inert(node, split, label):
        # replicate `split` down the subtree and give every leaf `label`
        stack = [node]
        while stack:
            i = stack.pop()
            if i >= n:
                labels[i - n] = label
                continue
            attrs[i], thresholds[i] = split
            stack += [2 * i + 1, 2 * i + 2]

    def grow(node, idx, inherited):
        label = majority(idx)
        skip = int(y[idx].sum())
        pure = skip == 0 or skip == len(idx)
        split = None
        if not pure and len(idx) >= min_samples_split:
            split = best_split(X[idx], y[idx])
        if split is None:
            fill_inert(node, inherited, label)
            return
        j, thr, _ = split
        attrs[node], thresholds[node] = j, thr
        go_left = X[idx, j] <= thr
        for child, part in ((2 * node + 1, idx[go_left]), (2 * node + 2, idx[~go_left])):
            if child >= n:
                labels[child - n] = majority(part)
            else:
                grow(child, part, (j, thr))

    root_inert = (0, float(train.schema.features[0].max))
    grow(0, np.arange(len(y)), root_inert)
    return DecisionTree(train.schema, attrs, thresholds, labels)


def node_importance(tree: DecisionTree, data: Dataset) -> np.ndarray:
    """Weighted impurity decrease of every internal node, unfloored."""
    counts = node_class_counts(tree, data.X, data.y)
    w = counts.sum(axis=1) / len(data)
    imp = np.array([gini(c) for c in counts])
    nodes = np.arange(tree.n_nodes)
    left, right = 2 * nodes + 1, 2 * nodes + 2
    return w[nodes] * imp[nodes] - w[left] * imp[left] - w[right] * imp[right]


def feature_importance(tree: DecisionTree, data: Dataset) -> dict[str, float]:
    """Per-feature share of the total weighted Gini decrease.

    All shares are zero when no node decreases impurity.
    """
    if len(data) == 0:
        raise TreeError("feature importance needs data")
    u = np.maximum(node_importance(tree, data), 0.0)
    per_feature = np.bincount(tree.attributes, weights=u, minlength=len(tree.schema))
    total = per_feature.sum()
    if total > 0:
        per_feature = per_feature / total
    return dict(zip(tree.schema.names, per_feature.tolist()))


def tree_to_json(tree: DecisionTree) -> dict:
    names = tree.schema.names
    return {
        "format": MODEL_FORMAT,
        "schema_digest": tree.schema.digest(),
        "schema": tree.schema.to_json(),
        "depth": tree.depth,
        "nodes": [{"attribute": names[a], "threshold": float(t)}
                  for a, t in zip(tree.attributes, tree.thresholds)],
        "leaf_labels": [Label(int(v)).name.lower() for v in tree.leaf_labels],
    }


def tree_from_json(data: dict, schema: FeatureSchema | None = None) -> DecisionTree:
    if data.get("format") != MODEL_FORMAT:
        raise TreeError(f"unsupported model format {data.get('format')!r}")
    stored = FeatureSchema.from_json(data["schema"])
    if stored.digest() != data["schema_digest"]:
        raise TreeError("model file schema digest does not match its schema")
    if schema is not None and schema.digest() != data["schema_digest"]:
        raise TreeError(f"schema digest mismatch: model {data['schema_digest']}, "
                        f"data {schema.digest()}")
    names = stored.names
    attrs = [names.index(nd["attribute"]) for nd in data["nodes"]]
    thresholds = [nd["threshold"] for nd in data["nodes"]]
    labels = [Label[v.upper()] for v in data["leaf_labels"]]
    tree = DecisionTree(stored, attrs, thresholds, labels)
    if tree.depth != data["depth"]:
        raise TreeError("depth field disagrees with node count")
    return tree


def save_model(tree: DecisionTree, path):
    Path(path).write_text(json.dumps(tree_to_json(tree), indent=2) + "\n")


def load_model(path, schema: FeatureSchema | None = None) -> DecisionTree:
    return tree_from_json(json.loads(Path(path).read_text()), schema)
