"""Planted-tree synthetic benchmarks.

Features are uniform on [0, 1]; labels come from a random complete tree of
the requested depth whose leaves are labeled so the skip share lands near
the requested fraction, then each label flips with probability ``noise``.
"""
from __future__ import annotations

import itertools

import numpy as np

from .dataset import Dataset, Feature, FeatureSchema
from .tree import DecisionTree, route

WORKFLOW_FEATURES = ("PBS", "Fail_rate", "avg_exp")


class SynthError(ValueError):
    pass


def synth_schema(n_features: int = 26, workflow: bool = False) -> FeatureSchema:
    feats = [Feature(f"f{j:02d}", "numeric", 0.0, 1.0) for j in range(n_features)]
    if workflow:
        feats += [Feature("PBS", "boolean", 0.0, 1.0), Feature("Fail_rate", "numeric", 0.0, 1.0),
                  Feature("avg_exp", "numeric", 0.0, 1.0)]
    return FeatureSchema(tuple(feats))


def _label_sets(n_leaves: int) -> np.ndarray:
    # skip-leaf subsets where every skip leaf has a build sibling, so the
    # planted labeling cannot be expressed by a shallower tree
    sets = np.array(list(itertools.product((0, 1), repeat=n_leaves)), dtype=np.int8)
    keep = (sets.sum(axis=1) > 0) & ~np.any(sets[:, 0::2] & sets[:, 1::2], axis=1)
    return sets[keep]


def plant_tree(X: np.ndarray, schema: FeatureSchema, depth: int, skip_fraction: float,
               rng: np.random.Generator, tol: float = 0.02, workflow: bool = False,
               max_tries: int = 5000) -> DecisionTree:
    n_clf = len(schema) - (len(WORKFLOW_FEATURES) if workflow else 0)
    n_nodes = 2 ** depth - 1
    label_sets = _label_sets(n_nodes + 1)
    for _ in range(max_tries):
        attrs = rng.integers(0, len(schema), size=n_nodes)
        if workflow:
            # root splits on a commit feature, the next level on workflow features
            attrs[0] = rng.integers(0, n_clf)
            if depth >= 2:
                attrs[1:3] = rng.integers(n_clf, len(schema), size=2)
        thresholds = rng.uniform(0.1, 0.9, size=n_nodes)
        tree = DecisionTree(schema, attrs, thresholds, np.zeros(n_nodes + 1, dtype=np.int8))
        mass = np.bincount(route(tree, X), minlength=n_nodes + 1) / len(X)
        gaps = np.abs(label_sets @ mass - skip_fraction)
        best = int(np.argmin(gaps))
        if gaps[best] <= tol:
            tree.leaf_labels = label_sets[best].copy()
            return tree
    raise SynthError(f"could not plant a depth-{depth} tree with skip fraction "
                     f"{skip_fraction} +/- {tol}")


def gen_synth(n_rows: int = 1000, skip_fraction: float = 0.10, planted_depth: int = 2,
              noise: float = 0.0, seed: int = 0, n_features: int = 26,
              workflow: bool = False) -> tuple[Dataset, DecisionTree]:
    """Returns the noisy dataset and the planted ground-truth tree."""
    if not 0.0 < skip_fraction < 1.0:
        raise SynthError(f"skip fraction must be in (0, 1), got {skip_fraction}")
    if not 1 <= planted_depth <= 4:
        raise SynthError("planted depth must be between 1 and 4")
    if not 0.0 <= noise < 0.5:
        raise SynthError("noise must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    schema = synth_schema(n_features, workflow)
    X = rng.uniform(0.0, 1.0, size=(n_rows, len(schema)))
    if workflow:
        pbs = schema.index("PBS")
        X[:, pbs] = (rng.random(n_rows) < 0.5).astype(np.float64)
    planted = plant_tree(X, schema, planted_depth, skip_fraction, rng, workflow=workflow)
    y = planted.leaf_labels[route(planted, X)].astype(np.int8)
    flips = rng.random(n_rows) < noise
    y = np.where(flips, 1 - y, y)
    kinds = {f.name: f.kind for f in schema.features}
    return Dataset(FeatureSchema.infer(schema.names, X, kinds), X, y, f"synth-{seed}"), planted
