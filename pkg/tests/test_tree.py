import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciskip.dataset import Dataset, Feature, FeatureSchema, Label
from ciskip.synth import gen_synth
from ciskip.tree import (Action, DecisionTree, TreeError, assign_leaf_labels, best_split, classify,
                         encode_state, feature_importance, gini, greedy_gini_build,
                         node_class_counts, node_importance, predict, random_tree, route, set_node,
                         state_size, tree_from_json, tree_to_json, load_model, save_model)


def unit_schema(k):
    return FeatureSchema(tuple(Feature(f"x{j}", "numeric", 0.0, 1.0) for j in range(k)))


def rule_conjunction_predict(attrs, thresholds, labels, X):
    """Materialize every root-to-leaf rule and return the label of the one that holds."""
    depth = int(np.log2(len(attrs) + 1))
    out = np.full(len(X), -1)
    hits = np.zeros(len(X), dtype=int)
    for leaf in range(2 ** depth):
        bits = [(leaf >> (depth - 1 - level)) & 1 for level in range(depth)]
        holds = np.ones(len(X), dtype=bool)
        node = 0
        for bit in bits:
            test = X[:, attrs[node]] <= thresholds[node]
            holds &= test if bit == 0 else ~test
            node = 2 * node + 1 + bit
        out[holds] = labels[leaf]
        hits += holds
    assert np.all(hits == 1)
    return out


def test_equivalence_with_rule_conjunctions():
    grid_vals = np.linspace(0.0, 1.0, 5)
    rng = np.random.default_rng(0)
    checked = 0
    for K in (1, 2, 3):
        schema = unit_schema(K)
        X = np.array(list(itertools.product(grid_vals, repeat=K)))
        for depth in (1, 2, 3):
            n = 2 ** depth - 1
            for attrs in itertools.product(range(K), repeat=n):
                attrs = np.array(attrs)
                # half the thresholds sit exactly on grid points to exercise the <= rule
                thresholds = np.where(rng.random(n) < 0.5, rng.choice(grid_vals, n), rng.random(n))
                labels = rng.integers(0, 2, n + 1)
                tree = DecisionTree(schema, attrs, thresholds, labels)
                want = rule_conjunction_predict(attrs, thresholds, labels, X)
                assert np.array_equal(predict(tree, X), want)
                checked += 1
    assert checked == sum(K ** (2 ** d - 1) for K in (1, 2, 3) for d in (1, 2, 3))


def test_random_tree_shape_and_determinism():
    schema = FeatureSchema((Feature("flag", "boolean", 0, 1), Feature("la", "numeric", 5, 50)))
    a = random_tree(schema, 3, np.random.default_rng(4))
    b = random_tree(schema, 3, np.random.default_rng(4))
    assert a.n_nodes == 7 and len(a.leaf_labels) == 8
    assert np.array_equal(a.attributes, b.attributes) and np.array_equal(a.thresholds, b.thresholds)
    big = random_tree(schema, 6, np.random.default_rng(1))
    flag = big.attributes == 0
    assert np.all((big.thresholds[flag] >= 0) & (big.thresholds[flag] <= 1))
    assert np.all((big.thresholds[~flag] >= 5) & (big.thresholds[~flag] <= 50))
    with pytest.raises(TreeError):
        random_tree(schema, 0, np.random.default_rng(0))


def test_single_comparison_and_boundary():
    tree = DecisionTree(unit_schema(1), [0], [0.5], [Label.SKIP, Label.BUILD])
    assert classify(tree, [0.3]) == Label.SKIP
    assert classify(tree, [0.5]) == Label.SKIP
    assert classify(tree, [0.51]) == Label.BUILD


def test_depth_four_rule_chain_on_example_commit():
    names = ["IS_DOC", "CM", "LA", "PRS", "NF", "PBS"]
    kinds = {"IS_DOC": "boolean", "PBS": "boolean"}
    schema = FeatureSchema(tuple(Feature(n, kinds.get(n, "numeric"), 0.0, 1.0 if n in kinds else 100.0)
                                 for n in names))
    attrs = np.zeros(15, dtype=int)
    thresholds = np.full(15, 0.5)
    # chain: IS_DOC > 0.5 -> CM <= 40 -> LA <= 10 -> PBS > 0.5 -> skip
    attrs[0], thresholds[0] = 0, 0.5
    attrs[2], thresholds[2] = 1, 40.0
    attrs[5], thresholds[5] = 2, 10.0
    attrs[11], thresholds[11] = 5, 0.5
    labels = np.zeros(16, dtype=int)
    labels[24 - 15] = Label.SKIP
    tree = DecisionTree(schema, attrs, thresholds, labels)
    commit = np.array([1.0, 12.5, 3.0, 0.0, 1.0, 1.0])
    leaves, path = route(tree, commit, return_path=True)
    assert list(path[0]) == [0, 2, 5, 11]
    assert classify(tree, commit) == Label.SKIP


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_every_input_visits_exactly_depth_nodes(depth, k, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(unit_schema(k), depth, rng)
    X = rng.random((40, k))
    leaves, path = route(tree, X, return_path=True)
    assert path.shape == (40, depth)
    # each visited node is a child of the previous one, ending at the reported leaf
    nxt = np.column_stack([path[:, 1:], leaves + tree.n_nodes])
    assert np.all((nxt == 2 * path + 1) | (nxt == 2 * path + 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_set_node_only_affects_rows_through_that_node(depth, k, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(unit_schema(k), depth, rng)
    tree.leaf_labels = rng.integers(0, 2, tree.n_nodes + 1).astype(np.int8)
    t = int(rng.integers(tree.n_nodes))
    changed = set_node(tree, t, Action(int(rng.integers(k)), float(rng.random())))
    X = rng.random((100, k))
    _, path = route(tree, X, return_path=True)
    avoid = ~np.any(path == t, axis=1)
    assert np.array_equal(predict(tree, X)[avoid], predict(changed, X)[avoid])


def test_leaf_labels():
    schema = unit_schema(1)
    tree = DecisionTree(schema, [0], [0.5], [0, 0])
    all_left = Dataset(schema, np.array([[0.1], [0.2]]), np.array([1, 1]), "t")
    assert list(assign_leaf_labels(tree, all_left).leaf_labels) == [1, 1]
    X = np.array([[0.1]] * 4 + [[0.9]] * 4)
    y = np.array([1, 0, 0, 0, 1, 1, 0, 0])
    assert list(assign_leaf_labels(tree, Dataset(schema, X, y, "t")).leaf_labels) == [0, 1]


def test_empty_leaf_inherits_nearest_ancestor():
    schema = unit_schema(2)
    tree = DecisionTree(schema, [0, 1, 1], [0.5, 0.5, 0.5], [0, 0, 0, 0])
    # nothing reaches the right subtree's right leaf; its parent holds 1 skip, 0 build
    X = np.array([[0.1, 0.1], [0.2, 0.9], [0.3, 0.8], [0.9, 0.2]])
    y = np.array([0, 0, 1, 1])
    labels = assign_leaf_labels(tree, Dataset(schema, X, y, "t")).leaf_labels
    assert list(labels) == [0, 1, 1, 1]


def test_set_node_examples():
    schema = FeatureSchema(tuple(Feature(f"x{j}", "numeric", 0, 1) for j in range(3)))
    tree = DecisionTree(schema, [0, 0, 0], [0.1, 0.2, 0.3], [0, 0, 0, 0])
    out = set_node(tree, 0, Action(2, 0.7))
    assert out.node(0) == Action(2, 0.7)
    assert out.node(1) == tree.node(1) and out.node(2) == tree.node(2)
    assert tree.node(0) == Action(0, 0.1)
    assert set_node(tree, 1, Action(1, 4.0)).node(1) == Action(1, 1.0)
    with pytest.raises(TreeError):
        set_node(tree, 3, Action(0, 0.5))


@pytest.mark.parametrize("depth", range(1, 7))
@pytest.mark.parametrize("k", [3, 26, 29])
def test_state_length_and_range(depth, k):
    rng = np.random.default_rng(depth * 100 + k)
    tree = random_tree(unit_schema(k), depth, rng)
    want = k + 1 if depth == 1 else (2 ** (depth - 1) - 1) * k + 1
    assert state_size(depth, k) == want
    for t in (0, tree.n_nodes - 1, tree.n_nodes):
        s = encode_state(tree, t)
        assert s.shape == (want,)
        assert np.all((s >= 0) & (s <= 1))


def test_state_examples():
    assert state_size(3, 26) == 79
    schema = FeatureSchema((Feature("a", "numeric", 2, 4), Feature("b", "numeric", -1, 1)))
    root = DecisionTree(schema, [1], [0.0], [0, 0])
    assert np.allclose(encode_state(root, 0), [0.0, 0.5, 0.0])
    at_min = DecisionTree(schema, [0, 1, 0], [2.0, -1.0, 2.0], [0, 0, 0, 0])
    s = encode_state(at_min, 2)
    assert np.all(s[:-1] == 0) and s[-1] == pytest.approx(2 / 3)
    one = DecisionTree(schema, [0, 1, 0], [3.0, 1.0, 4.0], [0, 0, 0, 0])
    # one pass: root row = mean of root and both children rows
    assert np.allclose(encode_state(one, 0), [(0.5 + 0 + 1) / 3, 1 / 3, 0.0])
    assert len(encode_state(one, 0, passes=0)) == 3 * 2 + 1


def test_gini_values():
    assert gini([5, 5]) == 0.5
    assert gini([0, 7]) == 0.0
    assert gini([3, 1]) == pytest.approx(1 - (0.25 ** 2 + 0.75 ** 2))
    assert gini([0, 0]) == 0.0


def _weighted_child_gini(x, y, thr):
    left = x <= thr
    n = len(y)
    parts = [(y[left]), (y[~left])]
    return sum(len(p) / n * gini([np.sum(p == 0), np.sum(p == 1)]) for p in parts if len(p))


def brute_force_best(X, y):
    best = np.inf
    for j in range(X.shape[1]):
        for thr in np.unique(X[:, j])[:-1]:
            best = min(best, _weighted_child_gini(X[:, j], y, thr))
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_root_split_is_optimal(n, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(n, k)).astype(float)
    y = rng.integers(0, 2, n)
    got = best_split(X, y)
    oracle = brute_force_best(X, y)
    if np.isinf(oracle):
        assert got is None
        return
    j, thr, g = got
    assert g == pytest.approx(oracle, abs=1e-12)
    assert _weighted_child_gini(X[:, j], y, thr) == pytest.approx(g, abs=1e-12)
    ds = Dataset(FeatureSchema.infer([f"c{i}" for i in range(k)], X), X, y, "t")
    tree = greedy_gini_build(ds, 2)
    if 0 < y.sum() < n:
        assert _weighted_child_gini(X[:, tree.attributes[0]], y, tree.thresholds[0]) <= oracle + 1e-12


def test_greedy_separable_and_pure():
    X = np.array([[0.1], [0.2], [0.3], [0.7], [0.8]])
    y = np.array([1, 1, 1, 0, 0])
    ds = Dataset(FeatureSchema.infer(["a"], X), X, y, "t")
    tree = greedy_gini_build(ds, 1)
    assert tree.thresholds[0] == pytest.approx(0.5)
    assert np.array_equal(predict(tree, X), y)
    pure = Dataset(ds.schema, X, np.zeros(5, dtype=int), "p")
    t3 = greedy_gini_build(pure, 3)
    assert np.all(t3.leaf_labels == 0)
    assert np.array_equal(predict(t3, X), np.zeros(5))


def test_greedy_recovers_planted_root_attribute():
    for seed in range(3):
        ds, planted = gen_synth(1000, 0.3, 1, 0.0, seed)
        j, thr, _ = best_split(ds.X, ds.y)
        assert j == planted.attributes[0]
        tree = greedy_gini_build(ds, 3)
        assert tree.attributes[0] == planted.attributes[0]


def test_importance_single_feature_tree():
    schema = unit_schema(3)
    tree = DecisionTree(schema, [0, 0, 0], [0.5, 0.2, 0.8], [1, 0, 1, 0])
    X = np.random.default_rng(0).random((50, 3))
    ds = Dataset(schema, X, (X[:, 0] < 0.3).astype(int), "t")
    assert feature_importance(tree, ds) == {"x0": 1.0, "x1": 0.0, "x2": 0.0}


def test_importance_zero_when_nothing_improves():
    schema = unit_schema(2)
    tree = DecisionTree(schema, [0], [0.5], [0, 0])
    X = np.array([[0.1, 0], [0.9, 0]])
    ds = Dataset(schema, X, np.array([0, 0]), "t")
    assert feature_importance(tree, ds) == {"x0": 0.0, "x1": 0.0}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_importance_telescopes(depth, k, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(unit_schema(k), depth, rng)
    X = rng.random((60, k))
    ds = Dataset(tree.schema, X, rng.integers(0, 2, 60), "t")
    counts = node_class_counts(tree, X, ds.y)
    w = counts.sum(axis=1) / len(ds)
    imp = np.array([gini(c) for c in counts])
    leaves = np.arange(tree.n_nodes, 2 * tree.n_nodes + 1)
    expected = w[0] * imp[0] - np.sum(w[leaves] * imp[leaves])
    assert node_importance(tree, ds).sum() == pytest.approx(expected, abs=1e-9)
    shares = feature_importance(tree, ds)
    total = sum(shares.values())
    assert total == pytest.approx(1.0) or total == 0.0
    assert all(v >= 0 for v in shares.values())


def test_importance_planted_single_feature():
    for seed in range(3):
        ds, planted = gen_synth(1000, 0.2, 1, 0.05, seed)
        shares = feature_importance(greedy_gini_build(ds, 2), ds)
        assert shares[ds.schema.names[planted.attributes[0]]] >= 0.9


def test_importance_null_labels_spread_out():
    tops = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.random((600, 26))
        ds = Dataset(unit_schema(26), X, rng.integers(0, 2, 600), "null")
        tops.append(max(feature_importance(greedy_gini_build(ds, 3), ds).values()))
    assert np.median(tops) <= 0.5


def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    tree = random_tree(unit_schema(4), 3, rng)
    tree.leaf_labels = rng.integers(0, 2, 8).astype(np.int8)
    save_model(tree, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.attributes, tree.attributes)
    assert np.array_equal(back.thresholds, tree.thresholds)
    assert np.array_equal(back.leaf_labels, tree.leaf_labels)
    with pytest.raises(TreeError):
        tree_from_json(tree_to_json(tree), unit_schema(5))
    data = tree_to_json(tree)
    data["leaf_labels"] = data["leaf_labels"][:-1]
    with pytest.raises(TreeError):
        tree_from_json(data)
