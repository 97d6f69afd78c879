import hashlib
import json
import math

import numpy as np
import pytest

from ciskip import trainer
from ciskip.agent import AgentConfig
from ciskip.dataset import Dataset, FeatureSchema, stratified_split
from ciskip.metrics import ConfusionMatrix, scores
from ciskip.synth import gen_synth
from ciskip.trainer import (TrainConfig, TrainError, cross_project, evaluate, fit_within_project,
                            linear_schedule, select_depth, train, within_project)
from ciskip.tree import DecisionTree, predict

SMALL_AGENT = AgentConfig(hidden=(16,), batch_size=8, warmup_steps=16)


def small_cfg(**kw):
    base = dict(depth=2, episodes=25, agent=SMALL_AGENT, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def synth():
    return gen_synth(300, 0.2, 2, 0.0, seed=4)


def test_linear_schedule():
    assert linear_schedule(1.0, 0.05, 100, 0) == 1.0
    assert linear_schedule(1.0, 0.05, 100, 50) == pytest.approx(0.525)
    assert linear_schedule(1.0, 0.05, 100, 500) == 0.05
    assert linear_schedule(0.4, 1.0, 0, 3) == 1.0


def test_episode_structure_and_telescoping(synth):
    ds, _ = synth
    for d in (1, 2, 3):
        cfg = small_cfg(depth=d, episodes=20)
        rep = train(ds, cfg)
        n = 2 ** d - 1
        assert rep.step_rewards.shape == (20, n)
        assert np.all(rep.step_terminal.sum(axis=1) == 1)
        assert np.all(rep.step_terminal[:, -1])
        assert np.all(rep.step_rewards[~rep.step_terminal] == 0.0)
        total = math.fsum(rep.step_rewards.ravel())
        assert abs(total - (rep.history[-1]["metric"] - rep.initial_metric)) <= 1e-12
        assert np.array_equal(rep.rewards, rep.step_rewards[:, -1])


def test_reward_is_metric_difference(synth, monkeypatch):
    ds, _ = synth
    seq = iter([0.5, 0.6, 0.4, 0.4])
    monkeypatch.setattr(trainer, "tree_metric", lambda tree, data, metric="f1": next(seq))
    rep = train(ds, small_cfg(episodes=3))
    assert rep.initial_metric == 0.5
    assert rep.rewards == pytest.approx([0.1, -0.2, 0.0])
    assert rep.best_train_f1 == 0.6 and rep.best_episode == 1


def test_best_tree_is_running_max(synth):
    ds, _ = synth
    rep = train(ds, small_cfg(episodes=30))
    f1s = [h["train_f1"] for h in rep.history]
    assert rep.best_train_f1 == max(f1s)
    assert rep.best_episode == int(np.argmax(f1s)) + 1
    assert trainer.tree_metric(rep.best_tree, ds) == pytest.approx(rep.best_train_f1)


def test_determinism(synth):
    ds, _ = synth
    a = train(ds, small_cfg(episodes=15, seed=9))
    b = train(ds, small_cfg(episodes=15, seed=9))
    assert json.dumps(a.history_json()) == json.dumps(b.history_json())
    assert np.array_equal(a.best_tree.thresholds, b.best_tree.thresholds)
    assert json.dumps(a.agent.to_json()) == json.dumps(b.agent.to_json())
    c = train(ds, small_cfg(episodes=15, seed=10))
    assert json.dumps(a.history_json()) != json.dumps(c.history_json())


def test_eval_each_episode_and_auc_reward(synth):
    ds, _ = synth
    tr, te = stratified_split(ds, 0.2, 0)
    rep = train(tr, small_cfg(episodes=5, eval_each_episode=True, reward_metric="auc"), eval_set=te)
    assert all("eval_f1" in h for h in rep.history)
    assert all(0.0 <= h["metric"] <= 1.0 for h in rep.history)


def test_training_requires_both_classes():
    X = np.random.default_rng(0).random((10, 2))
    ds = Dataset(FeatureSchema.infer(["a", "b"], X), X, np.zeros(10, dtype=int), "one")
    with pytest.raises(TrainError):
        train(ds, small_cfg())


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(TrainError):
        TrainConfig(reward_metric="accuracy")
    with pytest.raises(TrainError):
        TrainConfig(depth=0)
    cfg = small_cfg(episodes=7)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_json()))
    assert TrainConfig.load(p) == cfg


def test_evaluate_examples():
    ds, planted = gen_synth(500, 0.1, 2, 0.0, seed=1)
    s = evaluate(planted, ds)
    assert s.f1 == 1.0 and s.auc == 1.0
    n = planted.n_nodes
    constant = DecisionTree(ds.schema, planted.attributes, planted.thresholds, np.zeros(n + 1))
    s = evaluate(constant, ds)
    assert s.recall == 0.0 and s.f1 == 0.0


def test_evaluate_matches_hand_confusion():
    schema = FeatureSchema.infer(["a"], np.array([[0.0], [1.0]]))
    tree = DecisionTree(schema, [0], [0.35], [1, 0])
    X = np.arange(10, dtype=float)[:, None] / 10
    y = np.array([1, 1, 1, 0, 1, 0, 0, 0, 0, 0])
    # predicted skip for x <= 0.35: rows 0..3 -> tp=3, fp=1, fn=1, tn=5
    assert evaluate(tree, Dataset(schema, X, y, "f")) == scores(ConfusionMatrix(3, 1, 1, 5))


def test_within_project_deterministic(synth):
    ds, _ = synth
    a = within_project(ds, small_cfg(episodes=10))
    b = within_project(ds, small_cfg(episodes=10))
    assert a == b
    s, rep, tr, te = fit_within_project(ds, small_cfg(episodes=10))
    assert len(te) == 60 and s == a


def _row_hashes(ds):
    return {hashlib.sha256(np.ascontiguousarray(row).tobytes()).hexdigest() for row in ds.X}


def test_cross_project_protocol_and_leakage(monkeypatch):
    projects = [gen_synth(120, 0.2, 1, 0.0, seed=s)[0] for s in range(3)]
    projects = [Dataset(p.schema, p.X, p.y, f"proj{i}") for i, p in enumerate(projects)]
    seen = []
    real_train = trainer.train

    def spy(train_set, cfg, eval_set=None):
        seen.append(train_set)
        return real_train(train_set, cfg, eval_set)

    monkeypatch.setattr(trainer, "train", spy)
    results = cross_project(projects, small_cfg(episodes=3))
    assert [name for name, _ in results] == ["proj0", "proj1", "proj2"]
    for held, training in zip(projects, seen):
        assert len(training) == sum(len(p) for p in projects) - len(held)
        assert not (_row_hashes(held) & _row_hashes(training))


def test_cross_project_errors():
    ds = gen_synth(100, 0.2, 1, 0.0, seed=0)[0]
    with pytest.raises(TrainError):
        cross_project([ds], small_cfg())
    other = ds.with_columns(ds.schema.names[:5])
    with pytest.raises(TrainError):
        cross_project([ds, other], small_cfg())


def test_select_depth_returns_candidate(synth):
    ds, _ = synth
    d = select_depth(ds, small_cfg(episodes=4), depths=(1, 2))
    assert d in (1, 2)


def test_gini_baseline_fits_planted(synth):
    ds, planted = synth
    tree = trainer.gini_baseline(ds, 2)
    assert np.mean(predict(tree, ds.X) == ds.y) >= 0.95
