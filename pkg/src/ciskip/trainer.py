"""Episodic tree-building environment, training loop and evaluation protocols."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .agent import Agent, AgentConfig
from .dataset import Dataset, DatasetError, concat, stratified_split
from .metrics import EvalScores, confusion, f1_of, scores
from .replay import PrioritizedBuffer, Transition
from .tree import (DecisionTree, assign_leaf_labels, encode_state, greedy_gini_build, predict,
                   random_tree, set_node, state_size)


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    depth: int = 4
    episodes: int = 400
    agent: AgentConfig = field(default_factory=AgentConfig)
    reward_metric: str = "f1"
    eval_each_episode: bool = False
    conv_passes: int = 1
    reset: str = "random"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.agent, dict):
            self.agent = AgentConfig.from_json(self.agent)
        if self.depth < 1 or self.episodes < 1:
            raise TrainError("depth and episodes must be >= 1")
        if self.reward_metric not in ("f1", "auc"):
            raise TrainError(f"reward_metric must be 'f1' or 'auc', got {self.reward_metric!r}")
        if self.reset not in ("random", "initial"):
            raise TrainError(f"reset must be 'random' or 'initial', got {self.reset!r}")
        if self.conv_passes < 0:
            raise TrainError("conv_passes must be >= 0")

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["agent"] = self.agent.to_json()
        return d

    @classmethod
    def from_json(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise TrainError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class TrainReport:
    best_tree: DecisionTree
    best_train_f1: float
    best_episode: int
    initial_metric: float
    history: list[dict]
    step_rewards: np.ndarray
    step_terminal: np.ndarray
    agent: Agent

    @property
    def rewards(self) -> np.ndarray:
        return np.array([h["reward"] for h in self.history])

    def history_json(self) -> dict:
        return {"initial_metric": self.initial_metric, "best_episode": self.best_episode,
                "best_train_f1": self.best_train_f1, "episodes": self.history}


def tree_metric(tree: DecisionTree, data: Dataset, metric: str = "f1") -> float:
    pred = predict(tree, data.X)
    if metric == "f1":
        return f1_of(pred, data.y)
    return scores(confusion(pred, data.y)).auc


def linear_schedule(start: float, end: float, duration: float, step: int) -> float:
    if duration <= 0 or step >= duration:
        return end
    return start + (step / duration) * (end - start)


def train(train_set: Dataset, cfg: TrainConfig, eval_set: Dataset | None = None) -> TrainReport:
    """Rebuild the tree node by node every episode and learn from the F1 delta.

    Only the last step of an episode is terminal and carries the reward
    ``s_m - s_{m-1}``; ``s_0`` is the score of episode one's starting tree.
    The returned tree is the best one seen by training F1.
    """
    try:
        train_set.require_both_classes("training set")
    except DatasetError as exc:
        raise TrainError(str(exc)) from None
    acfg = cfg.agent
    rng = np.random.default_rng(cfg.seed)
    schema = train_set.schema
    n_nodes = 2 ** cfg.depth - 1
    agent = Agent(schema, state_size(cfg.depth, len(schema), cfg.conv_passes), acfg,
                  seed=int(rng.integers(2 ** 63)))
    buffer = PrioritizedBuffer(acfg.replay_capacity, acfg.per_alpha, acfg.priority_floor)
    total_steps = cfg.episodes * n_nodes
    eps_steps = acfg.eps_decay_fraction * total_steps

    initial_tree = assign_leaf_labels(random_tree(schema, cfg.depth, rng), train_set)
    tree = initial_tree
    s_prev = s0 = tree_metric(tree, train_set, cfg.reward_metric)
    step = 0
    history = []
    step_rewards = np.zeros((cfg.episodes, n_nodes))
    step_terminal = np.zeros((cfg.episodes, n_nodes), dtype=bool)
    best_tree, best_f1, best_episode = None, -1.0, -1

    for m in range(cfg.episodes):
        if m > 0:
            tree = random_tree(schema, cfg.depth, rng) if cfg.reset == "random" else initial_tree
        losses_q, losses_x = [], []
        eps = linear_schedule(acfg.eps_start, acfg.eps_end, eps_steps, step)
        for t in range(n_nodes):
            eps = linear_schedule(acfg.eps_start, acfg.eps_end, eps_steps, step)
            state = encode_state(tree, t, cfg.conv_passes)
            action = agent.select_action(state, eps, rng)
            tree = set_node(tree, t, action)
            terminal = t == n_nodes - 1
            reward = 0.0
            if terminal:
                tree = assign_leaf_labels(tree, train_set)
                s_m = tree_metric(tree, train_set, cfg.reward_metric)
                reward = s_m - s_prev
                s_prev = s_m
            buffer.push(Transition(state, action, reward, encode_state(tree, t + 1, cfg.conv_passes),
                                   terminal))
            step_rewards[m, t] = reward
            step_terminal[m, t] = terminal
            step += 1
            if step >= acfg.warmup_steps:
                beta = linear_schedule(acfg.per_beta_start, acfg.per_beta_end, total_steps, step)
                batch, idx, weights = buffer.sample(acfg.batch_size, rng, beta)
                loss_q, loss_x, td = agent.update(batch, weights)
                buffer.update_priorities(idx, td)
                losses_q.append(loss_q)
                losses_x.append(loss_x)

        train_f1 = s_m if cfg.reward_metric == "f1" else tree_metric(tree, train_set, "f1")
        if train_f1 > best_f1:
            best_tree, best_f1, best_episode = tree, train_f1, m
        record = {
            "episode": m + 1,
            "train_f1": train_f1,
            "metric": s_m,
            "reward": reward,
            "epsilon": eps,
            "loss_q": float(np.mean(losses_q)) if losses_q else None,
            "loss_x": float(np.mean(losses_x)) if losses_x else None,
        }
        if cfg.eval_each_episode and eval_set is not None:
            record["eval_f1"] = tree_metric(tree, eval_set, "f1")
        history.append(record)

    # telescoping reward identity: the episode rewards must sum to s_M - s_0
    total = math.fsum(h["reward"] for h in history)
    if abs(total - (s_prev - s0)) > 1e-12:
        raise TrainError(f"reward telescoping violated: {total} vs {s_prev - s0}")
    return TrainReport(best_tree, best_f1, best_episode + 1, s0, history, step_rewards,
                       step_terminal, agent)


def evaluate(tree: DecisionTree, test: Dataset) -> EvalScores:
    try:
        test.require_both_classes("test set")
    except DatasetError as exc:
        raise TrainError(str(exc)) from None
    return scores(confusion(predict(tree, test.X), test.y))


def gini_baseline(train_set: Dataset, depth: int, min_samples_split: int = 2) -> DecisionTree:
    return greedy_gini_build(train_set, depth, min_samples_split)


def select_depth(train_set: Dataset, cfg: TrainConfig, depths=(3, 4, 5),
                 val_fraction: float = 0.2) -> int:
    """Pick the depth whose tree scores best on an inner validation split."""
    inner_train, inner_val = stratified_split(train_set, val_fraction, cfg.seed)
    best_depth, best = depths[0], -1.0
    for d in depths:
        report = train(inner_train, TrainConfig(**{**cfg.__dict__, "depth": d}))
        f1 = tree_metric(report.best_tree, inner_val, "f1")
        if f1 > best:
            best_depth, best = d, f1
    return best_depth


def within_project(ds: Dataset, cfg: TrainConfig, test_fraction: float = 0.2) -> EvalScores:
    return fit_within_project(ds, cfg, test_fraction)[0]


def fit_within_project(ds: Dataset, cfg: TrainConfig, test_fraction: float = 0.2):
    """Stratified split, train on the larger part, score on the held-out part.

    Returns (scores, report, train_split, test_split).
    """
    train_split, test_split = stratified_split(ds, test_fraction, cfg.seed)
    report = train(train_split, cfg)
    return evaluate(report.best_tree, test_split), report, train_split, test_split


def cross_project(projects: list[Dataset], cfg: TrainConfig) -> list[tuple[str, EvalScores]]:
    """Leave-one-project-out: train on all other projects, test on the held-out one."""
    if len(projects) < 2:
        raise TrainError("cross-project validation needs at least 2 projects")
    names = projects[0].schema.names
    for p in projects[1:]:
        if p.schema.names != names:
            raise TrainError(f"schema mismatch between {projects[0].provenance!r} "
                             f"and {p.provenance!r}")
    results = []
    for i, held_out in enumerate(projects):
        others = [p for j, p in enumerate(projects) if j != i]
        training = concat(others, provenance=f"all-but-{held_out.provenance}")
        report = train(training, cfg)
        results.append((held_out.provenance, evaluate(report.best_tree, held_out)))
    return results
