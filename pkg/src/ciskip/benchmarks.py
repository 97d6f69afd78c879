"""Planted-tree benchmark protocols shared by the experiment scripts and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset import stratified_split
from .synth import gen_synth
from .trainer import TrainConfig, evaluate, gini_baseline, train


@dataclass
class SeedResult:
    seed: int
    best_train_f1: float
    heldout_f1: float
    gini_heldout_f1: float
    seconds: float


def planted_benchmark(seeds=range(5), n_rows=1000, skip_fraction=0.10, planted_depth=2,
                      noise=0.05, cfg: TrainConfig | None = None,
                      test_fraction: float = 0.2) -> list[SeedResult]:
    """RL tree vs greedy Gini tree on planted data, 80/20 stratified split per seed."""
    cfg = cfg or TrainConfig(depth=3, episodes=400)
    out = []
    for seed in seeds:
        ds, _ = gen_synth(n_rows, skip_fraction, planted_depth, noise, seed)
        tr, te = stratified_split(ds, test_fraction, seed)
        t0 = time.perf_counter()
        rep = train(tr, replace(cfg, seed=seed))
        secs = time.perf_counter() - t0
        base = gini_baseline(tr, cfg.depth)
        out.append(SeedResult(seed, rep.best_train_f1, evaluate(rep.best_tree, te).f1,
                              evaluate(base, te).f1, secs))
    return out


def workflow_benchmark(seeds=range(5), n_rows=1000, skip_fraction=0.10, planted_depth=2,
                       noise=0.05, cfg: TrainConfig | None = None,
                       test_fraction: float = 0.2) -> list[tuple[int, float, float]]:
    """Held-out F1 with all 29 columns vs the 26 commit-level columns, per seed.

    Labels come from a planted tree whose second level splits on workflow columns.
    """
    cfg = cfg or TrainConfig(depth=3, episodes=400)
    out = []
    for seed in seeds:
        ds, _ = gen_synth(n_rows, skip_fraction, planted_depth, noise, seed, workflow=True)
        tr, te = stratified_split(ds, test_fraction, seed)
        clf = ds.schema.names[:26]
        full = evaluate(train(tr, replace(cfg, seed=seed)).best_tree, te).f1
        rep = train(tr.with_columns(clf), replace(cfg, seed=seed))
        commit_only = evaluate(rep.best_tree, te.with_columns(clf)).f1
        out.append((seed, full, commit_only))
    return out


def median(values) -> float:
    return float(np.median(np.asarray(list(values), dtype=np.float64)))
