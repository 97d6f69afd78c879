"""Command-line front end.

Exit codes: 0 success (and "skip" for ``tag``), 1 "build" decision from
``tag``, 2 for any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import gitfeat
from .dataset import DatasetError, Label, concat, load_csv, stratified_split, write_csv
from .metrics import format_percent_line, report_row, write_report
from .synth import SynthError, gen_synth
from .trainer import (TrainConfig, TrainError, cross_project, evaluate, gini_baseline,
                      select_depth, train)
from .tree import TreeError, classify, feature_importance, load_model, save_model

EXIT_OK, EXIT_BUILD, EXIT_ERROR = 0, 1, 2
TAG = "[CI SKIP]"


class CliError(Exception):
    pass


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path, project=None):
    path = Path(path)
    sidecar = path.with_name(path.stem + ".schema.json")
    return load_csv(path, sidecar if sidecar.exists() else None, provenance=project)


def _write_dataset(ds, path):
    path = Path(path)
    write_csv(ds, path, path.with_name(path.stem + ".schema.json"))


def _train_config(args) -> TrainConfig:
    base = TrainConfig.load(args.config).to_json() if args.config else TrainConfig().to_json()
    for key in ("depth", "episodes", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    return TrainConfig.from_json(base)


def cmd_extract(args):
    if args.workflow and not args.runs:
        args.parser.error("--workflow needs --runs <ci-run log>")
    runs = gitfeat.load_runs(args.runs) if args.runs else None
    cats = gitfeat.Categories.load(args.categories) if args.categories else None
    ds = gitfeat.build_dataset(args.repo, args.branch, runs, args.workflow, categories=cats)
    out = _out_dir(args.out)
    _write_dataset(ds, out / "dataset.csv")
    n_skip, n_build = ds.class_counts()
    print(f"extracted {len(ds)} commits ({n_skip} skip, {n_build} build), "
          f"{ds.n_features} features -> {out / 'dataset.csv'}")


def cmd_gen_synth(args):
    ds, planted = gen_synth(args.n_rows, args.skip_fraction, args.planted_depth, args.noise,
                            args.seed, workflow=args.workflow)
    out = _out_dir(args.out)
    _write_dataset(ds, out / "dataset.csv")
    save_model(planted, out / "planted_tree.json")
    print(f"wrote {len(ds)} rows, skip fraction {ds.skip_fraction:.3f} -> {out / 'dataset.csv'}")


def cmd_train(args):
    ds = _load_dataset(args.data, args.project)
    cfg = _train_config(args)
    out = _out_dir(args.out)
    train_split, test_split = stratified_split(ds, args.test_fraction, cfg.seed)
    if args.depth_sweep:
        cfg.depth = select_depth(train_split, cfg)
        print(f"depth sweep picked d={cfg.depth}")
    report = train(train_split, cfg)
    _write_dataset(train_split, out / "train.csv")
    _write_dataset(test_split, out / "test.csv")
    save_model(report.best_tree, out / "model.json")
    _dump_json(cfg.to_json(), out / "config.json")
    _dump_json(report.history_json(), out / "history.json")
    _dump_json({"train_config": cfg.to_json(), "episodes_done": cfg.episodes,
                "agent": report.agent.to_json()}, out / "checkpoint.json")
    project = ds.provenance
    rl_scores = evaluate(report.best_tree, test_split)
    rows = [report_row(project, "test", rl_scores)]
    print(f"best train F1 {report.best_train_f1:.4f} (episode {report.best_episode})")
    print(format_percent_line(project, "test", rl_scores))
    if args.baseline == "gini":
        base = gini_baseline(train_split, cfg.depth)
        save_model(base, out / "baseline_model.json")
        base_scores = evaluate(base, test_split)
        rows.append(report_row(project, "test-gini", base_scores))
        print(format_percent_line(project, "test-gini", base_scores))
    write_report(out / "report.csv", rows)


def cmd_eval(args):
    ds = _load_dataset(args.data, args.project)
    rows = []
    for label, path in (("test", args.model), ("test-gini", args.baseline_model)):
        if path is None:
            continue
        tree = load_model(path, ds.schema)
        s = evaluate(tree, ds)
        rows.append(report_row(ds.provenance, label, s))
        print(format_percent_line(ds.provenance, label, s))
    out = _out_dir(args.out)
    write_report(out / "report.csv", rows)


def cmd_cross(args):
    projects = [_load_dataset(p) for p in args.data]
    cfg = _train_config(args)
    results = cross_project(projects, cfg)
    rows = []
    for (name, s), held in zip(results, projects):
        rows.append(report_row(name, "cross", s))
        print(format_percent_line(name, "cross", s))
        if args.baseline == "gini":
            others = concat([p for p in projects if p is not held])
            b = evaluate(gini_baseline(others, cfg.depth), held)
            rows.append(report_row(name, "cross-gini", b))
            print(format_percent_line(name, "cross-gini", b))
    out = _out_dir(args.out)
    write_report(out / "report.csv", rows)


def cmd_importance(args):
    ds = _load_dataset(args.data)
    tree = load_model(args.model, ds.schema)
    shares = feature_importance(tree, ds)
    ranked = sorted(shares.items(), key=lambda kv: (-kv[1], kv[0]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "share"])
        for name, share in ranked:
            if share > 0:
                w.writerow([name, f"{share:.6f}"])
    for name, share in ranked[:5]:
        print(f"{name:<16} {share:.4f}")


def _read_feature_row(path, schema) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise CliError(f"{path}: expected exactly one feature row, found {len(rows)}")
    row = rows[0]
    missing = [n for n in schema.names if n not in row]
    if missing:
        raise CliError(f"{path}: features missing for model schema: {missing}")
    try:
        return np.array([float(row[n]) for n in schema.names])
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_tag(args) -> int:
    tree = load_model(args.model)
    x = _read_feature_row(args.features, tree.schema)
    message = args.message
    if gitfeat.label_skip(message) == Label.SKIP:
        print(message)
        return EXIT_OK
    if classify(tree, x) == Label.SKIP:
        print(f"{message} {TAG}")
        return EXIT_OK
    print(message)
    return EXIT_BUILD


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ciskip", description="CI-skip prediction with RL-built trees")
    sub = p.add_subparsers(dest="command", required=True)

    def add_train_flags(sp):
        sp.add_argument("--config", help="JSON training config; flags override it")
        sp.add_argument("--depth", type=int)
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--baseline", choices=["gini"])

    sp = sub.add_parser("extract", help="mine commit features from a git repository")
    sp.add_argument("--repo", required=True)
    sp.add_argument("--branch", default="HEAD")
    sp.add_argument("--runs", help="CI run log CSV")
    sp.add_argument("--workflow", action="store_true", help="add PBS, Fail_rate, avg_exp")
    sp.add_argument("--categories", help="JSON file-category config")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_extract, parser=sp)

    sp = sub.add_parser("gen-synth", help="write a planted-tree synthetic dataset")
    sp.add_argument("--n-rows", type=int, default=1000)
    sp.add_argument("--skip-fraction", type=float, default=0.10)
    sp.add_argument("--planted-depth", type=int, default=2)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--workflow", action="store_true", help="append workflow-level columns")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_synth)

    sp = sub.add_parser("train", help="stratified split, RL training, held-out report")
    sp.add_argument("--data", required=True)
    sp.add_argument("--test-fraction", type=float, default=0.2)
    sp.add_argument("--depth-sweep", action="store_true", help="choose d from {3,4,5}")
    sp.add_argument("--project", help="name used in the report (default: CSV file stem)")
    add_train_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a saved model on a dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--baseline-model")
    sp.add_argument("--project", help="name used in the report (default: CSV file stem)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("cross", help="leave-one-project-out validation")
    sp.add_argument("--data", nargs="+", required=True)
    add_train_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_cross)

    sp = sub.add_parser("importance", help="rank features by weighted impurity decrease")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_importance)

    sp = sub.add_parser("tag", help="append [CI SKIP] when the model says skip")
    sp.add_argument("--model", required=True)
    sp.add_argument("--message", required=True)
    sp.add_argument("--features", required=True, help="single-row feature CSV")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_tag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except (CliError, DatasetError, TreeError, TrainError, SynthError, gitfeat.GitError,
            ValueError, OSError) as exc:
        print(f"ciskip {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
