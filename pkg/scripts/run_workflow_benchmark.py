"""Compare held-out F1 with and without the three workflow columns on planted data."""
import argparse
import csv

from ciskip.benchmarks import median, workflow_benchmark
from ciskip.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n-rows", type=int, default=1000)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--episodes", type=int, default=400)
    ap.add_argument("--out", default="workflow_benchmark.csv")
    args = ap.parse_args()

    results = workflow_benchmark(range(args.seeds), args.n_rows,
                                 cfg=TrainConfig(depth=args.depth, episodes=args.episodes))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "f1_all_columns", "f1_commit_columns"])
        for seed, full, commit_only in results:
            writer.writerow([seed, full, commit_only])
            print(f"seed {seed}: all columns {full:.3f}  commit columns {commit_only:.3f}")
    print(f"median all columns {median(r[1] for r in results):.3f}  "
          f"commit columns {median(r[2] for r in results):.3f}")


if __name__ == "__main__":
    main()
