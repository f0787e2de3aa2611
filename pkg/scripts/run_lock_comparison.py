"""Run the combination-lock comparison and write runs.csv plus curve.svg.

    python3 scripts/run_lock_comparison.py --trials 10 --T 20000 --workers 4 --out results/lock_comparison
"""

import argparse

from sim2real_lab.harness import default_workers, lock_comparison_config, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--T", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--eval-stride", type=int, default=50)
    p.add_argument("--out", default="results/lock_comparison")
    args = p.parse_args()
    cfg = lock_comparison_config(args.trials, args.T, args.seed, args.workers, args.out, args.eval_stride)
    result = run_experiment(cfg)
    eps = 0.125
    for label, row in result.summary.items():
        med = row["median_final_suboptimality"]
        print(f"{label:22s} median final suboptimality {med:.5f}  ({med / eps:.3f} eps_sim)")
    print(f"wrote {result.csv_path} and {result.svg_path}")


if __name__ == "__main__":
    main()
