"""Delay-learning ablation: learned vs fixed random delays, sparse and fully connected.

    python3 scripts/run_snn_ablation.py [--out runs/snn-ablation] [--seeds 0 1 2] [--modes ...]

Each run writes metrics.csv, position snapshots and a delay histogram into its
own directory; summary.csv collects the final accuracies.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from dcls import config, experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/snn-ablation")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--modes", nargs="+", default=["learn-delays", "fixed-random-delays"],
                    choices=experiments.SNN_MODES)
    ap.add_argument("--sparse-connections", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()

    out = Path(args.out)
    base = experiments.SnnExperimentConfig()
    if args.epochs:
        base = replace(base, epochs=args.epochs)
    rows = []
    for arm, connections in (("sparse", args.sparse_connections), ("dense", 0)):
        for mode in args.modes:
            for seed in args.seeds:
                cfg = replace(base, mode=mode, seed=seed, connections=connections)
                run_dir = out / f"{arm}-{mode}-seed{seed}"
                config.write_resolved(run_dir, {"snn": cfg}, "scripts/run_snn_ablation.py")
                t0 = time.perf_counter()
                res = experiments.train_snn(cfg, run_dir)
                print(f"{arm:6s} {mode:20s} seed {seed}: discrete {res.test_acc:.3f} "
                      f"continuous {res.test_acc_continuous:.3f} ({time.perf_counter() - t0:.0f}s)", flush=True)
                rows.append([arm, mode, seed, res.test_acc, res.test_acc_continuous])
    experiments.write_csv(out / "summary.csv", ["arm", "mode", "seed", "test_acc", "test_acc_continuous"], rows)

    print("\narm     mode                  mean discrete  mean continuous")
    for arm in ("sparse", "dense"):
        for mode in args.modes:
            sel = [r for r in rows if r[0] == arm and r[1] == mode]
            print(f"{arm:6s}  {mode:20s}  {np.mean([r[3] for r in sel]):.3f}          "
                  f"{np.mean([r[4] for r in sel]):.3f}")


if __name__ == "__main__":
    main()
