"""Toy-2D accuracy against dilated kernel size, with a frozen-positions control.

    python3 scripts/run_toy2d_sweep.py [--out runs/toy2d] [--seeds 0 1 2] [--sizes 1 3 7]
"""

import argparse
from collections import defaultdict

import numpy as np

from dcls import config, experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/toy2d")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1, 3, 7])
    args = ap.parse_args()

    cfg = experiments.Toy2dConfig()
    config.write_resolved(args.out, {"toy2d": cfg}, "scripts/run_toy2d_sweep.py")
    results = experiments.sweep_toy2d(cfg, tuple(args.sizes), tuple(args.seeds), True, args.out)
    by = defaultdict(list)
    for arm, size, seed, acc in results:
        print(f"{arm:16s} size {size}  seed {seed}: {acc:.3f}")
        by[arm, size].append(acc)
    print()
    for (arm, size), accs in sorted(by.items()):
        print(f"{arm:16s} size {size}: mean {np.mean(accs):.3f}")


if __name__ == "__main__":
    main()
