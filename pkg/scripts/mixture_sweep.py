"""MLP teacher/student stream-mixture accuracy over p_fake, averaged over seeds."""

import argparse

import numpy as np

from gantsc.experiments import mlp_pfake

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--grid", type=float, nargs="+", default=[0.0, 0.2, 0.5, 0.8, 1.0])
    args = ap.parse_args()
    runs = [mlp_pfake(s, tuple(args.grid)) for s in range(args.seeds)]
    print("teacher     ", round(np.mean([r["teacher"] for r in runs]), 4))
    print("student-only", round(np.mean([r["student_only"] for r in runs]), 4))
    for p in args.grid:
        accs = [r["p_fake"][p] for r in runs]
        print(f"p_fake {p:.1f}  ", round(np.mean(accs), 4), np.round(accs, 4))
