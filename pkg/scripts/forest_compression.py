"""Forest compression on the Gaussian-mixture benchmark over several seeds.

Prints student-only, real-only TSC, pooled GAN-TSC and the GAN-assisted
supervised control, each as mean +- standard error.
"""

import argparse
from dataclasses import asdict

from gantsc.experiments import forest_compression, mean_se

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--teacher-trees", type=int, default=500)
    ap.add_argument("--student-trees", type=int, default=1)
    args = ap.parse_args()
    runs = []
    for seed in range(args.seeds):
        r = forest_compression(seed, args.teacher_trees, args.student_trees)
        runs.append(asdict(r))
        print(seed, {k: round(v, 4) for k, v in runs[-1].items()}, flush=True)
    for key in runs[0]:
        m, se = mean_se([r[key] for r in runs])
        print(f"{key:18s} {m:.4f} +- {se:.4f}")
