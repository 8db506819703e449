"""TSC score and confidence score for real data, a trained GAN and a degraded GAN."""

import argparse

from gantsc.experiments import score_ordering

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--degrade-epochs", type=int, default=30)
    args = ap.parse_args()
    res = score_ordering(args.seed, degrade_epochs=args.degrade_epochs)
    print(f"{'dataset':10s} {'TSC':>8s} {'se':>7s} {'confidence':>11s}")
    for name, rep in res["tsc"].items():
        print(f"{name:10s} {rep.score:8.3f} {rep.stderr:7.3f} {res['confidence'][name]:11.3f}")
