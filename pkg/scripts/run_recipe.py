"""Run one named recipe from configs/ through the CLI, step by step.

    python3 scripts/run_recipe.py fig1c_pfake [--seed 0]

Artifacts land in runs/<recipe>/<step>/ (paths inside the configs assume the
repository root is the working directory).
"""

import argparse
import json
import sys
from pathlib import Path

from gantsc.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def run(recipe: str, seed: int | None) -> int:
    cfg_dir = ROOT / "configs" / recipe
    steps = json.loads((cfg_dir / "steps.json").read_text())
    for command, config, out in steps:
        argv = [command, "--config", str(cfg_dir / config), "--out", f"runs/{recipe}/{out}"]
        if seed is not None:
            argv += ["--seed", str(seed)]
        print("==>", " ".join(argv), flush=True)
        code = cli(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("recipe", choices=sorted(p.name for p in (ROOT / "configs").iterdir() if p.is_dir()))
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    sys.exit(run(args.recipe, args.seed))
