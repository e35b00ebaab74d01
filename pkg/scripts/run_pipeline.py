#!/usr/bin/env python3
"""Run the full synthetic pipeline and print the headline metrics.

Example:
    python scripts/run_pipeline.py --out runs/demo --seed 7 --jobs 4
"""
import argparse
import json
import sys
import time
from pathlib import Path

from c2sift.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/demo"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--scenario", choices=("default", "overlap"), default="default")
    parser.add_argument("--jobs", type=int, default=4)
    args = parser.parse_args()

    t0 = time.time()
    rc = cli_main(
        [
            "pipeline",
            "--out", str(args.out),
            "--seed", str(args.seed),
            "--scenario", args.scenario,
            "--jobs", str(args.jobs),
        ]
    )
    if rc != 0:
        return rc
    wall = time.time() - t0

    evaluation = json.loads((args.out / "evaluation" / "evaluation.json").read_text())
    print(f"pipeline finished in {wall:.0f}s -> {args.out}")
    print(f"{'model':8s} {'AUC':>7s} {'boot AUC':>9s} {'sens':>6s}")
    for kind in ("rf", "pca_rf", "gbm", "gbm2", "glm", "lasso", "stack"):
        r = evaluation[kind]
        print(
            f"{kind:8s} {r['point_auc']:7.4f} {r['bootstrap_auc_mean']:9.4f} "
            f"{r['point_sensitivity']:6.3f}"
        )
    triage = json.loads((args.out / "triage" / "triage_summary.json").read_text())
    print("triage outcomes:", triage["outcomes"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
