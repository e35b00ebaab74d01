#!/usr/bin/env python3
"""Quantile-feature ablation study on the static-overlap scenario.

Trains a random forest with and without the distributional block on a
scenario whose per-flow byte distributions share mean and variance across
classes, then compares bootstrap AUC and prints the top permutation
importances. This is the experiment behind acceptance criteria 5 and 6.

Example:
    python scripts/ablation_study.py --out runs/ablation --seed 21
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from c2sift.cli import main as cli_main
from c2sift.evaluate import auc, bootstrap_metrics, permutation_importance
from c2sift.features import FeatureConfig, block_ranges, feature_names
from c2sift.learners import fit_random_forest, load_feature_matrix, predict_proba


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/ablation"))
    parser.add_argument("--seed", type=int, default=21)
    parser.add_argument("--trees", type=int, default=200)
    parser.add_argument("--bootstrap", type=int, default=1000)
    args = parser.parse_args()

    for tag, seed in (("train", args.seed), ("test", args.seed + 1)):
        data_dir = args.out / f"{tag}_data"
        if cli_main(["generate", "--out", str(data_dir), "--seed", str(seed), "--scenario", "overlap"]):
            return 1
        for suffix, extra in (("", []), ("_ablated", ["--ablate-distributional"])):
            rc = cli_main(
                [
                    "featurize",
                    "--flows", str(data_dir / "flows.csv"),
                    "--internal-space", str(data_dir / "internal_space.txt"),
                    "--labels", str(data_dir / "labels.csv"),
                    "--out", str(args.out / f"features_{tag}{suffix}"),
                ]
                + extra
            )
            if rc:
                return rc

    results = {}
    for suffix in ("", "_ablated"):
        train = load_feature_matrix(args.out / f"features_train{suffix}" / "features.csv")
        test = load_feature_matrix(args.out / f"features_test{suffix}" / "features.csv")
        model = fit_random_forest(train, {"n_trees": args.trees, "mtry": "sqrt"}, seed=11)
        scores = predict_proba(model, test.X, test.feature_names)
        boot, _ = bootstrap_metrics(scores, test.y, B=args.bootstrap, seed=13)
        results[suffix] = (model, test, auc(scores, test.y), float(np.mean(boot)))

    print(f"{'feature set':24s} {'point AUC':>9s} {'boot AUC':>9s}")
    print(f"{'full (97 features)':24s} {results[''][2]:9.4f} {results[''][3]:9.4f}")
    print(f"{'ablated (31 features)':24s} {results['_ablated'][2]:9.4f} {results['_ablated'][3]:9.4f}")
    print(f"bootstrap AUC gap: {results[''][3] - results['_ablated'][3]:.4f}")

    model, test = results[""][0], results[""][1]
    importance = permutation_importance(model, test, repeats=3, seed=17)
    cfg = FeatureConfig()
    dist = {feature_names(cfg)[i] for i in block_ranges(cfg)["distributional"]}
    top = importance.top(20)
    in_block = sum(1 for name, _, _ in top if name in dist)
    print(f"\ntop-20 permutation importances ({in_block}/20 distributional):")
    for name, raw, pct in top:
        print(f"  {name:20s} raw={raw:8.5f} percentile={pct:5.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
