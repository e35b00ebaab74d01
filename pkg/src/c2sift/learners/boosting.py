"""Stagewise additive boosting on the log-odds scale.

``gbm`` is first-order boosting: the model starts at the base-rate
log-odds F0 = log(pbar/(1-pbar)); each round fits a squared-error
regression tree to the negative gradient of the logistic loss (the
residuals y - sigmoid(F)) and updates F += eta * tree(x).

``gbm2`` is second-order regularized boosting: trees are grown on
per-row gradients g = sigmoid(F) - y and hessians h = sigmoid(F) *
(1 - sigmoid(F)); a leaf's value is -sum(g)/(sum(h) + lam) and a split is
kept only when

    gain = 0.5 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma

is positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .artifact import ModelArtifact, log_loss, register_kind, sigmoid
from .data import LabeledDataset
from .tree import Tree, TreeParams, fit_tree, fit_tree_second_order, tree_predict


@dataclass(frozen=True)
class GBMParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 1
    lam: float = 1.0
    gamma: float = 0.0

    @classmethod
    def from_mapping(cls, params: Mapping) -> "GBMParams":
        return cls(
            n_rounds=int(params.get("n_rounds", 100)),
            learning_rate=float(params.get("learning_rate", 0.1)),
            max_depth=int(params.get("max_depth", 3)),
            min_leaf=int(params.get("min_leaf", 1)),
            lam=float(params.get("lam", 1.0)),
            gamma=float(params.get("gamma", 0.0)),
        )


def _base_log_odds(y: np.ndarray) -> float:
    pbar = float(np.mean(y))
    return float(np.log(pbar / (1.0 - pbar)))


def _fit_boosted(data: LabeledDataset, params: GBMParams, seed: int, second_order: bool) -> ModelArtifact:
    y = data.require_training_labels().astype(float)
    X = data.X
    f0 = _base_log_odds(y)
    F = np.full(data.n_rows, f0)
    tree_params = TreeParams(max_depth=params.max_depth, min_leaf=params.min_leaf)
    trees: list[Tree] = []
    loss_path = [log_loss(y, sigmoid(F))]
    for _ in range(params.n_rounds):
        p = sigmoid(F)
        if second_order:
            tree = fit_tree_second_order(X, p - y, p * (1.0 - p), tree_params, lam=params.lam, gamma=params.gamma)
        else:
            tree = fit_tree(X, y - p, tree_params, criterion="mse")
        F = F + params.learning_rate * tree_predict(tree, X)
        trees.append(tree)
        loss_path.append(log_loss(y, sigmoid(F)))
    kind = "gbm2" if second_order else "gbm"
    return ModelArtifact(
        kind=kind,
        parameters={"f0": f0, "learning_rate": params.learning_rate, "trees": trees},
        seed=seed,
        feature_names=data.feature_names,
        training_meta={
            "n_rounds": params.n_rounds,
            "learning_rate": params.learning_rate,
            "max_depth": params.max_depth,
            "min_leaf": params.min_leaf,
            **({"lam": params.lam, "gamma": params.gamma} if second_order else {}),
            "loss_path": loss_path,
        },
    )


def fit_gbm(data: LabeledDataset, params: Mapping | GBMParams, seed: int = 0) -> ModelArtifact:
    gp = params if isinstance(params, GBMParams) else GBMParams.from_mapping(params)
    return _fit_boosted(data, gp, seed, second_order=False)


def fit_gbm2(data: LabeledDataset, params: Mapping | GBMParams, seed: int = 0) -> ModelArtifact:
    gp = params if isinstance(params, GBMParams) else GBMParams.from_mapping(params)
    return _fit_boosted(data, gp, seed, second_order=True)


def _predict_boosted(artifact: ModelArtifact, X: np.ndarray) -> np.ndarray:
    F = np.full(X.shape[0], float(artifact.parameters["f0"]))
    eta = float(artifact.parameters["learning_rate"])
    for tree in artifact.parameters["trees"]:
        F += eta * tree_predict(tree, X)
    return sigmoid(F)


def _revive_boosted(parameters: dict) -> dict:
    return {
        "f0": parameters["f0"],
        "learning_rate": parameters["learning_rate"],
        "trees": [Tree.from_jsonable(t) for t in parameters["trees"]],
    }


register_kind("gbm", fit_gbm, _predict_boosted, _revive_boosted)
register_kind("gbm2", fit_gbm2, _predict_boosted, _revive_boosted)
