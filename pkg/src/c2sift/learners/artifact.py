"""Model artifacts: a uniform container for every classifier kind.

An artifact carries the fitted parameters, the seed it was trained with,
the training-time feature names, and free-form training metadata. Kinds
register fit/predict/revive callables so cross-validation, stacking, and
the CLI can treat all models uniformly (tests may register extra kinds).

Serialization is JSON with a version tag; floats round-trip exactly via
repr, so a reloaded model scores a probe matrix bit-for-bit identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .data import LabeledDataset

ARTIFACT_VERSION = 1


@dataclass
class ModelArtifact:
    kind: str
    parameters: dict
    seed: int
    feature_names: tuple[str, ...]
    training_meta: dict = field(default_factory=dict)
    version: int = ARTIFACT_VERSION


Fitter = Callable[[LabeledDataset, Mapping, int], ModelArtifact]
Predictor = Callable[[ModelArtifact, np.ndarray], np.ndarray]
Reviver = Callable[[dict], dict]

FITTERS: dict[str, Fitter] = {}
PREDICTORS: dict[str, Predictor] = {}
REVIVERS: dict[str, Reviver] = {}


def register_kind(kind: str, fitter: Fitter | None, predictor: Predictor, reviver: Reviver | None = None) -> None:
    if fitter is not None:
        FITTERS[kind] = fitter
    PREDICTORS[kind] = predictor
    if reviver is not None:
        REVIVERS[kind] = reviver


def fit_model(kind: str, data: LabeledDataset, params: Mapping, seed: int) -> ModelArtifact:
    if kind not in FITTERS:
        raise ValueError(f"unknown model kind {kind!r}")
    return FITTERS[kind](data, params, seed)


def _align_columns(artifact: ModelArtifact, X: np.ndarray, feature_names) -> np.ndarray:
    if feature_names is None:
        if X.shape[1] != len(artifact.feature_names):
            raise ValueError(
                f"X has {X.shape[1]} columns, model {artifact.kind!r} expects "
                f"{len(artifact.feature_names)}; pass feature_names to align by name"
            )
        return X
    index = {name: i for i, name in enumerate(feature_names)}
    missing = [name for name in artifact.feature_names if name not in index]
    if missing:
        raise ValueError(f"feature column(s) missing: {', '.join(missing)}")
    cols = [index[name] for name in artifact.feature_names]
    return X[:, cols]


def predict_proba(artifact: ModelArtifact, X: np.ndarray, feature_names: tuple[str, ...] | None = None) -> np.ndarray:
    """Scores in [0, 1]; columns are matched to the model by name.

    Raises with the offending column on a name mismatch and with the
    offending row/column on non-finite input.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    X = _align_columns(artifact, X, feature_names)
    if not np.all(np.isfinite(X)):
        row, col = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite input at row {row}, column {artifact.feature_names[col]!r}")
    if artifact.kind not in PREDICTORS:
        raise ValueError(f"no predictor registered for kind {artifact.kind!r}")
    probs = PREDICTORS[artifact.kind](artifact, X)
    return np.clip(probs, 0.0, 1.0)


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "to_jsonable"):
        return _to_jsonable(obj.to_jsonable())
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def save_model(artifact: ModelArtifact, path: str | Path) -> None:
    payload = {
        "format": "c2sift-model",
        "version": artifact.version,
        "kind": artifact.kind,
        "seed": artifact.seed,
        "feature_names": list(artifact.feature_names),
        "training_meta": _to_jsonable(artifact.training_meta),
        "parameters": _to_jsonable(artifact.parameters),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> ModelArtifact:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "c2sift-model":
        raise ValueError(f"{path}: not a model artifact")
    version = payload.get("version")
    if not isinstance(version, int) or version > ARTIFACT_VERSION:
        raise ValueError(
            f"{path}: artifact version {version!r} is newer than supported version {ARTIFACT_VERSION}"
        )
    kind = payload["kind"]
    parameters = payload["parameters"]
    if kind in REVIVERS:
        parameters = REVIVERS[kind](parameters)
    return ModelArtifact(
        kind=kind,
        parameters=parameters,
        seed=payload["seed"],
        feature_names=tuple(payload["feature_names"]),
        training_meta=payload.get("training_meta", {}),
        version=version,
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean logistic loss with probability clipping for the log only."""
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
