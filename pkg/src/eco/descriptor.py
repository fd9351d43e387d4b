"""Compositional scene descriptors: weighted means of strip features,
optionally mapped through a trained domain adapter first."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, NumericError


@dataclass
class SceneDescriptor:
    values: np.ndarray
    strip_ids: list[int] = field(default_factory=list)
    weight_scheme: str = "uniform"


def compose(features, weights, strip_ids=None, weight_scheme="uniform") -> SceneDescriptor:
    """Convex combination (1/sum w_i) sum w_i f_i; all weights must be positive."""
    feats = [np.asarray(f, dtype=np.float64).reshape(-1) for f in features]
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(feats) == 0:
        raise FormatError("cannot compose an empty feature list")
    if len(feats) != len(w):
        raise FormatError("features and weights differ in length")
    if (w <= 0).any():
        raise NumericError("weights must be strictly positive")
    stacked = np.stack(feats)
    values = (w[:, None] * stacked).sum(axis=0) / w.sum()
    return SceneDescriptor(values=values, strip_ids=list(strip_ids or []),
                           weight_scheme=weight_scheme)


def proximity_weights(distances) -> np.ndarray:
    """w_i = 1 / r_i for camera-to-strip distances r_i."""
    r = np.asarray(distances, dtype=np.float64).reshape(-1)
    if (r <= 0).any():
        raise NumericError("distances must be positive")
    return 1.0 / r


def compose_adapted(features, weights, adapter, strip_ids=None) -> SceneDescriptor:
    """Compose after mapping each feature through the residual adapter F."""
    adapted = [adapter.adapt(np.asarray(f, dtype=np.float64)) for f in features]
    desc = compose(adapted, weights, strip_ids=strip_ids, weight_scheme="adapted")
    return desc
