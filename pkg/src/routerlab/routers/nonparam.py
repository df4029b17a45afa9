"""Nonparametric routers: neighbor averaging, pairwise preference
aggregation over neighbors, and a nearest-centroid classifier.

Neighbor retrieval is a full scan under squared Euclidean distance with
distance ties broken by lower stored-sample index (stable sort), so a
brute-force rescan reproduces predictions exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import AllCentroidsEmptyError, EmptyTrainSetError
from ..fusion import FusionSpec
from .base import RouterModel, register_predictor

K_GRID = (5, 10, 25, 50)


def _check_train(features: np.ndarray, k: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyTrainSetError("need a non-empty 2-D feature matrix")
    if not 1 <= k <= features.shape[0]:
        raise ValueError(f"k must be in [1, {features.shape[0]}], got {k}")
    return features


def _neighbor_rows(stored: np.ndarray, x: np.ndarray, k: int) -> np.ndarray:
    d2 = ((stored - x) ** 2).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


def train_knn(
    features: np.ndarray,
    targets: np.ndarray,
    k: int,
    fusion: FusionSpec,
    train_lambda: float = 0.0,
) -> RouterModel:
    """Store (feature, soft-target) pairs; predict averages the k nearest."""
    features = _check_train(features, k)
    targets = np.asarray(targets, dtype=np.float64)
    return RouterModel(
        kind="knn",
        fusion=fusion,
        params={"features": features.copy(), "targets": targets.copy()},
        train_lambda=train_lambda,
        meta={"k": int(k), "n_models": targets.shape[1]},
    )


@register_predictor("knn")
def _predict_knn(router: RouterModel, z: np.ndarray) -> np.ndarray:
    stored = router.params["features"]
    targets = router.params["targets"]
    k = router.meta["k"]
    out = np.empty((z.shape[0], targets.shape[1]))
    for i, x in enumerate(z):
        mean = np.mean(targets[_neighbor_rows(stored, x, k)], axis=0)
        out[i] = mean / mean.sum()
    return out


def train_prknn(
    features: np.ndarray,
    y_rows: np.ndarray,
    c_rows: np.ndarray,
    k: int,
    fusion: FusionSpec,
    train_lambda: float = 0.0,
) -> RouterModel:
    """Keep neighbors' full correctness/cost rows for pairwise comparison."""
    features = _check_train(features, k)
    return RouterModel(
        kind="prknn",
        fusion=fusion,
        params={
            "features": features.copy(),
            "y": np.asarray(y_rows, dtype=np.float64).copy(),
            "c": np.asarray(c_rows, dtype=np.float64).copy(),
        },
        train_lambda=train_lambda,
        meta={"k": int(k), "n_models": np.asarray(y_rows).shape[1]},
    )


def copeland_scores(y: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Pairwise-win counts over the retrieved rows.

    Model a beats b on a row when a is correct and b is not, or both are
    correct and a is strictly cheaper.
    """
    ya = y[:, :, None]
    yb = y[:, None, :]
    ca = c[:, :, None]
    cb = c[:, None, :]
    wins = ((ya == 1) & (yb == 0)) | ((ya == 1) & (yb == 1) & (ca < cb))
    return wins.sum(axis=(0, 2)).astype(np.float64)


@register_predictor("prknn")
def _predict_prknn(router: RouterModel, z: np.ndarray) -> np.ndarray:
    stored = router.params["features"]
    y, c = router.params["y"], router.params["c"]
    k = router.meta["k"]
    out = np.empty((z.shape[0], y.shape[1]))
    for i, x in enumerate(z):
        nbr = _neighbor_rows(stored, x, k)
        scores = copeland_scores(y[nbr], c[nbr])
        w = np.exp(scores - scores.max())
        out[i] = w / w.sum()
    return out


def train_kmeans(
    features: np.ndarray,
    targets: np.ndarray,
    fusion: FusionSpec,
    costs: np.ndarray | None = None,
    train_lambda: float = 0.0,
) -> RouterModel:
    """One centroid per model from the samples whose target prefers it.

    Target argmax ties go to the cheaper model when costs are supplied,
    then to the lower index. Models with no assigned sample are marked
    empty and can never be predicted.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n, m = targets.shape
    if n == 0:
        raise AllCentroidsEmptyError("no training samples to assign")
    assigned = np.empty(n, dtype=np.int64)
    for i in range(n):
        cands = np.flatnonzero(targets[i] == targets[i].max())
        if costs is not None and cands.size > 1:
            cands = cands[costs[i, cands] == costs[i, cands].min()]
        assigned[i] = cands[0]
    centroids = np.zeros((m, features.shape[1]))
    empty = np.ones(m)
    for j in range(m):
        rows = np.flatnonzero(assigned == j)
        if rows.size:
            centroids[j] = features[rows].mean(axis=0)
            empty[j] = 0.0
    if empty.all():
        raise AllCentroidsEmptyError("every model ended up with zero assignments")
    return RouterModel(
        kind="kmeans",
        fusion=fusion,
        params={"centroids": centroids, "empty": empty},
        train_lambda=train_lambda,
        meta={"n_models": m},
    )


@register_predictor("kmeans")
def _predict_kmeans(router: RouterModel, z: np.ndarray) -> np.ndarray:
    centroids = router.params["centroids"]
    empty = router.params["empty"].astype(bool)
    live = np.flatnonzero(~empty)
    out = np.zeros((z.shape[0], centroids.shape[0]))
    for i, x in enumerate(z):
        d2 = ((centroids[live] - x) ** 2).sum(axis=1)
        out[i, live[np.argmin(d2)]] = 1.0
    return out
