"""Learned routing policies over fused embedding features."""

from .base import PREDICTORS, RouterModel, TrainConfig, predict, route
from .checkpoint import load_checkpoint, save_checkpoint
from .gradient import (
    GRADIENT_KINDS,
    batch_loss_and_grads,
    train_gradient_router,
    train_ovr,
)
from .nonparam import K_GRID, train_kmeans, train_knn, train_prknn

ALL_KINDS = ("knn", "prknn", "kmeans", "ovr") + GRADIENT_KINDS

__all__ = [
    "ALL_KINDS",
    "GRADIENT_KINDS",
    "K_GRID",
    "PREDICTORS",
    "RouterModel",
    "TrainConfig",
    "batch_loss_and_grads",
    "load_checkpoint",
    "predict",
    "route",
    "save_checkpoint",
    "train_gradient_router",
    "train_kmeans",
    "train_knn",
    "train_ovr",
    "train_prknn",
]
