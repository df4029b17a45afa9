"""Router model container, training configuration, and the predict surface.

Every strategy produces a RouterModel holding its fusion spec and a
strategy-specific parameter block; ``predict`` fuses the raw embeddings
and dispatches to the strategy's probability head. Decisions are the
argmax with a lowest-index tie-break (one-vs-rest additionally prefers
the cheaper model on exact probability ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..baselines import Decision
from ..errors import DimMismatchError
from ..fusion import FusionSpec, fuse_forward

MAX_EPOCHS = 1000


@dataclass
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 16
    weight_decay: float = 0.01
    epochs: int = 5
    seed: int = 0
    schedule: str = "cosine"
    optimizer: str = "adamw"

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.epochs > MAX_EPOCHS:
            raise ValueError(f"epochs capped at {MAX_EPOCHS}")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "seed": self.seed,
            "schedule": self.schedule,
            "optimizer": self.optimizer,
        }

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        return TrainConfig(**obj)


@dataclass
class RouterModel:
    kind: str
    fusion: FusionSpec
    params: dict[str, np.ndarray]
    train_lambda: float
    meta: dict = field(default_factory=dict)

    @property
    def n_models(self) -> int:
        return int(self.meta["n_models"])


# Strategy name -> batch probability head (router, fused (n, d)) -> (n, M).
PREDICTORS: dict[str, Callable[[RouterModel, np.ndarray], np.ndarray]] = {}


def register_predictor(kind: str):
    def deco(fn):
        PREDICTORS[kind] = fn
        return fn
    return deco


def predict(router: RouterModel, v: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Probability vector over models for one query or a batch."""
    z, cache = fuse_forward(v, q, router.fusion)
    probs = PREDICTORS[router.kind](router, z)
    return probs[0] if cache["single"] else probs


def route(router: RouterModel, v: np.ndarray, q: np.ndarray) -> Decision | np.ndarray:
    """Routed model index: argmax probability, lowest index on ties."""
    probs = predict(router, v, q)
    single = probs.ndim == 1
    batch = probs[None, :] if single else probs
    decisions = np.argmax(batch, axis=1).astype(np.int64)
    tie_cost = router.params.get("mean_cost")
    if tie_cost is not None:
        top = batch.max(axis=1, keepdims=True)
        for i in np.flatnonzero((batch == top).sum(axis=1) > 1):
            cands = np.flatnonzero(batch[i] == top[i, 0])
            decisions[i] = cands[np.argmin(tie_cost[cands])]
    return Decision(int(decisions[0])) if single else decisions


def check_feature_dim(router: RouterModel, d: int) -> None:
    expected = router.fusion.output_dim
    if d != expected:
        raise DimMismatchError("fused feature", expected, d)
