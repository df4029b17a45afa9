"""Training-free routing policies: Oracle, Strongest, Cheapest.

All tie-breaks are deterministic so leaderboards are reproducible:
cost ties by lowest model index, accuracy ties by lower mean cost
(Strongest) or higher mean accuracy (Cheapest), then lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySplitError


@dataclass(frozen=True)
class Decision:
    """Index of the routed model."""

    model_index: int


def oracle_decision(y_row: np.ndarray, c_row: np.ndarray) -> Decision:
    """Cheapest correct model; globally cheapest when nothing is correct."""
    y_row = np.asarray(y_row)
    c_row = np.asarray(c_row, dtype=np.float64)
    correct = np.flatnonzero(y_row != 0)
    pool = correct if correct.size else np.arange(c_row.size)
    best = pool[np.argmin(c_row[pool])]  # argmin takes the first, so lowest index wins ties
    return Decision(int(best))


def oracle_decisions(Y: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Vector of oracle decisions for every row."""
    return np.array([oracle_decision(y, c).model_index for y, c in zip(Y, C)],
                    dtype=np.int64)


def _best_index(primary: np.ndarray, secondary: np.ndarray, maximize: bool) -> int:
    """Argbest of primary with secondary-then-index tie-breaks (both minimized)."""
    best = primary.max() if maximize else primary.min()
    candidates = np.flatnonzero(primary == best)
    return int(candidates[np.argmin(secondary[candidates])])


def strongest_model(y_train: np.ndarray, c_train: np.ndarray) -> Decision:
    """Model with the highest mean train accuracy; ties by lower mean cost."""
    y_train = np.asarray(y_train)
    if y_train.shape[0] == 0:
        raise EmptySplitError("strongest_model needs a non-empty train split")
    acc = y_train.mean(axis=0, dtype=np.float64)
    cost = np.asarray(c_train, dtype=np.float64).mean(axis=0)
    return Decision(_best_index(acc, cost, maximize=True))


def cheapest_model(c_train: np.ndarray, y_train: np.ndarray) -> Decision:
    """Model with the lowest mean train cost; ties by higher mean accuracy."""
    c_train = np.asarray(c_train, dtype=np.float64)
    if c_train.shape[0] == 0:
        raise EmptySplitError("cheapest_model needs a non-empty train split")
    cost = c_train.mean(axis=0)
    acc = np.asarray(y_train).mean(axis=0, dtype=np.float64)
    return Decision(_best_index(cost, -acc, maximize=False))
