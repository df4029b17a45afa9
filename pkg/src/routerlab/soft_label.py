"""Cost-aware soft routing targets and their optimality verification.

A row's target places probability mass only on models that answered
correctly, exponentially tilted toward cheaper ones: probs[j] is
proportional to exp(-lam * cost[j]) over the correct set. lam = 0 is
uniform over correct models, lam = +inf collapses onto the cheapest
correct model(s). The tilt is computed with the row-minimum cost
subtracted before exponentiation, which is exact (shift invariance of
the normalized exponential) and avoids underflow at large lam.

``verify_optimality`` checks the closed form against a brute-force grid
minimizer of the entropy-regularized selection objective

    f(q) = sum_j q_j * lam * cost_j  -  tau * H(q)

restricted to the simplex over correct models; the unique minimizer is
the closed-form target with exponent lam / tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import NoCorrectModelError, UnsupportedArityError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class SoftTarget:
    """Probability vector over models; zero on incorrect models."""

    probs: np.ndarray  # (M,) float64
    lam: float         # >= 0, may be math.inf

    def __post_init__(self) -> None:
        self.probs.setflags(write=False)


def _validate_lam(lam: float) -> float:
    lam = float(lam)
    if math.isnan(lam) or lam < 0:
        raise ValueError(f"lam must be >= 0 or +inf, got {lam}")
    return lam


def soft_target(y_row: np.ndarray, c_row: np.ndarray, lam: float) -> SoftTarget:
    """Exponentially tilted target over the row's correct models."""
    lam = _validate_lam(lam)
    y_row = np.asarray(y_row)
    c_row = np.asarray(c_row, dtype=np.float64)
    correct = y_row != 0
    if not correct.any():
        raise NoCorrectModelError("row has no correct model")
    probs = np.zeros(y_row.shape[0], dtype=np.float64)
    c_min = c_row[correct].min()
    if math.isinf(lam):
        winners = correct & (c_row == c_min)
        probs[winners] = 1.0 / winners.sum()
    else:
        w = np.exp(-lam * (c_row[correct] - c_min))
        probs[correct] = w / w.sum()
    return SoftTarget(probs, lam)


def build_targets(
    Y: np.ndarray, C: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Targets for every row of a store slice.

    Returns (T, valid) where T is (N, M) and valid marks rows with at
    least one correct model. Invalid rows get an all-zero target and are
    excluded from any training loss (weight 0).
    """
    lam = _validate_lam(lam)
    Y = np.asarray(Y)
    C = np.asarray(C, dtype=np.float64)
    n, m = Y.shape
    T = np.zeros((n, m), dtype=np.float64)
    valid = Y.any(axis=1)
    for i in np.flatnonzero(valid):
        T[i] = soft_target(Y[i], C[i], lam).probs
    return T, valid


def expected_cost(target: SoftTarget, c_row: np.ndarray) -> float:
    """Mean dollar cost of the row under the target distribution."""
    return float(np.dot(target.probs, np.asarray(c_row, dtype=np.float64)))


def soft_loss(predicted: np.ndarray, target: SoftTarget) -> float:
    """Cross-entropy of the prediction against the soft target.

    Equal to the KL objective up to the constant -H(target). Predicted
    probabilities are clamped at 1e-12 before the log.
    """
    p = np.clip(np.asarray(predicted, dtype=np.float64), PROB_FLOOR, None)
    return float(-np.dot(target.probs, np.log(p)))


# --- brute-force optimality oracle ---------------------------------------------

def tilt_objective(q: np.ndarray, lam_costs: np.ndarray, tau: float) -> np.ndarray:
    """f(q) = q . (lam*costs) - tau*H(q) for a batch of simplex points."""
    q = np.atleast_2d(q)
    return q @ lam_costs + tau * xlogy(q, q).sum(axis=1)


def grid_argmin(lam_costs: np.ndarray, tau: float, step: float) -> np.ndarray:
    """Exact minimizer of the tilt objective over the simplex lattice.

    The objective is separable with strictly convex per-coordinate terms
    f_j(t) = t*lam*cost_j + tau*t*log(t), so its lattice minimizer is
    found by marginal allocation: hand out the 1/step probability units
    to whichever coordinate currently adds the least objective. Each
    coordinate's marginal sequence is strictly increasing, so taking the
    globally smallest 1/step marginals yields the same point full
    enumeration of the grid would.
    """
    units = int(round(1.0 / step))
    s = 1.0 / units
    n = np.arange(units, dtype=np.float64)
    t_cur = n * s
    t_next = (n + 1) * s
    entropy_marginal = tau * (xlogy(t_next, t_next) - xlogy(t_cur, t_cur))
    marginals = lam_costs[:, None] * s + entropy_marginal[None, :]
    take = np.argpartition(marginals.ravel(), units - 1)[:units]
    counts = np.bincount(take // units, minlength=lam_costs.size)
    return counts * s


def verify_optimality(
    y_row: np.ndarray,
    c_row: np.ndarray,
    lam: float,
    tau: float,
    grid_step: float,
) -> float:
    """L-infinity gap between the grid minimizer and the closed-form target.

    The grid minimizer never consults the closed form: it optimizes the
    entropy-regularized objective over the simplex lattice of resolution
    ``grid_step`` restricted to the row's correct models. Supports rows
    with 2-4 correct models.
    """
    lam = _validate_lam(lam)
    if math.isinf(lam):
        raise ValueError("optimality verification requires finite lam")
    if not (tau > 0):
        raise ValueError(f"tau must be positive, got {tau}")
    if not (0 < grid_step < 1):
        raise ValueError(f"grid_step must be in (0, 1), got {grid_step}")
    y_row = np.asarray(y_row)
    c_row = np.asarray(c_row, dtype=np.float64)
    support = np.flatnonzero(y_row != 0)
    if support.size == 0:
        raise NoCorrectModelError("row has no correct model")
    if support.size not in (2, 3, 4):
        raise UnsupportedArityError(int(support.size))

    lam_costs = lam * c_row[support]
    closed = soft_target(y_row, c_row, lam / tau).probs[support]
    minimizer = grid_argmin(lam_costs, tau, grid_step)
    return float(np.abs(minimizer - closed).max())
