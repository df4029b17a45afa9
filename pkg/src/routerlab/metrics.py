"""Evaluation protocol: accuracy, cost, normalized cost, Rank Score,
throughput, and per-dataset breakdowns.

Costs are tracked internally in dollars per sample; the $/10K-samples
presentation is a x10^4 display transform applied only when a report is
assembled. The cost range used for normalization spans the cheapest and
most expensive single-model average cost on the test split, which pins
the always-cheapest policy at a normalized cost of exactly 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import Decision
from .errors import DecisionCountMismatchError, ZeroDurationError
from .log_store import BenchStore, SplitAssignment

DISPLAY_SCALE = 1e4  # dollars/sample -> dollars per 10K samples
DEFAULT_BETA = 0.1


@dataclass
class EvalReport:
    router: str
    train_lambda: float | None
    avg_acc: float                    # percent
    avg_cost_per_sample: float        # dollars
    avg_cost_display: float           # dollars per 10K samples
    cost_norm: float                  # in [0, 100]
    rank_score: float
    beta: float
    throughput_ktok_s: float | None
    throughput_includes_embedding: bool
    per_dataset: dict[str, tuple[float, float]] = field(default_factory=dict)
    cost_range: tuple[float, float] = (0.0, 0.0)  # display units

    def to_json(self) -> dict:
        return {
            "router": self.router,
            "train_lambda": self.train_lambda,
            "avg_acc": self.avg_acc,
            "avg_cost_per_sample": self.avg_cost_per_sample,
            "avg_cost_display": self.avg_cost_display,
            "cost_norm": self.cost_norm,
            "rank_score": self.rank_score,
            "beta": self.beta,
            "throughput_ktok_s": self.throughput_ktok_s,
            "throughput_includes_embedding": self.throughput_includes_embedding,
            "per_dataset": {k: list(v) for k, v in self.per_dataset.items()},
            "cost_range": list(self.cost_range),
        }


def _as_indices(decisions: Sequence[Decision] | np.ndarray) -> np.ndarray:
    if isinstance(decisions, np.ndarray):
        return decisions.astype(np.int64)
    return np.array([d.model_index for d in decisions], dtype=np.int64)


def evaluate(
    decisions: Sequence[Decision] | np.ndarray,
    store: BenchStore,
    split: SplitAssignment,
) -> tuple[float, float]:
    """(avg accuracy in percent, avg cost in dollars) on the test split."""
    test = split.test_idx
    dec = _as_indices(decisions)
    if dec.shape[0] != test.shape[0]:
        raise DecisionCountMismatchError(test.shape[0], dec.shape[0])
    acc = 100.0 * store.y[test, dec].mean(dtype=np.float64)
    cost = store.c[test, dec].mean()
    return float(acc), float(cost)


def cost_range(store: BenchStore, split: SplitAssignment) -> tuple[float, float]:
    """Cheapest and priciest single-model mean test cost, in display units."""
    means = store.c[split.test_idx].mean(axis=0)
    return float(means.min() * DISPLAY_SCALE), float(means.max() * DISPLAY_SCALE)


def cost_norm(avg_cost: float, c_min: float, c_max: float) -> float:
    """Log-scale cost mapped to [0, 100]; 100 at c_min, 0 at c_max.

    A collapsed range (c_min == c_max) returns 100 by convention.
    """
    if not (avg_cost > 0 and c_min > 0 and c_max > 0):
        raise ValueError("costs must be positive")
    if c_min == c_max:
        return 100.0
    if c_min > c_max:
        raise ValueError("c_min must not exceed c_max")
    value = 100.0 * (math.log2(c_max) - math.log2(avg_cost)) / (
        math.log2(c_max) - math.log2(c_min))
    return float(min(100.0, max(0.0, value)))


def rank_score(avg_acc: float, cost_norm_value: float, beta: float = DEFAULT_BETA) -> float:
    """Weighted harmonic mean of accuracy and normalized cost."""
    if avg_acc < 0 or cost_norm_value < 0:
        raise ValueError("rank_score inputs must be non-negative")
    denom = beta * avg_acc + cost_norm_value
    if denom == 0:
        return 0.0
    return float((1.0 + beta) * avg_acc * cost_norm_value / denom)


def throughput(total_prompt_tokens: float, wall_seconds: float) -> float:
    """Thousands of tokens pushed through the decision loop per second."""
    if wall_seconds <= 0:
        raise ZeroDurationError(f"wall time must be positive, got {wall_seconds}")
    return float(total_prompt_tokens) / wall_seconds / 1000.0


def build_report(
    router_name: str,
    decisions: Sequence[Decision] | np.ndarray,
    store: BenchStore,
    split: SplitAssignment,
    beta: float = DEFAULT_BETA,
    train_lambda: float | None = None,
    throughput_ktok_s: float | None = None,
    throughput_includes_embedding: bool = False,
) -> EvalReport:
    """Assemble the full per-router report for the test split."""
    avg_acc, avg_cost = evaluate(decisions, store, split)
    c_min, c_max = cost_range(store, split)
    cn = cost_norm(avg_cost * DISPLAY_SCALE, c_min, c_max)
    test = split.test_idx
    dec = _as_indices(decisions)
    per_dataset: dict[str, tuple[float, float]] = {}
    datasets = np.array([store.samples[i].dataset for i in test])
    for name in store.dataset_names():
        rows = np.flatnonzero(datasets == name)
        if rows.size == 0:
            continue
        acc_d = 100.0 * store.y[test[rows], dec[rows]].mean(dtype=np.float64)
        cost_d = store.c[test[rows], dec[rows]].mean() * DISPLAY_SCALE
        per_dataset[name] = (float(acc_d), float(cost_d))
    return EvalReport(
        router=router_name,
        train_lambda=train_lambda,
        avg_acc=avg_acc,
        avg_cost_per_sample=avg_cost,
        avg_cost_display=avg_cost * DISPLAY_SCALE,
        cost_norm=cn,
        rank_score=rank_score(avg_acc, cn, beta),
        beta=beta,
        throughput_ktok_s=throughput_ktok_s,
        throughput_includes_embedding=throughput_includes_embedding,
        per_dataset=per_dataset,
        cost_range=(c_min, c_max),
    )


def leaderboard_rows(reports: list[EvalReport]) -> list[dict]:
    """Rows sorted by descending Rank Score with a lower-cost tie-break."""
    order = sorted(
        range(len(reports)),
        key=lambda i: (-reports[i].rank_score, reports[i].avg_cost_per_sample, i),
    )
    rows = []
    for rank, i in enumerate(order, start=1):
        r = reports[i]
        rows.append({
            "router": r.router,
            "lambda": "" if r.train_lambda is None else r.train_lambda,
            "avg_acc": r.avg_acc,
            "avg_cost": r.avg_cost_display,
            "rank_score": r.rank_score,
            "rank": rank,
            "throughput": "" if r.throughput_ktok_s is None else r.throughput_ktok_s,
        })
    return rows
