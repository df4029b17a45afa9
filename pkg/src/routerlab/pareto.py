"""Non-dominated accuracy-cost points and the saturating frontier fit.

Operating points live in the (cost, accuracy) plane with cost in display
units ($/10K samples). The frontier is the exponential saturation curve

    y(x) = a * (1 - exp(-b * x)) + c

fit by bound-constrained trust-region least squares over the Pareto set:
c starts at the floor (minimum Pareto accuracy) and floats, a starts at
the accuracy span, b at the reciprocal mean cost.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .errors import EmptyInputError, InsufficientPointsError

MAX_FIT_EVALS = 500
FIT_TOL = 1e-10

Point = tuple[float, float]  # (cost, accuracy)


def pareto_set(points: list[Point]) -> list[Point]:
    """Points not dominated by any other, sorted by ascending cost.

    A point is dominated when another has cost <= and accuracy >= with at
    least one strict inequality.
    """
    if not points:
        raise EmptyInputError("need at least one operating point")
    arr = [(float(x), float(y)) for x, y in points]
    if any(x <= 0 for x, _ in arr):
        raise ValueError("costs must be positive")
    keep = []
    for i, (xi, yi) in enumerate(arr):
        dominated = any(
            (xj <= xi and yj >= yi) and (xj < xi or yj > yi)
            for j, (xj, yj) in enumerate(arr) if j != i
        )
        if not dominated:
            keep.append((xi, yi))
    keep.sort()
    return keep


@dataclass
class FrontierFit:
    a: float
    b: float
    c: float
    r_squared: float
    pareto_points: list[Point]
    c_init: float
    converged: bool = True
    constant_data: bool = False
    residual_norm: float = 0.0
    fit_all_points: bool = False

    def to_json(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c,
            "r_squared": self.r_squared,
            "c_init": self.c_init,
            "converged": self.converged,
            "constant_data": self.constant_data,
            "residual_norm": self.residual_norm,
            "fit_all_points": self.fit_all_points,
            "pareto_points": [list(p) for p in self.pareto_points],
        }


def eval_frontier(fit: FrontierFit, cost: float | np.ndarray) -> float | np.ndarray:
    """Frontier accuracy at the given display-unit cost."""
    value = fit.a * (1.0 - np.exp(-fit.b * np.asarray(cost, dtype=np.float64))) + fit.c
    return float(value) if np.isscalar(cost) or np.ndim(cost) == 0 else value


def fit_frontier(points: list[Point], pareto_only: bool = True) -> FrontierFit:
    """Least-squares fit of the saturation curve over the Pareto set.

    Needs three points with distinct costs. When accuracies are all equal
    the span collapses (a = 0) and R^2 is undefined; the fit is flagged
    ``constant_data``.
    """
    front = pareto_set(points)
    data = front if pareto_only else sorted((float(x), float(y)) for x, y in points)
    x = np.array([p[0] for p in data])
    y = np.array([p[1] for p in data])
    if np.unique(x).size < 3:
        raise InsufficientPointsError(3, int(np.unique(x).size))

    c0 = float(y.min())
    a0 = float(y.max() - y.min())
    b0 = float(1.0 / x.mean())
    if y.max() == y.min():
        return FrontierFit(
            a=0.0, b=b0, c=c0, r_squared=float("nan"), pareto_points=front,
            c_init=c0, converged=True, constant_data=True,
            residual_norm=0.0, fit_all_points=not pareto_only,
        )

    def residuals(theta: np.ndarray) -> np.ndarray:
        a, b, c = theta
        return a * (1.0 - np.exp(-b * x)) + c - y

    result = least_squares(
        residuals,
        x0=np.array([a0, b0, c0]),
        bounds=(np.array([0.0, 0.0, -np.inf]), np.array([np.inf, np.inf, np.inf])),
        method="trf",
        xtol=FIT_TOL,
        gtol=FIT_TOL,
        ftol=FIT_TOL,
        max_nfev=MAX_FIT_EVALS,
    )
    a, b, c = result.x
    pred = a * (1.0 - np.exp(-b * x)) + c
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return FrontierFit(
        a=float(a), b=float(b), c=float(c),
        r_squared=1.0 - ss_res / ss_tot,
        pareto_points=front,
        c_init=c0,
        converged=result.status > 0,
        constant_data=False,
        residual_norm=float(np.sqrt(ss_res)),
        fit_all_points=not pareto_only,
    )


def export_frontier(
    fit: FrontierFit, json_path: str | Path, curve_path: str | Path,
    n_curve: int = 200,
) -> None:
    """Write the fit parameters as JSON and a log-spaced sampled curve as CSV."""
    Path(json_path).write_text(json.dumps(fit.to_json(), sort_keys=True, indent=2),
                               encoding="utf-8")
    costs = np.array([p[0] for p in fit.pareto_points])
    lo, hi = costs.min(), costs.max()
    if hi <= lo:
        hi = lo * 10.0
    grid = np.logspace(np.log10(lo), np.log10(hi), n_curve)
    with open(curve_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["cost", "accuracy"])
        for xc, yc in zip(grid, eval_frontier(fit, grid)):
            w.writerow([repr(float(xc)), repr(float(yc))])
