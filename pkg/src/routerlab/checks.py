"""Self-contained property checks behind the ``verify`` command.

Each check returns (name, passed, detail); the command prints one line
per check and exits nonzero if any fails. The same properties are pinned
at full size in the test suite; this runner keeps sizes small enough to
finish in seconds.
"""

from __future__ import annotations

import math

import numpy as np

from .fusion import PARAMETRIC, fuse_forward, make_fusion
from .log_store import BenchStore, Sample, make_split
from .metrics import cost_norm, rank_score
from .pareto import fit_frontier
from .routers import TrainConfig, predict, train_knn, train_prknn
from .routers.gradient import GRADIENT_KINDS, batch_loss_and_grads, init_head
from .soft_label import build_targets, expected_cost, soft_target, verify_optimality

Check = tuple[str, bool, str]


def _random_row(rng: np.random.Generator, m: int, min_correct: int = 1,
                max_correct: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    hi = max_correct or m
    n_correct = int(rng.integers(min_correct, hi + 1))
    y = np.zeros(m, dtype=np.uint8)
    y[rng.choice(m, size=n_correct, replace=False)] = 1
    c = rng.uniform(1e-4, 2e-2, size=m)
    return y, c


def check_optimality(n_rows: int = 30, grid_step: float = 1e-3) -> Check:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(n_rows):
        y, c = _random_row(rng, 6, min_correct=2, max_correct=4)
        for lam in (0.0, 1.0, 10.0, 100.0):
            worst = max(worst, verify_optimality(y, c, lam, tau=1.0,
                                                 grid_step=grid_step))
    ok = worst <= 2 * grid_step
    return ("soft-label optimality vs simplex grid search", ok,
            f"max L_inf deviation {worst:.2e} (allowed {2 * grid_step:.0e})")


def check_limits(n_rows: int = 300) -> Check:
    rng = np.random.default_rng(11)
    for _ in range(n_rows):
        y, c = _random_row(rng, 5)
        correct = np.flatnonzero(y)
        t0 = soft_target(y, c, 0.0).probs
        uniform = np.zeros(5)
        uniform[correct] = 1.0 / correct.size
        if not np.array_equal(t0, uniform):
            return ("soft-label limits", False, "lam=0 is not uniform over correct")
        tinf = soft_target(y, c, math.inf).probs
        cheapest = correct[np.argmin(c[correct])]
        onehot = np.zeros(5)
        onehot[cheapest] = 1.0
        if not np.array_equal(tinf, onehot):
            return ("soft-label limits", False, "lam=inf is not one-hot on cheapest")
    return ("soft-label limits (lam=0 uniform, lam=inf cheapest)", True,
            f"{n_rows} rows exact")


def check_monotonicity(n_rows: int = 300) -> Check:
    rng = np.random.default_rng(13)
    grid = (0.0, 10.0, 100.0, 1000.0, 10000.0, math.inf)
    worst = 0.0
    for _ in range(n_rows):
        y, c = _random_row(rng, 5)
        costs = [expected_cost(soft_target(y, c, lam), c) for lam in grid]
        worst = max(worst, max(b - a for a, b in zip(costs, costs[1:])))
    return ("expected cost non-increasing in the tilt", worst <= 1e-12,
            f"worst increase {worst:.2e}")


def check_rank_score() -> Check:
    published = rank_score(62.43, 100.0, 0.1)
    if abs(published - 64.63) > 0.05:
        return ("rank score consistency", False, f"got {published:.3f} for the pinned row")
    rng = np.random.default_rng(17)
    for _ in range(100):
        a = rng.uniform(1.0, 100.0)
        beta = rng.uniform(0.01, 10.0)
        if abs(rank_score(a, a, beta) - a) > 1e-9:
            return ("rank score consistency", False, "S(A, A, beta) != A")
    return ("rank score consistency", True,
            f"pinned row -> {published:.3f}; S(A,A,beta)=A on 100 draws")


def check_unit_invariance() -> Check:
    rng = np.random.default_rng(19)
    y = (rng.random((40, 4)) < 0.6).astype(np.uint8)
    y[y.sum(axis=1) == 0, 0] = 1
    c = rng.uniform(1e-4, 1e-2, size=(40, 4))
    base_t, _ = build_targets(y, c, 100.0)
    base_cn = cost_norm(3e-3, 1e-3, 1e-2)
    for s in (0.01, 100.0):
        t, _ = build_targets(y, c * s, 100.0 / s)
        if np.abs(t - base_t).max() > 1e-9:
            return ("unit invariance", False, f"targets moved under scale {s}")
        cn = cost_norm(3e-3 * s, 1e-3 * s, 1e-2 * s)
        if abs(cn - base_cn) > 1e-9:
            return ("unit invariance", False, f"cost_norm moved under scale {s}")
    return ("unit invariance under cost rescaling", True, "scales {0.01, 100} exact")


def check_pareto_recovery() -> Check:
    a, b, c = 30.0, 2.0, 60.0
    xs = [0.1, 0.3, 0.7, 1.5, 3.0]
    pts = [(x, a * (1 - math.exp(-b * x)) + c) for x in xs]
    fit = fit_frontier(pts)
    rel = max(abs(fit.a - a) / a, abs(fit.b - b) / b, abs(fit.c - c) / c)
    ok = rel <= 1e-4 and fit.r_squared >= 0.999999
    return ("frontier fit parameter recovery", ok,
            f"rel err {rel:.2e}, R^2 {fit.r_squared:.8f}")


def _fd_grads(loss_fn, params: dict[str, np.ndarray], h: float = 1e-6) -> dict:
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def check_gradients(points: int = 3) -> Check:
    rng = np.random.default_rng(23)
    n, m, dv, dq = 6, 3, 5, 4
    worst = 0.0
    for kind in GRADIENT_KINDS:
        for fusion_method in ("concat",) + PARAMETRIC:
            dvv = dq if fusion_method == "weighted_average" else dv
            for _ in range(points):
                fusion = make_fusion(fusion_method, dvv, dq, rng=rng, fused_dim=6)
                head = init_head(kind, rng, fusion.output_dim, m)
                v = rng.normal(size=(n, dvv))
                q = rng.normal(size=(n, dq))
                y = (rng.random((n, m)) < 0.7).astype(np.uint8)
                y[y.sum(axis=1) == 0, 0] = 1
                t, _ = build_targets(y, rng.uniform(1e-4, 1e-2, (n, m)), 10.0)
                groups = rng.integers(0, 2, size=n)
                _, analytic = batch_loss_and_grads(kind, head, fusion, v, q, t, groups)
                tracked = {f"head.{k}": p for k, p in head.items()}
                tracked.update({f"fusion.{k}": p for k, p in fusion.params.items()})
                numeric = _fd_grads(
                    lambda: batch_loss_and_grads(kind, head, fusion, v, q, t, groups)[0],
                    tracked,
                )
                for name, g in numeric.items():
                    ga = analytic[name]
                    rel = np.abs(ga - g) / np.maximum(np.abs(ga) + np.abs(g), 1e-3)
                    worst = max(worst, float(rel.max()))
    return ("analytic gradients vs central differences", worst <= 1e-4,
            f"worst relative error {worst:.2e}")


def check_knn_equivalence() -> Check:
    rng = np.random.default_rng(29)
    n, m, d = 60, 4, 6
    feats = rng.normal(size=(n, d))
    y = (rng.random((n, m)) < 0.5).astype(np.uint8)
    y[y.sum(axis=1) == 0, 0] = 1
    c = rng.uniform(1e-4, 1e-2, (n, m))
    targets, _ = build_targets(y, c, 10.0)
    fusion = make_fusion("concat", d // 2, d - d // 2)
    knn = train_knn(feats, targets, 5, fusion)
    prknn = train_prknn(feats, y, c, 5, fusion)
    queries = rng.normal(size=(20, d))
    for x in queries:
        d2 = ((feats - x) ** 2).sum(axis=1)
        order = sorted(range(n), key=lambda i: (d2[i], i))[:5]
        expect = np.mean(targets[order], axis=0)
        expect = expect / expect.sum()
        got = predict(knn, x[: d // 2], x[d // 2:])
        if not np.array_equal(got, expect):
            return ("neighbor routers vs brute force", False, "knn mismatch")
        scores = np.zeros(m)
        for i in order:
            for a in range(m):
                for b in range(m):
                    if a == b:
                        continue
                    if (y[i, a] == 1 and y[i, b] == 0) or (
                        y[i, a] == 1 and y[i, b] == 1 and c[i, a] < c[i, b]
                    ):
                        scores[a] += 1
        w = np.exp(scores - scores.max())
        if not np.array_equal(predict(prknn, x[: d // 2], x[d // 2:]), w / w.sum()):
            return ("neighbor routers vs brute force", False, "prknn mismatch")
    return ("neighbor routers vs brute force", True, "20 queries exact")


def check_split_determinism() -> Check:
    rng = np.random.default_rng(31)
    samples = [Sample(f"ds{i % 3}", i, "x.png", "p") for i in range(120)]
    y = (rng.random((120, 3)) < 0.5).astype(np.uint8)
    c = rng.uniform(1e-4, 1e-2, (120, 3))
    store = BenchStore(samples, ["a", "b", "c"], y, c)
    s1 = make_split(store, seed=5)
    s2 = make_split(store, seed=5)
    same = np.array_equal(s1.labels, s2.labels)
    differs = not np.array_equal(make_split(store, seed=6).labels, s1.labels)
    return ("split determinism and seed sensitivity", same and differs,
            "same seed identical; different seed differs")


ALL_CHECKS = (
    check_optimality,
    check_limits,
    check_monotonicity,
    check_rank_score,
    check_unit_invariance,
    check_pareto_recovery,
    check_gradients,
    check_knn_equivalence,
    check_split_determinism,
)


def run_all() -> list[Check]:
    return [fn() for fn in ALL_CHECKS]
