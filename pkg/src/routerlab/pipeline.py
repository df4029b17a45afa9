"""Glue between the store, routers, and metrics: target building, router
training by name, timed evaluation, and the tilt-parameter sweep behind
the leaderboard.

The leaderboard keeps, per router, the tilt value with the best mean
Rank Score on the test split; gradient-trained routers are run for
several trials with derived seeds and reported as the across-trial mean.
Parallelism is capped by the VLRB_THREADS environment variable and
results are ordered deterministically regardless of worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import cheapest_model, oracle_decisions, strongest_model
from .errors import RouterLabError
from .fusion import FusionSpec, fuse, make_fusion
from .log_store import BenchStore, EmbeddingTable, SplitAssignment
from .metrics import (
    DISPLAY_SCALE,
    EvalReport,
    build_report,
    cost_norm,
    rank_score,
    throughput,
)
from .routers import (
    GRADIENT_KINDS,
    K_GRID,
    RouterModel,
    TrainConfig,
    route,
    train_gradient_router,
    train_kmeans,
    train_knn,
    train_ovr,
    train_prknn,
)
from .soft_label import build_targets

LAMBDA_GRID = (0.0, 10.0, 100.0, 1000.0, 10000.0, math.inf)
DEFAULT_FUSION = "normalize_concat"
NEIGHBOR_KINDS = ("knn", "prknn")


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("VLRB_THREADS", "1")))
    except ValueError:
        return 1


def dataset_codes(store: BenchStore) -> np.ndarray:
    names = store.dataset_names()
    code = {d: i for i, d in enumerate(names)}
    return np.array([code[s.dataset] for s in store.samples], dtype=np.int64)


def make_fusion_for(
    method: str, table: EmbeddingTable, seed: int
) -> FusionSpec:
    return make_fusion(method, table.dim_image, table.dim_text,
                       rng=np.random.default_rng(seed))


def _subset_score(
    router: RouterModel,
    store: BenchStore,
    table: EmbeddingTable,
    rows: np.ndarray,
    beta: float,
) -> float:
    """Rank score on an arbitrary row subset (used for dev-split tuning)."""
    dec = route(router, table.image[rows], table.text[rows])
    acc = 100.0 * store.y[rows, dec].mean(dtype=np.float64)
    cost = store.c[rows, dec].mean()
    means = store.c[rows].mean(axis=0)
    cn = cost_norm(cost * DISPLAY_SCALE, means.min() * DISPLAY_SCALE,
                   means.max() * DISPLAY_SCALE)
    return rank_score(float(acc), cn, beta)


def train_router(
    kind: str,
    store: BenchStore,
    split: SplitAssignment,
    table: EmbeddingTable,
    lam: float,
    config: TrainConfig | None = None,
    fusion_method: str = DEFAULT_FUSION,
    k: int | None = None,
    beta: float = 0.1,
) -> RouterModel:
    """Train one router on the train split.

    Neighbor routers pick k on the dev split from the standard grid when
    it is not given. Rows without a correct model are dropped from
    target-supervised training; one-vs-rest and the pairwise neighbor
    router keep every row.
    """
    config = config or TrainConfig()
    tr = split.train_idx
    fusion = make_fusion_for(fusion_method, table, config.seed)
    v_tr, q_tr = table.image[tr], table.text[tr]

    if kind in NEIGHBOR_KINDS and k is None:
        best = None
        for cand in K_GRID:
            if cand > tr.size:
                continue
            r = train_router(kind, store, split, table, lam, config,
                             fusion_method, k=cand, beta=beta)
            score = _subset_score(r, store, table, split.dev_idx, beta)
            if best is None or score > best[0]:
                best = (score, cand, r)
        if best is None:
            raise RouterLabError("train split smaller than every k candidate")
        return best[2]

    if kind in GRADIENT_KINDS or kind in ("knn", "kmeans"):
        targets, valid = build_targets(store.y[tr], store.c[tr], lam)
        rows = np.flatnonzero(valid)
        if kind in GRADIENT_KINDS:
            groups = dataset_codes(store)[tr][rows]
            return train_gradient_router(
                kind, v_tr[rows], q_tr[rows], targets[rows], config, fusion,
                train_lambda=lam, groups=groups,
            )
        feats = fuse(v_tr[rows], q_tr[rows], fusion)
        if kind == "knn":
            return train_knn(feats, targets[rows], k or 5, fusion, train_lambda=lam)
        return train_kmeans(feats, targets[rows], fusion,
                            costs=store.c[tr][rows], train_lambda=lam)

    feats = fuse(v_tr, q_tr, fusion)
    if kind == "prknn":
        return train_prknn(feats, store.y[tr], store.c[tr], k or 5, fusion,
                           train_lambda=lam)
    if kind == "ovr":
        return train_ovr(feats, store.y[tr], store.c[tr], config, fusion,
                         train_lambda=lam)
    raise ValueError(f"unknown router kind {kind!r}")


def evaluate_router(
    router: RouterModel,
    name: str,
    store: BenchStore,
    split: SplitAssignment,
    table: EmbeddingTable,
    beta: float = 0.1,
) -> EvalReport:
    """Report on the test split, timing the decision loop for throughput.

    Embedding extraction happens upstream of this artifact, so the
    throughput flag records that extraction time is excluded.
    """
    test = split.test_idx
    v, q = table.image[test], table.text[test]
    t0 = time.perf_counter()
    decisions = route(router, v, q)
    wall = time.perf_counter() - t0
    tput = None
    if store.prompt_tokens is not None and wall > 0:
        tput = throughput(float(store.prompt_tokens[test].sum()), wall)
    return build_report(
        name, decisions, store, split, beta=beta,
        train_lambda=router.train_lambda,
        throughput_ktok_s=tput,
        throughput_includes_embedding=False,
    )


def baseline_reports(
    store: BenchStore, split: SplitAssignment, beta: float = 0.1
) -> list[EvalReport]:
    tr, te = split.train_idx, split.test_idx
    oracle = oracle_decisions(store.y[te], store.c[te])
    strongest = np.full(te.size, strongest_model(store.y[tr], store.c[tr]).model_index)
    cheapest = np.full(te.size, cheapest_model(store.c[tr], store.y[tr]).model_index)
    return [
        build_report("oracle", oracle, store, split, beta=beta),
        build_report("strongest", strongest, store, split, beta=beta),
        build_report("cheapest", cheapest, store, split, beta=beta),
    ]


@dataclass
class SweepEntry:
    kind: str
    lam: float
    report: EvalReport          # across-trial mean
    per_trial: list[EvalReport]
    routers: list[RouterModel]


def _mean_report(kind: str, lam: float, reports: list[EvalReport]) -> EvalReport:
    if len(reports) == 1:
        return reports[0]
    first = reports[0]
    mean = lambda f: float(np.mean([f(r) for r in reports]))  # noqa: E731
    acc = mean(lambda r: r.avg_acc)
    cost = mean(lambda r: r.avg_cost_per_sample)
    cn = cost_norm(cost * DISPLAY_SCALE, *first.cost_range)
    tputs = [r.throughput_ktok_s for r in reports if r.throughput_ktok_s is not None]
    per_dataset = {
        name: (
            float(np.mean([r.per_dataset[name][0] for r in reports])),
            float(np.mean([r.per_dataset[name][1] for r in reports])),
        )
        for name in first.per_dataset
    }
    return EvalReport(
        router=first.router,
        train_lambda=lam,
        avg_acc=acc,
        avg_cost_per_sample=cost,
        avg_cost_display=cost * DISPLAY_SCALE,
        cost_norm=cn,
        rank_score=rank_score(acc, cn, first.beta),
        beta=first.beta,
        throughput_ktok_s=float(np.mean(tputs)) if tputs else None,
        throughput_includes_embedding=False,
        per_dataset=per_dataset,
        cost_range=first.cost_range,
    )


def sweep_router(
    kind: str,
    store: BenchStore,
    split: SplitAssignment,
    table: EmbeddingTable,
    lam_grid: tuple[float, ...] = LAMBDA_GRID,
    config: TrainConfig | None = None,
    trials: int = 5,
    fusion_method: str = DEFAULT_FUSION,
    k: int | None = None,
    beta: float = 0.1,
) -> list[SweepEntry]:
    """Train and evaluate one router across the tilt grid.

    Deterministic routers run once per tilt; gradient routers run
    ``trials`` times with derived seeds and are summarized by the mean.
    """
    config = config or TrainConfig()
    n_trials = trials if kind in GRADIENT_KINDS else 1
    jobs = [(lam, t) for lam in lam_grid for t in range(n_trials)]

    def run(job: tuple[float, int]) -> tuple[float, int, RouterModel, EvalReport]:
        lam, trial = job
        cfg = replace(config, seed=config.seed + 9973 * trial)
        router = train_router(kind, store, split, table, lam, cfg,
                              fusion_method, k=k, beta=beta)
        report = evaluate_router(router, kind, store, split, table, beta=beta)
        return lam, trial, router, report

    workers = max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    entries = []
    for lam in lam_grid:
        group = sorted([r for r in results if r[0] == lam], key=lambda r: r[1])
        reports = [r[3] for r in group]
        entries.append(SweepEntry(
            kind=kind, lam=lam,
            report=_mean_report(kind, lam, reports),
            per_trial=reports,
            routers=[r[2] for r in group],
        ))
    return entries


def best_entry(entries: list[SweepEntry]) -> SweepEntry:
    """Highest mean Rank Score; ties prefer the cheaper operating point."""
    return min(entries, key=lambda e: (-e.report.rank_score,
                                       e.report.avg_cost_per_sample))
