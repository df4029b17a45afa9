"""Command-line pipeline: synth/ingest -> split -> train -> evaluate ->
leaderboard -> pareto -> verify.

Artifacts are tracked in a run manifest (manifest.json in the output
directory) that records a SHA-256 per file; loading an artifact through
the manifest re-checks its hash. Exit codes: 1 validation failure, 2 bad
arguments, 3 missing artifact, with a machine-readable JSON error on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

from . import checks
from .errors import ArtifactHashError, MissingArtifactError, RouterLabError
from .log_store import (
    BenchStore,
    SplitAssignment,
    ingest,
    load_embeddings,
    make_split,
    read_jsonl,
    read_prices,
    write_embeddings,
    write_jsonl,
    write_prices,
)
from .metrics import leaderboard_rows
from .pareto import export_frontier, fit_frontier
from .pipeline import (
    LAMBDA_GRID,
    baseline_reports,
    best_entry,
    evaluate_router,
    sweep_router,
    train_router,
)
from .routers import ALL_KINDS, TrainConfig, load_checkpoint, save_checkpoint
from .synth import SynthConfig, generate

EXIT_VALIDATION = 1
EXIT_BAD_ARGS = 2
EXIT_MISSING = 3

ROUTER_FLAG = {
    "knn": "knn", "prknn": "prknn", "kmeans": "kmeans", "ovr": "ovr",
    "linear": "linear", "mlp": "mlp", "cosine": "cosine_cls",
    "routerdc": "router_dc", "zooter": "zooter",
}
FUSION_FLAG = {
    "text": "only_text", "image": "only_image", "concat": "concat",
    "normconcat": "normalize_concat", "wavg": "weighted_average",
    "gmu": "gmu", "mlb": "mlb",
}


class Manifest:
    """Hash ledger for the artifacts a run reads and writes."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.entries: dict[str, str] = {}
        if self.path.exists():
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))

    @staticmethod
    def digest(path: Path) -> str:
        h = hashlib.sha256()
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest()

    def record(self, path: Path) -> None:
        self.entries[path.name] = self.digest(path)
        self.path.write_text(json.dumps(self.entries, sort_keys=True, indent=2),
                             encoding="utf-8")

    def check(self, path: Path) -> None:
        if not path.exists():
            raise MissingArtifactError(str(path))
        recorded = self.entries.get(path.name)
        if recorded is not None and recorded != self.digest(path):
            raise ArtifactHashError(str(path))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_store(args, manifest: Manifest) -> BenchStore:
    path = Path(args.store)
    manifest.check(path)
    return BenchStore.load(path)


def _load_split(args, manifest: Manifest) -> SplitAssignment:
    path = Path(args.split)
    manifest.check(path)
    return SplitAssignment.from_json(json.loads(path.read_text(encoding="utf-8")))


def _load_table(args, store: BenchStore, manifest: Manifest):
    path = Path(args.embeddings)
    manifest.check(path)
    return load_embeddings(path, store)


def _parse_lambda(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
    )


def cmd_synth(args) -> int:
    out = _out_dir(args)
    config = SynthConfig(
        n_samples=args.samples,
        n_models=args.models,
        n_datasets=args.datasets,
        dim_text=args.dim_text,
        dim_image=args.dim_image,
        skill_spread=args.skill_spread,
        cluster_affinity=args.affinity,
        price_range=(args.price_low, args.price_high),
        token_range=(args.token_low, args.token_high),
        seed=args.seed,
    )
    result = generate(config)
    manifest = Manifest(out)
    write_jsonl(out / "logs.jsonl", result.records)
    write_prices(out / "prices.csv", result.prices)
    write_embeddings(out / "embeddings.vlrb", result.table, result.samples)
    for name in ("logs.jsonl", "prices.csv", "embeddings.vlrb"):
        manifest.record(out / name)
    print(f"wrote {len(result.records)} records for "
          f"{config.n_samples} samples x {config.n_models} models to {out}")
    return 0


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    store = ingest(read_jsonl(args.logs), read_prices(args.prices))
    store.save(out / "store.npz")
    Manifest(out).record(out / "store.npz")
    print(f"store: {store.n_samples} samples x {store.n_models} models, "
          f"{len(store.dataset_names())} datasets")
    return 0


def cmd_split(args) -> int:
    out = _out_dir(args)
    manifest = Manifest(out)
    store = _load_store(args, manifest)
    split = make_split(store, args.seed)
    (out / "split.json").write_text(json.dumps(split.to_json()), encoding="utf-8")
    manifest.record(out / "split.json")
    counts = {name: int((split.labels == i).sum())
              for i, name in enumerate(("train", "dev", "test"))}
    print(f"split seed={args.seed}: {counts}")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    manifest = Manifest(out)
    store = _load_store(args, manifest)
    split = _load_split(args, manifest)
    table = _load_table(args, store, manifest)
    kind = ROUTER_FLAG[args.router]
    lam = _parse_lambda(args.lam)
    config = _train_config(args)
    router = train_router(kind, store, split, table, lam, config,
                          FUSION_FLAG[args.fusion], k=args.k, beta=args.beta)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    name = f"{args.router}_lambda_{args.lam}.ckpt"
    fingerprint = store.fingerprint(split.labels.tobytes() + str(args.seed).encode())
    save_checkpoint(ckpt_dir / name, router, config, fingerprint)
    manifest.record(ckpt_dir / name)
    print(f"checkpoint {ckpt_dir / name}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    manifest = Manifest(out)
    store = _load_store(args, manifest)
    split = _load_split(args, manifest)
    table = _load_table(args, store, manifest)
    manifest.check(Path(args.checkpoint))
    router, _, _ = load_checkpoint(args.checkpoint)
    name = Path(args.checkpoint).stem
    report = evaluate_router(router, name, store, split, table, beta=args.beta)
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    path = reports_dir / f"{name}.json"
    # Measured timing is jitter, so it lives in a sidecar and the report
    # itself stays byte-identical across re-runs on unchanged inputs.
    body = report.to_json()
    sidecar = {"throughput_ktok_s": body.pop("throughput_ktok_s")}
    path.write_text(json.dumps(body, sort_keys=True, indent=2), encoding="utf-8")
    (reports_dir / f"{name}.meta.json").write_text(
        json.dumps(sidecar, sort_keys=True), encoding="utf-8")
    manifest.record(path)
    print(f"{name}: acc {report.avg_acc:.2f} cost {report.avg_cost_display:.2f} "
          f"rank {report.rank_score:.2f}")
    return 0


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)


def cmd_leaderboard(args) -> int:
    out = _out_dir(args)
    manifest = Manifest(out)
    store = _load_store(args, manifest)
    split = _load_split(args, manifest)
    table = _load_table(args, store, manifest)
    kinds = [ROUTER_FLAG[r.strip()] for r in args.routers.split(",") if r.strip()]
    grid = tuple(_parse_lambda(s) for s in args.lambda_grid.split(","))
    config = _train_config(args)

    reports = baseline_reports(store, split, beta=args.beta)
    all_rows = []
    for kind in kinds:
        entries = sweep_router(kind, store, split, table, grid, config,
                               trials=args.trials,
                               fusion_method=FUSION_FLAG[args.fusion],
                               k=args.k, beta=args.beta)
        for e in entries:
            all_rows.append(e.report)
        reports.append(best_entry(entries).report)

    rows = leaderboard_rows(reports)
    _write_csv(out / "leaderboard.csv", rows,
               ["router", "lambda", "avg_acc", "avg_cost", "rank_score",
                "rank", "throughput"])
    manifest.record(out / "leaderboard.csv")

    per_dataset = []
    for r in reports:
        for ds, (acc, cost) in r.per_dataset.items():
            per_dataset.append({
                "router": r.router,
                "lambda": "" if r.train_lambda is None else r.train_lambda,
                "dataset": ds, "avg_acc": acc, "avg_cost": cost,
            })
    _write_csv(out / "per_dataset.csv", per_dataset,
               ["router", "lambda", "dataset", "avg_acc", "avg_cost"])
    manifest.record(out / "per_dataset.csv")

    sweep_path = out / "sweep.json"
    sweep_path.write_text(json.dumps([r.to_json() for r in all_rows],
                                     sort_keys=True, indent=2), encoding="utf-8")
    manifest.record(sweep_path)
    for row in rows:
        print(f"{row['rank']:>3}  {row['router']:<12} lam={row['lambda']!s:<8} "
              f"acc={row['avg_acc']:.2f} cost={row['avg_cost']:.3f} "
              f"rank_score={row['rank_score']:.2f}")
    return 0


def cmd_pareto(args) -> int:
    out = _out_dir(args)
    manifest = Manifest(out)
    sweep_path = Path(args.sweep)
    manifest.check(sweep_path)
    rows = json.loads(sweep_path.read_text(encoding="utf-8"))
    by_router: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        by_router.setdefault(r["router"], []).append(
            (r["avg_cost_display"], r["avg_acc"]))
    wrote = 0
    for router, points in by_router.items():
        try:
            try:
                fit = fit_frontier(points)
            except RouterLabError:
                # operating points can collapse onto a short frontier at
                # desk scale; fall back to fitting every point
                fit = fit_frontier(points, pareto_only=False)
        except RouterLabError as e:
            print(f"{router}: skipped ({e})", file=sys.stderr)
            continue
        export_frontier(fit, out / f"frontier_{router}.json",
                        out / f"frontier_{router}.csv")
        manifest.record(out / f"frontier_{router}.json")
        manifest.record(out / f"frontier_{router}.csv")
        print(f"{router}: a={fit.a:.3f} b={fit.b:.4f} c={fit.c:.3f} "
              f"R^2={fit.r_squared:.5f}")
        wrote += 1
    return 0 if wrote else EXIT_VALIDATION


def cmd_verify(args) -> int:
    results = checks.run_all()
    failed = 0
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="routerlab",
                                description="model-routing workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def common_io(sp, store=True, split=True, embeddings=True):
        if store:
            sp.add_argument("--store", required=True, help="store.npz path")
        if split:
            sp.add_argument("--split", required=True, help="split.json path")
        if embeddings:
            sp.add_argument("--embeddings", required=True, help="embeddings.vlrb path")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--beta", type=float, default=0.1)
        sp.add_argument("--seed", type=int, default=0)

    def train_flags(sp):
        sp.add_argument("--fusion", choices=sorted(FUSION_FLAG), default="normconcat")
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--epochs", type=int, default=5)
        sp.add_argument("--lr", type=float, default=2e-5)
        sp.add_argument("--batch", type=int, default=16)

    sp = sub.add_parser("synth", help="generate a synthetic benchmark")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--models", type=int, default=6)
    sp.add_argument("--datasets", type=int, default=4)
    sp.add_argument("--dim-text", type=int, default=16)
    sp.add_argument("--dim-image", type=int, default=16)
    sp.add_argument("--skill-spread", type=float, default=2.0)
    sp.add_argument("--affinity", type=float, default=0.9)
    sp.add_argument("--price-low", type=float, default=0.05)
    sp.add_argument("--price-high", type=float, default=10.0)
    sp.add_argument("--token-low", type=int, default=64)
    sp.add_argument("--token-high", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("ingest", help="build the store from logs and prices")
    sp.add_argument("--logs", required=True)
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ingest)

    sp = sub.add_parser("split", help="deterministic train/dev/test split")
    sp.add_argument("--store", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_split)

    sp = sub.add_parser("train", help="train one router")
    common_io(sp)
    sp.add_argument("--router", choices=sorted(ROUTER_FLAG), required=True)
    sp.add_argument("--lambda", dest="lam", default="100")
    train_flags(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    common_io(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("leaderboard", help="sweep routers over the tilt grid")
    common_io(sp)
    sp.add_argument("--routers", default="knn,prknn,kmeans,ovr,linear,mlp")
    sp.add_argument("--lambda-grid", dest="lambda_grid",
                    default=",".join(str(g) for g in LAMBDA_GRID))
    sp.add_argument("--trials", type=int, default=5)
    train_flags(sp)
    sp.set_defaults(fn=cmd_leaderboard)

    sp = sub.add_parser("pareto", help="fit frontiers from a sweep")
    sp.add_argument("--sweep", required=True, help="sweep.json from leaderboard")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_pareto)

    sp = sub.add_parser("verify", help="run the property-check suite")
    sp.set_defaults(fn=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (MissingArtifactError,) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return EXIT_MISSING
    except (RouterLabError, ValueError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
