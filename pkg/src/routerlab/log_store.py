"""Inference-log ingestion and the aligned quality/cost matrices.

The store is dense by construction: every sample must carry one record per
priced model, and every cost cell is derived from the record's token counts
and the model's per-million-token prices. Sample order is first-appearance
order in the record stream; model order is price-sheet order, so matrix
columns are reproducible across runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DuplicateRecordError,
    FormatError,
    IncompleteSampleError,
    InvalidRecordError,
    MissingPriceError,
    NonFiniteValueError,
    RowCountMismatchError,
    TooFewSamplesError,
)

TRAIN, DEV, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "dev", "test")

_JSONL_FIELDS = (
    "dataset", "index", "image_path", "prompt", "model",
    "output", "correct", "tokens_in", "tokens_out",
)


@dataclass(frozen=True)
class RecordLog:
    """One sample-model inference outcome."""

    dataset_name: str
    sample_index: int
    image_path: str
    prompt: str
    model_name: str
    model_output: str
    correct: bool
    tokens_in: int
    tokens_out: int

    def validate(self) -> None:
        if self.sample_index < 0:
            raise InvalidRecordError(f"negative sample index {self.sample_index}")
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise InvalidRecordError(
                f"negative token count on ({self.dataset_name}, {self.sample_index}, "
                f"{self.model_name})"
            )
        if self.prompt and self.tokens_in < 1:
            raise InvalidRecordError(
                f"record ({self.dataset_name}, {self.sample_index}, {self.model_name}) "
                "has a non-empty prompt but tokens_in < 1"
            )

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.dataset_name, self.sample_index, self.model_name)


@dataclass(frozen=True)
class PriceEntry:
    """Per-million-token input/output prices for one model, in dollars."""

    model_name: str
    price_in: float
    price_out: float

    def validate(self) -> None:
        if not (self.price_in > 0 and self.price_out > 0):
            raise InvalidRecordError(
                f"prices for {self.model_name!r} must be positive, got "
                f"({self.price_in}, {self.price_out})"
            )


@dataclass(frozen=True)
class Sample:
    dataset: str
    index: int
    image_path: str
    prompt: str


def compute_cost(tokens_in: int, tokens_out: int, price: PriceEntry) -> float:
    """Dollar cost of one inference from token counts and 1M-token prices."""
    if tokens_in < 0 or tokens_out < 0:
        raise InvalidRecordError("token counts must be non-negative")
    return tokens_in * price.price_in / 1e6 + tokens_out * price.price_out / 1e6


@dataclass
class BenchStore:
    """Aligned quality matrix Y and cost matrix C over samples x models.

    Immutable after construction; the arrays are write-protected so that
    concurrent readers are always safe. ``prompt_tokens`` keeps the
    per-sample mean input-token count from the logs purely for
    throughput reporting; it plays no role in any metric formula.
    """

    samples: list[Sample]
    models: list[str]
    y: np.ndarray  # (N, M) uint8 in {0, 1}
    c: np.ndarray  # (N, M) float64, dollars per sample, all > 0
    prompt_tokens: np.ndarray | None = None  # (N,) float64

    def __post_init__(self) -> None:
        self.y = np.ascontiguousarray(self.y, dtype=np.uint8)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        if self.y.shape != self.c.shape or self.y.shape != (len(self.samples), len(self.models)):
            raise InvalidRecordError("Y/C shape does not match samples x models")
        self.y.setflags(write=False)
        self.c.setflags(write=False)
        if self.prompt_tokens is not None:
            self.prompt_tokens = np.ascontiguousarray(self.prompt_tokens, dtype=np.float64)
            self.prompt_tokens.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def n_models(self) -> int:
        return len(self.models)

    def dataset_names(self) -> list[str]:
        """Datasets in first-appearance order."""
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.dataset, None)
        return list(seen)

    def dataset_rows(self, dataset: str) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.samples) if s.dataset == dataset],
                        dtype=np.int64)

    def scaled_costs(self, factor: float) -> "BenchStore":
        """Copy of the store with every cost multiplied by ``factor``."""
        return BenchStore(self.samples, self.models, self.y.copy(), self.c * factor,
                          None if self.prompt_tokens is None else self.prompt_tokens.copy())

    def fingerprint(self, extra: bytes = b"") -> str:
        h = hashlib.sha256()
        h.update(self.y.tobytes())
        h.update(self.c.tobytes())
        h.update("\x1f".join(self.models).encode())
        h.update("\x1f".join(f"{s.dataset}:{s.index}" for s in self.samples).encode())
        h.update(extra)
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        arrays = dict(
            y=self.y,
            c=self.c,
            models=np.array(self.models, dtype=np.str_),
            sample_dataset=np.array([s.dataset for s in self.samples], dtype=np.str_),
            sample_index=np.array([s.index for s in self.samples], dtype=np.int64),
            sample_image=np.array([s.image_path for s in self.samples], dtype=np.str_),
            sample_prompt=np.array([s.prompt for s in self.samples], dtype=np.str_),
        )
        if self.prompt_tokens is not None:
            arrays["prompt_tokens"] = self.prompt_tokens
        np.savez(path, **arrays)

    @staticmethod
    def load(path: str | Path) -> "BenchStore":
        with np.load(path, allow_pickle=False) as z:
            samples = [
                Sample(str(d), int(i), str(img), str(p))
                for d, i, img, p in zip(
                    z["sample_dataset"], z["sample_index"],
                    z["sample_image"], z["sample_prompt"],
                )
            ]
            tokens = z["prompt_tokens"].copy() if "prompt_tokens" in z.files else None
            return BenchStore(samples, [str(m) for m in z["models"]],
                              z["y"].copy(), z["c"].copy(), tokens)


def ingest(records: Iterable[RecordLog], prices: list[PriceEntry]) -> BenchStore:
    """Aggregate a record stream into a dense BenchStore.

    Aborts with the offending key on an unpriced model, a duplicate
    (dataset, index, model) key, or a sample that is missing any model's
    record.
    """
    for p in prices:
        p.validate()
    models = [p.model_name for p in prices]
    if len(set(models)) != len(models):
        raise InvalidRecordError("duplicate model in price sheet")
    price_by_model = {p.model_name: p for p in prices}
    col = {m: j for j, m in enumerate(models)}

    samples: list[Sample] = []
    row: dict[tuple[str, int], int] = {}
    cells: dict[tuple[int, int], tuple[int, float, int]] = {}

    for rec in records:
        rec.validate()
        if rec.model_name not in price_by_model:
            raise MissingPriceError(rec.model_name)
        skey = (rec.dataset_name, rec.sample_index)
        if skey not in row:
            row[skey] = len(samples)
            samples.append(Sample(rec.dataset_name, rec.sample_index,
                                  rec.image_path, rec.prompt))
        i, j = row[skey], col[rec.model_name]
        if (i, j) in cells:
            raise DuplicateRecordError(rec.key)
        cost = compute_cost(rec.tokens_in, rec.tokens_out, price_by_model[rec.model_name])
        cells[(i, j)] = (int(rec.correct), cost, rec.tokens_in)

    n, m = len(samples), len(models)
    if n == 0:
        raise InvalidRecordError("empty record stream")
    y = np.zeros((n, m), dtype=np.uint8)
    c = np.zeros((n, m), dtype=np.float64)
    tokens = np.zeros((n, m), dtype=np.float64)
    for i, s in enumerate(samples):
        missing = [models[j] for j in range(m) if (i, j) not in cells]
        if missing:
            raise IncompleteSampleError((s.dataset, s.index), missing)
        for j in range(m):
            y[i, j], c[i, j], tokens[i, j] = cells[(i, j)]
    if not np.all(c > 0):
        raise InvalidRecordError("every cost cell must be positive; found a zero-cost record")
    return BenchStore(samples, models, y, c, tokens.mean(axis=1))


# --- splits -------------------------------------------------------------------

@dataclass(frozen=True)
class SplitAssignment:
    """Per-sample train/dev/test tags, stratified by dataset."""

    labels: np.ndarray  # (N,) int8 with TRAIN/DEV/TEST codes
    seed: int

    def indices(self, which: int) -> np.ndarray:
        return np.flatnonzero(self.labels == which)

    @property
    def train_idx(self) -> np.ndarray:
        return self.indices(TRAIN)

    @property
    def dev_idx(self) -> np.ndarray:
        return self.indices(DEV)

    @property
    def test_idx(self) -> np.ndarray:
        return self.indices(TEST)

    def to_json(self) -> dict:
        return {"seed": self.seed,
                "assignment": [SPLIT_NAMES[v] for v in self.labels.tolist()]}

    @staticmethod
    def from_json(obj: dict) -> "SplitAssignment":
        code = {name: i for i, name in enumerate(SPLIT_NAMES)}
        labels = np.array([code[t] for t in obj["assignment"]], dtype=np.int8)
        return SplitAssignment(labels, int(obj["seed"]))


MIN_SPLIT_SAMPLES = 10


def make_split(store: BenchStore, seed: int) -> SplitAssignment:
    """Deterministic 70/10/20 split, shuffled and stratified per dataset."""
    labels = np.full(store.n_samples, TRAIN, dtype=np.int8)
    rng = np.random.default_rng(seed)
    for dataset in store.dataset_names():
        rows = store.dataset_rows(dataset)
        n = rows.size
        if n < MIN_SPLIT_SAMPLES:
            raise TooFewSamplesError(dataset, n, MIN_SPLIT_SAMPLES)
        perm = rows[rng.permutation(n)]
        n_tr = int(0.7 * n + 0.5)
        n_dev = int(0.1 * n + 0.5)
        labels[perm[:n_tr]] = TRAIN
        labels[perm[n_tr:n_tr + n_dev]] = DEV
        labels[perm[n_tr + n_dev:]] = TEST
    return SplitAssignment(labels, seed)


# --- float32 matrix container ("VLRB") ------------------------------------------

_MAGIC = b"VLRB"
_VERSION = 1
_HEADER = struct.Struct("<4sIQII")  # magic, version, rows, dim_text, dim_image


def write_matrix_block(f: io.BufferedIOBase, left: np.ndarray, right: np.ndarray) -> None:
    """Write one container block: header plus rows of (left | right) float32."""
    left = np.ascontiguousarray(left, dtype=np.float32)
    right = np.ascontiguousarray(right, dtype=np.float32)
    if left.ndim != 2 or right.ndim != 2 or left.shape[0] != right.shape[0]:
        raise FormatError("container block needs two 2-D arrays with equal row counts")
    f.write(_HEADER.pack(_MAGIC, _VERSION, left.shape[0], left.shape[1], right.shape[1]))
    np.hstack([left, right]).tofile(f)  # type: ignore[arg-type]


def read_matrix_block(f: io.BufferedIOBase) -> tuple[np.ndarray, np.ndarray]:
    """Read one container block, returning (left, right) float32 arrays."""
    raw = f.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FormatError("truncated container header")
    magic, version, rows, dim_l, dim_r = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported container version {version}")
    count = rows * (dim_l + dim_r)
    data = np.fromfile(f, dtype=np.float32, count=count)
    if data.size != count:
        raise FormatError("truncated container payload")
    data = data.reshape(rows, dim_l + dim_r)
    return data[:, :dim_l].copy(), data[:, dim_l:].copy()


@dataclass
class EmbeddingTable:
    """Precomputed per-sample text and image embeddings, row-aligned to a store."""

    text: np.ndarray   # (N, dim_text) float32
    image: np.ndarray  # (N, dim_image) float32

    def __post_init__(self) -> None:
        self.text = np.ascontiguousarray(self.text, dtype=np.float32)
        self.image = np.ascontiguousarray(self.image, dtype=np.float32)
        self.text.setflags(write=False)
        self.image.setflags(write=False)

    @property
    def dim_text(self) -> int:
        return self.text.shape[1]

    @property
    def dim_image(self) -> int:
        return self.image.shape[1]

    @property
    def n_rows(self) -> int:
        return self.text.shape[0]


def manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".manifest.json")


def write_embeddings(
    path: str | Path,
    table: EmbeddingTable,
    samples: list[Sample] | None = None,
) -> None:
    """Write an embedding file, plus the (dataset, index) sidecar manifest.

    The write is atomic: content goes to a temp file first and is renamed
    into place, so a partial file is never observed.
    """
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        write_matrix_block(f, table.text, table.image)
    os.replace(tmp, path)
    if samples is not None:
        rows = [{"dataset": s.dataset, "index": s.index} for s in samples]
        manifest_path(path).write_text(json.dumps(rows), encoding="utf-8")


def load_embeddings(path: str | Path, store: BenchStore) -> EmbeddingTable:
    """Load an embedding file and validate it against the store.

    Checks the container format, the row count against N, finiteness of
    every value, and (when the sidecar manifest exists) the positional
    (dataset, index) alignment.
    """
    path = Path(path)
    with open(path, "rb") as f:
        text, image = read_matrix_block(f)
        if f.read(1):
            raise FormatError("trailing bytes after embedding payload")
    if text.shape[0] != store.n_samples:
        raise RowCountMismatchError(store.n_samples, text.shape[0])
    if not (np.isfinite(text).all() and np.isfinite(image).all()):
        raise NonFiniteValueError("embedding table contains NaN or Inf")
    mpath = manifest_path(path)
    if mpath.exists():
        rows = json.loads(mpath.read_text(encoding="utf-8"))
        if len(rows) != store.n_samples:
            raise FormatError("sidecar manifest row count does not match the store")
        for got, s in zip(rows, store.samples):
            if got["dataset"] != s.dataset or int(got["index"]) != s.index:
                raise FormatError(
                    f"manifest row ({got['dataset']}, {got['index']}) does not match "
                    f"store sample ({s.dataset}, {s.index})"
                )
    return EmbeddingTable(text, image)


# --- file formats ---------------------------------------------------------------

def read_jsonl(path: str | Path) -> Iterator[RecordLog]:
    """Stream RecordLogs from a JSON Lines file (UTF-8, one record per line)."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidRecordError(f"{path}:{lineno}: invalid JSON ({e})") from e
            missing = [k for k in _JSONL_FIELDS if k not in obj]
            if missing:
                raise InvalidRecordError(f"{path}:{lineno}: missing fields {missing}")
            yield RecordLog(
                dataset_name=str(obj["dataset"]),
                sample_index=int(obj["index"]),
                image_path=str(obj["image_path"]),
                prompt=str(obj["prompt"]),
                model_name=str(obj["model"]),
                model_output=str(obj["output"]),
                correct=bool(obj["correct"]),
                tokens_in=int(obj["tokens_in"]),
                tokens_out=int(obj["tokens_out"]),
            )


def write_jsonl(path: str | Path, records: Iterable[RecordLog]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({
                "dataset": r.dataset_name,
                "index": r.sample_index,
                "image_path": r.image_path,
                "prompt": r.prompt,
                "model": r.model_name,
                "output": r.model_output,
                "correct": r.correct,
                "tokens_in": r.tokens_in,
                "tokens_out": r.tokens_out,
            }, sort_keys=True))
            f.write("\n")


def read_prices(path: str | Path) -> list[PriceEntry]:
    """Read a price sheet CSV with header model,price_in,price_out."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != [
            "model", "price_in", "price_out"
        ]:
            raise InvalidRecordError(
                f"{path}: price sheet header must be model,price_in,price_out"
            )
        entries = [
            PriceEntry(row["model"], float(row["price_in"]), float(row["price_out"]))
            for row in reader
        ]
    for e in entries:
        e.validate()
    return entries


def write_prices(path: str | Path, prices: list[PriceEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["model", "price_in", "price_out"])
        for p in prices:
            w.writerow([p.model_name, repr(p.price_in), repr(p.price_out)])
