"""Self-describing single-file router checkpoints.

Layout: a little-endian u32 header length, a JSON header (kind, fusion
spec, training config, tilt parameter, data fingerprint, tensor index),
then one float32 container block per tensor in header order. Tensors are
stored flattened with their shapes in the header, reusing the embedding
container, so checkpoints and embedding files share one binary dialect.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..fusion import FusionSpec
from ..log_store import read_matrix_block, write_matrix_block
from .base import RouterModel, TrainConfig

_LEN = struct.Struct("<I")


def save_checkpoint(
    path: str | Path,
    router: RouterModel,
    config: TrainConfig | None = None,
    fingerprint: str = "",
) -> None:
    tensors: list[tuple[str, np.ndarray]] = []
    for name, arr in router.fusion.params.items():
        tensors.append((f"fusion.{name}", np.asarray(arr)))
    for name, arr in router.params.items():
        tensors.append((f"head.{name}", np.asarray(arr)))
    header = {
        "kind": router.kind,
        "fusion": {
            "method": router.fusion.method,
            "dim_image": router.fusion.dim_image,
            "dim_text": router.fusion.dim_text,
            "output_dim": router.fusion.output_dim,
        },
        "train_lambda": router.train_lambda,
        "config": config.to_json() if config is not None else None,
        "fingerprint": fingerprint,
        "meta": router.meta,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_LEN.pack(len(blob)))
        f.write(blob)
        for _, arr in tensors:
            flat = np.ascontiguousarray(arr, dtype=np.float32).reshape(1, -1)
            write_matrix_block(f, flat, np.zeros((1, 0), dtype=np.float32))


def load_checkpoint(path: str | Path) -> tuple[RouterModel, TrainConfig | None, str]:
    with open(path, "rb") as f:
        raw = f.read(_LEN.size)
        if len(raw) != _LEN.size:
            raise FormatError("truncated checkpoint header length")
        (hlen,) = _LEN.unpack(raw)
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"bad checkpoint header: {e}") from e
        fusion_params: dict[str, np.ndarray] = {}
        head_params: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            left, _ = read_matrix_block(f)
            arr = left.reshape(entry["shape"]).astype(np.float64)
            scope, name = entry["name"].split(".", 1)
            (fusion_params if scope == "fusion" else head_params)[name] = arr
    fs = header["fusion"]
    fusion = FusionSpec(fs["method"], fs["dim_image"], fs["dim_text"],
                        fs["output_dim"], fusion_params)
    router = RouterModel(
        kind=header["kind"],
        fusion=fusion,
        params=head_params,
        train_lambda=float(header["train_lambda"]),
        meta=header.get("meta", {}),
    )
    cfg = header.get("config")
    config = TrainConfig.from_json(cfg) if cfg else None
    return router, config, header.get("fingerprint", "")
