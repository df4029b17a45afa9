"""Text/image embedding fusion into a single routing feature.

Seven strategies: the two single-modality identities, plain and
L2-normalized concatenation, a learnable convex blend, a gated unit, and
a low-rank bilinear (Hadamard) product. The parametric ones (blend, gate,
bilinear) expose an explicit backward pass so routers can co-train fusion
parameters; the rest are parameter-free and frozen.

Batch convention: v is the image embedding (n, dim_image), q is the text
embedding (n, dim_text).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatchError

PARAM_FREE = ("only_text", "only_image", "concat", "normalize_concat")
PARAMETRIC = ("weighted_average", "gmu", "mlb")
FUSION_METHODS = PARAM_FREE + PARAMETRIC

DEFAULT_FUSED_DIM = 256
_NORM_EPS = 0.0  # zero vectors are passed through as zeros, never divided


@dataclass
class FusionSpec:
    method: str
    dim_image: int
    dim_text: int
    output_dim: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "FusionSpec":
        return FusionSpec(self.method, self.dim_image, self.dim_text, self.output_dim,
                          {k: v.copy() for k, v in self.params.items()})


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def make_fusion(
    method: str,
    dim_image: int,
    dim_text: int,
    rng: np.random.Generator | None = None,
    fused_dim: int = DEFAULT_FUSED_DIM,
) -> FusionSpec:
    """Build a FusionSpec with freshly initialized parameters.

    Parametric weights start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    so the tanh branches stay in their linear region. The blend
    coefficient is stored pre-activation and mapped through a logistic,
    keeping it inside [0, 1].
    """
    if method not in FUSION_METHODS:
        raise ValueError(f"unknown fusion method {method!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    params: dict[str, np.ndarray] = {}
    if method == "only_text":
        out = dim_text
    elif method == "only_image":
        out = dim_image
    elif method in ("concat", "normalize_concat"):
        out = dim_image + dim_text
    elif method == "weighted_average":
        if dim_image != dim_text:
            raise DimMismatchError("weighted_average needs dim_text == dim_image",
                                   dim_image, dim_text)
        out = dim_image
        params["alpha_raw"] = np.zeros(1)  # logistic(0) = 0.5
    elif method == "gmu":
        out = fused_dim
        params["w_zv"] = _uniform(rng, (out, dim_image), dim_image)
        params["w_zq"] = _uniform(rng, (out, dim_text), dim_text)
        params["b_z"] = np.zeros(out)
        params["w_v"] = _uniform(rng, (out, dim_image), dim_image)
        params["w_q"] = _uniform(rng, (out, dim_text), dim_text)
    else:  # mlb
        out = fused_dim
        params["w_v"] = _uniform(rng, (out, dim_image), dim_image)
        params["w_q"] = _uniform(rng, (out, dim_text), dim_text)
    return FusionSpec(method, dim_image, dim_text, out, params)


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimMismatchError(what, dim, x.shape[-1])
    return x, single


def _l2_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe


def fuse_forward(
    v: np.ndarray, q: np.ndarray, spec: FusionSpec
) -> tuple[np.ndarray, dict]:
    """Fused feature batch plus the cache needed for the backward pass."""
    v, single_v = _as_batch(v, spec.dim_image, "image embedding")
    q, single_q = _as_batch(q, spec.dim_text, "text embedding")
    if v.shape[0] != q.shape[0]:
        raise DimMismatchError("batch size", v.shape[0], q.shape[0])
    p = spec.params
    cache: dict = {"v": v, "q": q, "single": single_v and single_q}

    if spec.method == "only_text":
        z = q
    elif spec.method == "only_image":
        z = v
    elif spec.method == "concat":
        z = np.concatenate([v, q], axis=1)
    elif spec.method == "normalize_concat":
        z = np.concatenate([_l2_rows(v), _l2_rows(q)], axis=1)
    elif spec.method == "weighted_average":
        alpha = 1.0 / (1.0 + np.exp(-p["alpha_raw"][0]))
        z = alpha * v + (1.0 - alpha) * q
        cache["alpha"] = alpha
    elif spec.method == "gmu":
        s = v @ p["w_zv"].T + q @ p["w_zq"].T + p["b_z"]
        gate = 1.0 / (1.0 + np.exp(-s))
        hv = np.tanh(v @ p["w_v"].T)
        hq = np.tanh(q @ p["w_q"].T)
        z = gate * hv + (1.0 - gate) * hq
        cache.update(gate=gate, hv=hv, hq=hq)
    else:  # mlb
        hv = np.tanh(v @ p["w_v"].T)
        hq = np.tanh(q @ p["w_q"].T)
        z = hv * hq
        cache.update(hv=hv, hq=hq)
    return z, cache


def fuse_backward(
    dz: np.ndarray, cache: dict, spec: FusionSpec
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. the fusion parameters.

    Only parametric methods carry gradients; inputs are frozen embeddings
    so input gradients are not materialized.
    """
    p = spec.params
    v, q = cache["v"], cache["q"]
    if spec.method == "weighted_average":
        alpha = cache["alpha"]
        dalpha = float(np.sum(dz * (v - q)))
        return {"alpha_raw": np.array([dalpha * alpha * (1.0 - alpha)])}
    if spec.method == "gmu":
        gate, hv, hq = cache["gate"], cache["hv"], cache["hq"]
        dgate = dz * (hv - hq)
        ds = dgate * gate * (1.0 - gate)
        dav = dz * gate * (1.0 - hv**2)
        daq = dz * (1.0 - gate) * (1.0 - hq**2)
        return {
            "w_zv": ds.T @ v,
            "w_zq": ds.T @ q,
            "b_z": ds.sum(axis=0),
            "w_v": dav.T @ v,
            "w_q": daq.T @ q,
        }
    if spec.method == "mlb":
        hv, hq = cache["hv"], cache["hq"]
        dav = dz * hq * (1.0 - hv**2)
        daq = dz * hv * (1.0 - hq**2)
        return {"w_v": dav.T @ v, "w_q": daq.T @ q}
    return {}


def fuse(v: np.ndarray, q: np.ndarray, spec: FusionSpec) -> np.ndarray:
    """Apply the fusion with frozen parameters."""
    z, cache = fuse_forward(v, q, spec)
    return z[0] if cache["single"] else z
