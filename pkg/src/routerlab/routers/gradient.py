"""Gradient-trained routers with from-scratch backpropagation.

Strategies share one loss/gradient core (so the finite-difference checks
exercise exactly what training uses), a decoupled-weight-decay adaptive
optimizer, and a cosine-decayed learning rate:

  linear      logits = W z + b
  mlp         one 512-wide ReLU hidden layer, then a linear head
  cosine_cls  cosine similarity between a projected query and learnable
              per-model prototypes, scaled by a learnable temperature
  router_dc   cosine_cls plus a sample-sample contrastive term whose
              positives share the query's dataset label
  zooter      mlp head trained on the KL divergence from the soft target
              (same gradient as the cross-entropy form)

One-vs-rest lives here too: per-model logistic regressions trained with
the same optimizer.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from ..errors import DivergedGradientError, NonFiniteLossError
from ..fusion import FusionSpec, fuse_backward, fuse_forward
from ..soft_label import PROB_FLOOR
from .base import RouterModel, TrainConfig, register_predictor

GRADIENT_KINDS = ("linear", "mlp", "cosine_cls", "router_dc", "zooter")

MLP_HIDDEN = 512
COSINE_PROJ_DIM = 256
COSINE_INIT_TEMP = 0.07
DC_GAMMA = 0.5
DC_TEMP = 0.1
GRAD_NORM_LIMIT = 1e8


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- heads ----------------------------------------------------------------------

def init_head(kind: str, rng: np.random.Generator, in_dim: int, n_models: int) -> dict:
    if kind == "linear":
        return {"w": _uniform(rng, (n_models, in_dim), in_dim),
                "b": np.zeros(n_models)}
    if kind in ("mlp", "zooter"):
        return {
            "w1": _uniform(rng, (MLP_HIDDEN, in_dim), in_dim),
            "b1": np.zeros(MLP_HIDDEN),
            "w2": _uniform(rng, (n_models, MLP_HIDDEN), MLP_HIDDEN),
            "b2": np.zeros(n_models),
        }
    if kind in ("cosine_cls", "router_dc"):
        proj_dim = min(COSINE_PROJ_DIM, in_dim)
        return {
            "proj": _uniform(rng, (proj_dim, in_dim), in_dim),
            "prototypes": _uniform(rng, (n_models, proj_dim), proj_dim),
            "log_temp": np.array([math.log(COSINE_INIT_TEMP)]),
        }
    raise ValueError(f"unknown gradient router kind {kind!r}")


def _l2_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe, safe


def head_forward(kind: str, p: dict, z: np.ndarray) -> tuple[np.ndarray, dict]:
    if kind == "linear":
        return z @ p["w"].T + p["b"], {"z": z}
    if kind in ("mlp", "zooter"):
        a1 = z @ p["w1"].T + p["b1"]
        h = np.maximum(a1, 0.0)
        return h @ p["w2"].T + p["b2"], {"z": z, "a1": a1, "h": h}
    # cosine_cls / router_dc
    proj = z @ p["proj"].T
    pn, pnorm = _l2_rows(proj)
    kn, knorm = _l2_rows(p["prototypes"])
    cos = pn @ kn.T
    temp = math.exp(p["log_temp"][0])
    return cos / temp, {"z": z, "proj": proj, "pn": pn, "pnorm": pnorm,
                        "kn": kn, "knorm": knorm, "cos": cos, "temp": temp}


def head_backward(
    kind: str,
    p: dict,
    cache: dict,
    dlogits: np.ndarray,
    dpn_extra: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Returns (dz, parameter gradients)."""
    if kind == "linear":
        z = cache["z"]
        return dlogits @ p["w"], {"w": dlogits.T @ z, "b": dlogits.sum(axis=0)}
    if kind in ("mlp", "zooter"):
        z, a1, h = cache["z"], cache["a1"], cache["h"]
        dh = dlogits @ p["w2"]
        da1 = dh * (a1 > 0)
        return da1 @ p["w1"], {
            "w1": da1.T @ z,
            "b1": da1.sum(axis=0),
            "w2": dlogits.T @ h,
            "b2": dlogits.sum(axis=0),
        }
    # cosine_cls / router_dc
    pn, pnorm, kn, knorm = cache["pn"], cache["pnorm"], cache["kn"], cache["knorm"]
    temp, cos = cache["temp"], cache["cos"]
    dcos = dlogits / temp
    dlog_temp = -float((dlogits * cos).sum()) / temp
    dpn = dcos @ kn
    if dpn_extra is not None:
        dpn = dpn + dpn_extra
    dkn = dcos.T @ pn
    dproj = (dpn - (dpn * pn).sum(axis=1, keepdims=True) * pn) / pnorm
    dproto = (dkn - (dkn * kn).sum(axis=1, keepdims=True) * kn) / knorm
    return dproj @ p["proj"], {
        "proj": dproj.T @ cache["z"],
        "prototypes": dproto,
        "log_temp": np.array([dlog_temp]),
    }


# --- losses -----------------------------------------------------------------------

def _contrastive(pn: np.ndarray, groups: np.ndarray) -> tuple[float, np.ndarray]:
    """Normalized-temperature cross-entropy over in-batch sample pairs.

    Positives share the anchor's group label; every other in-batch sample
    is a negative. Anchors without a positive are skipped. Returns the
    loss and its gradient w.r.t. the normalized projections.
    """
    n = pn.shape[0]
    s = pn @ pn.T / DC_TEMP
    off = ~np.eye(n, dtype=bool)
    same = (groups[:, None] == groups[None, :]) & off
    n_pos = same.sum(axis=1)
    anchors = np.flatnonzero(n_pos > 0)
    if anchors.size == 0 or n < 2:
        return 0.0, np.zeros_like(pn)
    s_max = np.where(off, s, -np.inf).max(axis=1, keepdims=True)
    exps = np.where(off, np.exp(s - s_max), 0.0)
    denom = exps.sum(axis=1, keepdims=True)
    log_denom = np.log(denom[:, 0]) + s_max[:, 0]
    loss = 0.0
    g = np.zeros_like(s)
    for i in anchors:
        pos = np.flatnonzero(same[i])
        loss += float(log_denom[i] - s[i, pos].mean())
        g[i] = exps[i] / denom[i, 0]
        g[i, pos] -= 1.0 / pos.size
    loss /= anchors.size
    g /= anchors.size
    dpn = (g + g.T) @ pn / DC_TEMP
    return loss, dpn


def _target_entropy(targets: np.ndarray) -> float:
    return float(-xlogy(targets, targets).sum(axis=1).mean())


def batch_loss_and_grads(
    kind: str,
    head_params: dict,
    fusion: FusionSpec,
    v: np.ndarray,
    q: np.ndarray,
    targets: np.ndarray,
    groups: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and gradients for one batch; the single source of truth shared
    by the training loop and the finite-difference checks."""
    z, fcache = fuse_forward(v, q, fusion)
    logits, hcache = head_forward(kind, head_params, z)
    probs = softmax_rows(logits)
    n = z.shape[0]
    ce = float(-(targets * np.log(np.clip(probs, PROB_FLOOR, None))).sum() / n)
    loss = ce
    dlogits = (probs - targets) / n
    dpn_extra = None
    if kind == "router_dc" and groups is not None:
        closs, dpn = _contrastive(hcache["pn"], groups)
        loss = ce + DC_GAMMA * closs
        dpn_extra = DC_GAMMA * dpn
    if kind == "zooter":
        loss = ce - _target_entropy(targets)  # KL(t || p); same gradient as CE
    dz, hgrads = head_backward(kind, head_params, hcache, dlogits, dpn_extra)
    grads = {f"head.{k}": g for k, g in hgrads.items()}
    if fusion.params:
        for k, g in fuse_backward(dz, fcache, fusion).items():
            grads[f"fusion.{k}"] = g
    return loss, grads


# --- optimizer -----------------------------------------------------------------

class AdamW:
    """Adaptive moments with decoupled weight decay, updates in place."""

    def __init__(self, params: dict[str, np.ndarray], weight_decay: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            p -= lr * (update + self.wd * p)


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total))


# --- training loops ---------------------------------------------------------------

def train_gradient_router(
    kind: str,
    v: np.ndarray,
    q: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    fusion: FusionSpec,
    train_lambda: float = 0.0,
    groups: np.ndarray | None = None,
) -> RouterModel:
    """Minimize the soft-label objective with seeded, deterministic batching.

    ``targets`` must contain only rows with a valid soft target; rows with
    no correct model carry no signal and are excluded upstream.
    """
    if kind not in GRADIENT_KINDS:
        raise ValueError(f"unknown gradient router kind {kind!r}")
    config.validate()
    v = np.asarray(v, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if not (np.isfinite(v).all() and np.isfinite(q).all()):
        raise ValueError("features must be finite")
    n, n_models = targets.shape
    rng = np.random.default_rng(config.seed)

    fusion = fusion.copy()
    head = init_head(kind, rng, fusion.output_dim, n_models)
    params: dict[str, np.ndarray] = {f"head.{k}": p for k, p in head.items()}
    for k, p in fusion.params.items():
        params[f"fusion.{k}"] = p
    opt = AdamW(params, config.weight_decay)

    batches_per_epoch = max(1, math.ceil(n / config.batch_size))
    total_steps = config.epochs * batches_per_epoch
    history: list[float] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            if idx.size == 0:
                continue
            loss, grads = batch_loss_and_grads(
                kind, head, fusion, v[idx], q[idx], targets[idx],
                groups[idx] if groups is not None else None,
            )
            if not math.isfinite(loss):
                raise NonFiniteLossError(step)
            with np.errstate(over="ignore"):
                gnorm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if not math.isfinite(gnorm) or gnorm > GRAD_NORM_LIMIT:
                raise DivergedGradientError(step, gnorm)
            opt.step(grads, cosine_lr(config.learning_rate, step, total_steps))
            losses.append(loss)
            step += 1
        history.append(float(np.mean(losses)))
    return RouterModel(
        kind=kind,
        fusion=fusion,
        params=head,
        train_lambda=train_lambda,
        meta={"n_models": n_models, "history": history, "config": config.to_json()},
    )


def _predict_softmax(router: RouterModel, z: np.ndarray) -> np.ndarray:
    logits, _ = head_forward(router.kind, router.params, z)
    return softmax_rows(logits)


for _kind in GRADIENT_KINDS:
    register_predictor(_kind)(_predict_softmax)


# --- one-vs-rest --------------------------------------------------------------------

def train_ovr(
    features: np.ndarray,
    y_train: np.ndarray,
    c_train: np.ndarray,
    config: TrainConfig,
    fusion: FusionSpec,
    train_lambda: float = 0.0,
) -> RouterModel:
    """Independent per-model logistic regressions on fused features.

    A model whose correctness column is constant gets a constant
    classifier at its empirical rate. Routing ties prefer the model with
    the lower mean train cost.
    """
    config.validate()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    n, n_models = y.shape
    rng = np.random.default_rng(config.seed)

    rates = y.mean(axis=0)
    trainable = (rates > 0) & (rates < 1)
    w = _uniform(rng, (n_models, x.shape[1]), x.shape[1])
    b = np.zeros(n_models)
    opt = AdamW({"w": w, "b": b}, config.weight_decay)

    batches_per_epoch = max(1, math.ceil(n / config.batch_size))
    total_steps = config.epochs * batches_per_epoch
    step = 0
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for bi in range(batches_per_epoch):
            idx = order[bi * config.batch_size:(bi + 1) * config.batch_size]
            if idx.size == 0:
                continue
            logits = x[idx] @ w.T + b
            s = 1.0 / (1.0 + np.exp(-logits))
            sc = np.clip(s, PROB_FLOOR, 1.0 - PROB_FLOOR)
            bce = -(y[idx] * np.log(sc) + (1 - y[idx]) * np.log(1 - sc))
            loss = float(bce[:, trainable].mean()) if trainable.any() else 0.0
            if not math.isfinite(loss):
                raise NonFiniteLossError(step)
            dlogits = (s - y[idx]) * trainable / (idx.size * max(1, trainable.sum()))
            opt.step({"w": dlogits.T @ x[idx], "b": dlogits.sum(axis=0)},
                     cosine_lr(config.learning_rate, step, total_steps))
            losses.append(loss)
            step += 1
        history.append(float(np.mean(losses)))
    return RouterModel(
        kind="ovr",
        fusion=fusion,
        params={
            "w": w,
            "b": b,
            "trainable": trainable.astype(np.float64),
            "rate": rates,
            "mean_cost": np.asarray(c_train, dtype=np.float64).mean(axis=0),
        },
        train_lambda=train_lambda,
        meta={"n_models": n_models, "history": history, "config": config.to_json()},
    )


def ovr_correctness(router: RouterModel, z: np.ndarray) -> np.ndarray:
    """Raw per-model correctness probabilities (before renormalization)."""
    p = router.params
    s = 1.0 / (1.0 + np.exp(-(np.atleast_2d(z) @ p["w"].T + p["b"])))
    frozen = p["trainable"] == 0
    s[:, frozen] = p["rate"][frozen]
    return s


@register_predictor("ovr")
def _predict_ovr(router: RouterModel, z: np.ndarray) -> np.ndarray:
    s = ovr_correctness(router, z)
    total = s.sum(axis=1, keepdims=True)
    uniform = np.full_like(s, 1.0 / s.shape[1])
    return np.where(total > 0, s / np.where(total > 0, total, 1.0), uniform)
