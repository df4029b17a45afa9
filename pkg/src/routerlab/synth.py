"""Desk-scale synthetic benchmarks with controllable routability.

Every sample belongs to a dataset cluster and carries a latent
difficulty; every model gets a skill tied to its price rank, with enough
noise that some cheap models beat pricier ones, and the most expensive
model is deliberately held below the best mid-tier one (the realistic
pattern where premium pricing does not buy the best accuracy; it also
keeps the strongest-model baseline off the cost ceiling). Each cluster
designates one cheap "specialist" model that receives a logit bonus
scaled by ``cluster_affinity``: at 0 there is no per-sample signal to
exploit, at 1 the specialist almost always answers its cluster.

Correctness is Bernoulli(logistic(skill - difficulty + bonus)), which
gives a closed-form expectation for how often at least one model is
right. Embeddings are cluster centroids plus noise, so the cluster (and
with it the routable structure) is recoverable by any reasonable
classifier. Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .log_store import EmbeddingTable, PriceEntry, RecordLog, Sample

AFFINITY_LOGIT = 6.0     # full-strength specialist bonus
SKILL_NOISE = 0.04       # relative to skill_spread; small enough that the
                         # price-rank skill ordering (and its deliberate dip
                         # at the top) stays decisive for moderate M
EMBED_NOISE = 0.25
TOP_PRICE_EFF_RANK = 0.55  # effective skill rank of the priciest model


@dataclass
class SynthConfig:
    n_samples: int = 1000
    n_models: int = 6
    n_datasets: int = 4
    dim_text: int = 16
    dim_image: int = 16
    skill_spread: float = 2.0
    cluster_affinity: float = 0.9
    price_range: tuple[float, float] = (0.05, 10.0)
    token_range: tuple[int, int] = (64, 512)
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_samples, self.n_datasets, self.dim_text, self.dim_image) < 1:
            raise InvalidConfigError("counts and dims must be positive")
        if self.n_models < 2:
            raise InvalidConfigError("need at least two models")
        if not 0.0 <= self.cluster_affinity <= 1.0:
            raise InvalidConfigError("cluster_affinity must be in [0, 1]")
        lo, hi = self.price_range
        if not 0 < lo < hi:
            raise InvalidConfigError("price_range must satisfy 0 < low < high")
        tlo, thi = self.token_range
        if not 1 <= tlo <= thi:
            raise InvalidConfigError("token_range must satisfy 1 <= min <= max")
        if self.skill_spread < 0:
            raise InvalidConfigError("skill_spread must be non-negative")


@dataclass
class SynthResult:
    records: list[RecordLog]
    prices: list[PriceEntry]
    table: EmbeddingTable
    samples: list[Sample]
    correct_prob: np.ndarray  # (N, M), the Bernoulli parameters behind Y
    clusters: np.ndarray      # (N,) cluster id per sample
    specialists: np.ndarray   # (n_datasets,) specialist model per cluster
    skills: np.ndarray        # (M,) latent model skill


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def generate(config: SynthConfig) -> SynthResult:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, m, k = config.n_samples, config.n_models, config.n_datasets

    # Log-spaced prices with mild jitter: adjacent tiers stay separated by a
    # real ratio, so realized per-model mean costs preserve the price order
    # and the cost-range endpoints are unambiguous.
    lo, hi = config.price_range
    spacing = np.logspace(np.log10(lo), np.log10(hi), m)
    price_in = spacing * np.exp(rng.uniform(-0.1, 0.1, size=m))
    price_in = np.clip(price_in, lo, hi)
    price_out = np.clip(price_in * rng.uniform(1.0, 1.5, size=m), lo, hi * 1.5)
    models = [f"model_{j:02d}" for j in range(m)]
    prices = [PriceEntry(models[j], float(price_in[j]), float(price_out[j]))
              for j in range(m)]

    rank = np.arange(m) / max(1, m - 1)
    eff_rank = rank.copy()
    eff_rank[-1] = min(rank[-1], TOP_PRICE_EFF_RANK)
    skill = config.skill_spread * (eff_rank - 0.5)
    skill += rng.normal(0.0, SKILL_NOISE * max(config.skill_spread, 1e-12), size=m)

    # Specialists come from the cheaper tiers so cost-aware routing pays
    # off, and are distinct across clusters whenever the pool allows it so
    # the cluster -> model structure is actually recoverable.
    pool = max(1, (2 * m) // 3)
    if k <= pool:
        specialists = rng.permutation(pool)[:k]
    else:
        specialists = rng.integers(0, pool, size=k)

    clusters = rng.integers(0, k, size=n)
    difficulty = rng.normal(0.0, 1.0, size=n)
    bonus = np.zeros((n, m))
    bonus[np.arange(n), specialists[clusters]] = AFFINITY_LOGIT * config.cluster_affinity
    prob = _sigmoid(skill[None, :] - difficulty[:, None] + bonus)
    y = (rng.random((n, m)) < prob).astype(np.uint8)

    tlo, thi = config.token_range
    tokens_in = rng.integers(tlo, thi + 1, size=(n, m))
    tokens_out = rng.integers(tlo, thi + 1, size=(n, m))

    centroids_text = rng.normal(0.0, 1.0, size=(k, config.dim_text))
    centroids_image = rng.normal(0.0, 1.0, size=(k, config.dim_image))
    text = centroids_text[clusters] + rng.normal(0.0, EMBED_NOISE, (n, config.dim_text))
    image = centroids_image[clusters] + rng.normal(0.0, EMBED_NOISE, (n, config.dim_image))

    samples: list[Sample] = []
    records: list[RecordLog] = []
    for i in range(n):
        ds = f"ds{clusters[i]:02d}"
        sample = Sample(ds, i, f"images/{ds}/{i:06d}.png",
                        f"[{ds}] query {i}: read the panel and answer")
        samples.append(sample)
        for j in range(m):
            records.append(RecordLog(
                dataset_name=sample.dataset,
                sample_index=sample.index,
                image_path=sample.image_path,
                prompt=sample.prompt,
                model_name=models[j],
                model_output=f"answer-{i}-{j}",
                correct=bool(y[i, j]),
                tokens_in=int(tokens_in[i, j]),
                tokens_out=int(tokens_out[i, j]),
            ))
    table = EmbeddingTable(text.astype(np.float32), image.astype(np.float32))
    return SynthResult(records, prices, table, samples, prob, clusters, specialists, skill)


def expected_oracle_accuracy(result: SynthResult) -> float:
    """Analytic expectation of the fraction of samples with >= 1 correct model."""
    miss = np.prod(1.0 - result.correct_prob, axis=1)
    return float((1.0 - miss).mean())
