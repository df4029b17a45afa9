"""Synthetic benchmark generator: determinism, density, and routability."""

import hashlib

import numpy as np
import pytest
from scipy.stats import spearmanr

from routerlab.errors import InvalidConfigError
from routerlab.log_store import ingest, make_split, write_embeddings, write_jsonl, write_prices
from routerlab.pipeline import evaluate_router, train_router
from routerlab.routers import TrainConfig
from routerlab.synth import SynthConfig, expected_oracle_accuracy, generate


class TestConfig:
    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            generate(SynthConfig(n_models=1))
        with pytest.raises(InvalidConfigError):
            generate(SynthConfig(cluster_affinity=1.5))
        with pytest.raises(InvalidConfigError):
            generate(SynthConfig(price_range=(5.0, 1.0)))
        with pytest.raises(InvalidConfigError):
            generate(SynthConfig(token_range=(0, 10)))


class TestDeterminism:
    def test_identical_bytes_for_same_seed(self, tmp_path):
        digests = []
        for run in ("a", "b"):
            out = tmp_path / run
            out.mkdir()
            res = generate(SynthConfig(n_samples=50, n_models=3, seed=9))
            write_jsonl(out / "logs.jsonl", res.records)
            write_prices(out / "prices.csv", res.prices)
            write_embeddings(out / "emb.vlrb", res.table, res.samples)
            h = hashlib.sha256()
            for name in ("logs.jsonl", "prices.csv", "emb.vlrb"):
                h.update((out / name).read_bytes())
            digests.append(h.hexdigest())
        assert digests[0] == digests[1]

    def test_seed_changes_output(self):
        a = generate(SynthConfig(n_samples=50, n_models=3, seed=1))
        b = generate(SynthConfig(n_samples=50, n_models=3, seed=2))
        assert not np.array_equal(a.table.text, b.table.text)


class TestStoreCompatibility:
    def test_ingests_densely(self):
        res = generate(SynthConfig(n_samples=80, n_models=4, n_datasets=3, seed=3))
        store = ingest(res.records, res.prices)
        assert store.n_samples == 80 and store.n_models == 4
        assert np.all(store.c > 0)

    def test_split_works(self):
        res = generate(SynthConfig(n_samples=100, n_models=3, n_datasets=2, seed=4))
        store = ingest(res.records, res.prices)
        split = make_split(store, seed=0)
        assert split.labels.size == 100


class TestStatisticalShape:
    def test_accuracy_monotone_in_skill(self):
        res = generate(SynthConfig(n_samples=2000, n_models=6, seed=5,
                                   cluster_affinity=0.0))
        store = ingest(res.records, res.prices)
        acc = store.y.mean(axis=0)
        rho = spearmanr(res.skills, acc).statistic
        assert rho >= 0.8

    def test_oracle_accuracy_matches_analytic(self):
        res = generate(SynthConfig(n_samples=4000, n_models=5, seed=6))
        store = ingest(res.records, res.prices)
        realized = store.y.any(axis=1).mean()
        assert realized == pytest.approx(expected_oracle_accuracy(res), abs=0.02)

    def test_prices_ascend(self):
        res = generate(SynthConfig(n_samples=20, n_models=6, seed=7))
        prices = [p.price_in for p in res.prices]
        assert prices == sorted(prices)

    def test_priciest_model_is_not_strongest(self):
        for seed in range(5):
            res = generate(SynthConfig(n_samples=200, n_models=6, seed=seed))
            assert int(np.argmax(res.skills)) != len(res.prices) - 1


class TestRoutability:
    def test_full_affinity_kmeans_recovers_oracle(self):
        config = SynthConfig(n_samples=1200, n_models=6, n_datasets=4,
                             cluster_affinity=1.0, seed=8)
        res = generate(config)
        store = ingest(res.records, res.prices)
        split = make_split(store, seed=8)
        oracle_acc = 100.0 * store.y[split.test_idx].any(axis=1).mean()
        assert oracle_acc >= 98.0
        router = train_router("kmeans", store, split, res.table, 100.0,
                              TrainConfig(seed=8))
        report = evaluate_router(router, "kmeans", store, split, res.table)
        assert report.avg_acc >= 0.9 * oracle_acc
