"""Fusion strategies: formulas, edge cases, and parameter gradients."""

import numpy as np
import pytest

from routerlab.errors import DimMismatchError
from routerlab.fusion import (
    FUSION_METHODS,
    PARAMETRIC,
    fuse,
    fuse_backward,
    fuse_forward,
    make_fusion,
)


class TestFormulas:
    def test_normalize_concat_example(self):
        spec = make_fusion("normalize_concat", 2, 2)
        out = fuse(np.array([3.0, 4.0]), np.array([0.0, 5.0]), spec)
        np.testing.assert_allclose(out, [0.6, 0.8, 0.0, 1.0])

    def test_normalize_concat_zero_vector(self):
        spec = make_fusion("normalize_concat", 2, 2)
        out = fuse(np.zeros(2), np.array([0.0, 2.0]), spec)
        np.testing.assert_array_equal(out, [0.0, 0.0, 0.0, 1.0])

    def test_concat_preserves_slices(self):
        spec = make_fusion("concat", 3, 2)
        v, q = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0])
        out = fuse(v, q, spec)
        np.testing.assert_array_equal(out[:3], v)
        np.testing.assert_array_equal(out[3:], q)

    def test_single_modality(self):
        v, q = np.array([1.0, 2.0]), np.array([3.0, 4.0, 5.0])
        np.testing.assert_array_equal(fuse(v, q, make_fusion("only_image", 2, 3)), v)
        np.testing.assert_array_equal(fuse(v, q, make_fusion("only_text", 2, 3)), q)

    def test_weighted_average_boundary(self):
        spec = make_fusion("weighted_average", 3, 3)
        spec.params["alpha_raw"][0] = 40.0  # logistic saturates to exactly 1.0
        v, q = np.array([1.0, 2.0, 3.0]), np.array([9.0, 9.0, 9.0])
        np.testing.assert_array_equal(fuse(v, q, spec), v)

    def test_weighted_average_midpoint(self):
        spec = make_fusion("weighted_average", 2, 2)  # alpha_raw starts at 0 -> 0.5
        out = fuse(np.array([2.0, 0.0]), np.array([0.0, 2.0]), spec)
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_gmu_zero_params(self):
        spec = make_fusion("gmu", 3, 3, fused_dim=4)
        for key in spec.params:
            spec.params[key][:] = 0.0
        out = fuse(np.ones(3), np.ones(3), spec)
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_gmu_gate_bounds(self):
        rng = np.random.default_rng(0)
        spec = make_fusion("gmu", 4, 5, rng=rng, fused_dim=6)
        _, cache = fuse_forward(rng.normal(size=(10, 4)), rng.normal(size=(10, 5)), spec)
        assert np.all(cache["gate"] > 0.0) and np.all(cache["gate"] < 1.0)

    def test_mlb_is_hadamard_of_tanh(self):
        rng = np.random.default_rng(1)
        spec = make_fusion("mlb", 3, 4, rng=rng, fused_dim=5)
        v, q = rng.normal(size=3), rng.normal(size=4)
        out = fuse(v, q, spec)
        expect = np.tanh(spec.params["w_v"] @ v) * np.tanh(spec.params["w_q"] @ q)
        np.testing.assert_allclose(out, expect, atol=1e-12)


class TestInvariants:
    def test_positive_homogeneity_of_normalize_concat(self):
        rng = np.random.default_rng(2)
        spec = make_fusion("normalize_concat", 4, 3)
        for _ in range(50):
            v, q = rng.normal(size=4), rng.normal(size=3)
            s = float(rng.uniform(0.01, 100.0))
            np.testing.assert_allclose(fuse(s * v, s * q, spec), fuse(v, q, spec),
                                       atol=1e-7)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        for method in FUSION_METHODS:
            dv = 3 if method == "weighted_average" else 4
            spec = make_fusion(method, dv, 3, rng=rng, fused_dim=5)
            v, q = rng.normal(size=(2, dv)), rng.normal(size=(2, 3))
            np.testing.assert_array_equal(fuse(v, q, spec), fuse(v, q, spec))

    def test_dim_mismatch(self):
        spec = make_fusion("concat", 3, 2)
        with pytest.raises(DimMismatchError):
            fuse(np.zeros(4), np.zeros(2), spec)
        with pytest.raises(DimMismatchError):
            make_fusion("weighted_average", 3, 2)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        for method in FUSION_METHODS:
            dv = 3 if method == "weighted_average" else 4
            spec = make_fusion(method, dv, 3, rng=rng, fused_dim=5)
            v, q = rng.normal(size=(6, dv)), rng.normal(size=(6, 3))
            batch = fuse(v, q, spec)
            for i in range(6):
                np.testing.assert_allclose(fuse(v[i], q[i], spec), batch[i], atol=1e-12)


class TestParameterGradients:
    """Central-difference oracle against fuse_backward."""

    @pytest.mark.parametrize("method", PARAMETRIC)
    def test_matches_finite_differences(self, method):
        rng = np.random.default_rng(5)
        dv = 4 if method != "weighted_average" else 3
        dq = 3
        for _ in range(10):
            spec = make_fusion(method, dv, dq, rng=rng, fused_dim=5)
            v = rng.normal(size=(6, dv))
            q = rng.normal(size=(6, dq))
            probe = rng.normal(size=(6, spec.output_dim))

            def loss() -> float:
                z, _ = fuse_forward(v, q, spec)
                return float((z * probe).sum())

            z, cache = fuse_forward(v, q, spec)
            analytic = fuse_backward(probe, cache, spec)
            for name, arr in spec.params.items():
                flat = arr.ravel()
                for i in range(flat.size):
                    h = 1e-6 * max(1.0, abs(flat[i]))
                    orig = flat[i]
                    flat[i] = orig + h
                    up = loss()
                    flat[i] = orig - h
                    down = loss()
                    flat[i] = orig
                    numeric = (up - down) / (2 * h)
                    got = analytic[name].ravel()[i]
                    denom = max(abs(numeric), abs(got), 1e-3)
                    assert abs(numeric - got) / denom <= 1e-4, (method, name, i)
