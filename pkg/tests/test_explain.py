import itertools
import math

import numpy as np
import pytest

from fusecast.errors import (
    InvalidSpec,
    LengthMismatch,
    MalformedAttention,
    WindowTooLargeForExact,
)
from fusecast.explain import (
    ExplainConfig,
    combine,
    explain,
    gaussian_smooth,
    mean_attention,
    sample_background,
    shap_exact,
    shap_sampled,
)
from fusecast.nn import ModelConfig, init_params

from test_nn import zeroed


def shap_permutation_oracle(f, x, background):
    """Independent Shapley oracle: average marginal contributions over all
    w! orderings, with its own composite-window evaluation."""
    w = len(x)
    background = np.asarray(background, dtype=np.float64)

    def value(subset):
        composite = background.copy()
        idx = list(subset)
        composite[:, idx] = x[idx]
        return float(np.mean([f(row) for row in composite]))

    cache = {}

    def cached_value(subset):
        key = frozenset(subset)
        if key not in cache:
            cache[key] = value(key)
        return cache[key]

    s = np.zeros(w)
    for order in itertools.permutations(range(w)):
        prefix = set()
        prev = cached_value(prefix)
        for i in order:
            prefix.add(i)
            cur = cached_value(prefix)
            s[i] += cur - prev
            prev = cur
    return s / math.factorial(w), cached_value(frozenset())


def small_model(w, seed=0):
    params = init_params(ModelConfig(w=w, cnn_layers=2, filters=3, kernel_size=2,
                                     heads=2, head_dim=2, seed=seed))

    def f(window):
        from fusecast.nn import _forward_batch
        return float(_forward_batch(params, np.asarray(window)[None])[0][0])

    return params, f


class TestMeanAttention:
    def test_uniform(self):
        a = mean_attention(np.full((2, 4, 4), 0.25))
        np.testing.assert_allclose(a, 0.25)

    def test_hand_mean(self):
        att = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        np.testing.assert_allclose(mean_attention(att), [0.5, 0.5])

    def test_random_stochastic_sums_to_one(self, rng):
        raw = rng.uniform(size=(3, 6, 6))
        att = raw / raw.sum(axis=2, keepdims=True)
        assert abs(mean_attention(att).sum() - 1.0) < 1e-9

    def test_rejects_bad_rows(self):
        att = np.full((1, 3, 3), 0.4)
        with pytest.raises(MalformedAttention):
            mean_attention(att)
        with pytest.raises(MalformedAttention):
            mean_attention(np.zeros((2, 3)))


class TestShapExact:
    def test_linear_game(self):
        x = np.array([1.0, -2.0, 3.0])
        result = shap_exact(lambda v: float(np.sum(v)), x, np.zeros((1, 3)))
        np.testing.assert_allclose(result.s, x, atol=1e-12)
        assert abs(result.base_value) < 1e-12

    def test_constant_game(self, rng):
        x = rng.normal(size=4)
        result = shap_exact(lambda v: 7.5, x, rng.normal(size=(3, 4)))
        np.testing.assert_allclose(result.s, 0.0, atol=1e-12)
        assert result.base_value == 7.5

    @pytest.mark.parametrize("w", [4, 6])
    def test_matches_permutation_enumeration(self, w, rng):
        _, f = small_model(w, seed=w)
        x = rng.normal(size=w)
        background = rng.normal(size=(5, w))
        result = shap_exact(f, x, background)
        s_oracle, base_oracle = shap_permutation_oracle(f, x, background)
        np.testing.assert_allclose(result.s, s_oracle, atol=1e-9)
        assert abs(result.base_value - base_oracle) < 1e-9

    @pytest.mark.parametrize("w", [4, 6])
    def test_additivity(self, w, rng):
        _, f = small_model(w, seed=w + 10)
        x = rng.normal(size=w)
        background = rng.normal(size=(4, w))
        result = shap_exact(f, x, background)
        assert abs(result.base_value + result.s.sum() - f(x)) < 1e-9

    def test_window_cap(self):
        with pytest.raises(WindowTooLargeForExact):
            shap_exact(lambda v: 0.0, np.zeros(13), np.zeros((1, 13)))

    def test_symmetry_of_exchangeable_lags(self):
        # f symmetric in lags 0 and 1, background identical in those lags
        f = lambda v: float(v[0] * v[1] + v[2])
        x = np.array([2.0, 2.0, 1.0])
        background = np.array([[0.5, 0.5, 0.0], [-0.5, -0.5, 1.0]])
        result = shap_exact(f, x, background)
        assert abs(result.s[0] - result.s[1]) < 1e-9

    def test_null_player(self, rng):
        # f provably ignores lag 2
        f = lambda v: float(v[0] - 3.0 * v[1] + v[3] ** 2)
        x = rng.normal(size=4)
        background = rng.normal(size=(6, 4))
        result = shap_exact(f, x, background)
        assert abs(result.s[2]) < 1e-9


class TestShapSampled:
    def test_linear_exact_for_any_m(self, rng):
        weights = rng.normal(size=5)
        f = lambda v: float(weights @ v)
        x = rng.normal(size=5)
        background = rng.normal(size=(3, 5))
        exact = shap_exact(f, x, background)
        sampled = shap_sampled(f, x, background, m=4, seed=1)
        np.testing.assert_allclose(sampled.s, exact.s, atol=1e-9)

    def test_additivity_enforced(self, rng):
        _, f = small_model(6, seed=2)
        x = rng.normal(size=6)
        background = rng.normal(size=(4, 6))
        result = shap_sampled(f, x, background, m=40, seed=5)
        assert abs(result.base_value + result.s.sum() - f(x)) < 1e-9

    def test_deterministic(self, rng):
        _, f = small_model(5, seed=3)
        x = rng.normal(size=5)
        background = rng.normal(size=(4, 5))
        a = shap_sampled(f, x, background, m=30, seed=9)
        b = shap_sampled(f, x, background, m=30, seed=9)
        np.testing.assert_array_equal(a.s, b.s)

    def test_converges_to_exact(self, rng):
        _, f = small_model(6, seed=4)
        x = rng.normal(size=6)
        background = rng.normal(size=(4, 6))
        exact = shap_exact(f, x, background)
        scale = np.abs(exact.s).max()
        errors = []
        for m in (50, 500, 2000):
            sampled = shap_sampled(f, x, background, m=m, seed=11)
            errors.append(np.abs(sampled.s - exact.s).mean())
        assert errors[2] <= errors[0] + 1e-12
        assert errors[2] < 0.05 * scale


class TestCombine:
    def test_uniform_attention_scales(self, rng):
        s = rng.normal(size=6)
        c = combine(s, np.full(6, 1.0 / 6))
        np.testing.assert_allclose(c, s / 6, atol=1e-15)
        assert np.argmax(np.abs(c)) == np.argmax(np.abs(s))

    def test_zero_shap(self):
        np.testing.assert_array_equal(combine(np.zeros(4), np.full(4, 0.25)), np.zeros(4))

    def test_elementwise_oracle(self, rng):
        s, a = rng.normal(size=8), rng.uniform(size=8)
        c = combine(s, a)
        for i in range(8):
            assert abs(c[i] - s[i] * a[i]) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            combine(np.zeros(3), np.zeros(4))


class TestGaussianSmooth:
    def test_constant_preserved(self):
        c = np.full(12, 3.7)
        np.testing.assert_allclose(gaussian_smooth(c, 2.0), c, atol=1e-12)

    def test_impulse_recovers_kernel(self):
        # radius ceil(4*1)=4 exactly spans a width-9 window centred at 4
        c = np.zeros(9)
        c[4] = 1.0
        out = gaussian_smooth(c, 1.0)
        offsets = np.arange(-4, 5)
        kernel = np.exp(-0.5 * offsets**2)
        kernel /= kernel.sum()
        # centre value is the kernel weight at zero offset; interior values
        # reproduce the kernel exactly (no boundary influence there)
        assert abs(out[4] - kernel[4]) < 1e-12
        np.testing.assert_allclose(out[1:8], kernel[1:8], atol=1e-12)
        # direct-evaluation oracle including the reflect boundary rule
        def reflect(p):
            period = 2 * 9 - 2
            p = abs(p) % period
            return period - p if p >= 9 else p
        expect = np.array([
            sum(kernel[j + 4] * c[reflect(t - j)] for j in range(-4, 5))
            for t in range(9)
        ])
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_linearity(self, rng):
        c1, c2 = rng.normal(size=15), rng.normal(size=15)
        alpha, beta = 1.7, -0.4
        lhs = gaussian_smooth(alpha * c1 + beta * c2, 1.5)
        rhs = alpha * gaussian_smooth(c1, 1.5) + beta * gaussian_smooth(c2, 1.5)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_invalid_sigma(self):
        with pytest.raises(InvalidSpec):
            gaussian_smooth(np.zeros(5), 0.0)


class TestSampleBackground:
    def test_returns_all_when_small(self, rng):
        windows = rng.normal(size=(10, 4))
        out = sample_background(windows, 64, seed=1)
        np.testing.assert_array_equal(out, windows)

    def test_subsamples_deterministically(self, rng):
        windows = rng.normal(size=(100, 4))
        a = sample_background(windows, 16, seed=2)
        b = sample_background(windows, 16, seed=2)
        assert a.shape == (16, 4)
        np.testing.assert_array_equal(a, b)


class TestExplainPipeline:
    def test_zero_weight_model(self, rng):
        params, _ = small_model(6, seed=5)
        constant = zeroed(params, b_out=1.0)
        x = rng.normal(size=6)
        background = rng.normal(size=(4, 6))
        result = explain(constant, x, background,
                         ExplainConfig(shap_mode="exact", smoothing_sigma=1.0))
        np.testing.assert_allclose(result.s, 0.0, atol=1e-12)
        np.testing.assert_allclose(result.c, 0.0, atol=1e-12)
        np.testing.assert_allclose(result.c_smooth, 0.0, atol=1e-12)
        assert result.base_value == 1.0

    def test_combined_is_product(self, rng):
        params, _ = small_model(6, seed=6)
        x = rng.normal(size=6)
        background = rng.normal(size=(5, 6))
        result = explain(params, x, background,
                         ExplainConfig(shap_mode="exact", smoothing_sigma=1.0))
        np.testing.assert_allclose(result.c, result.s * result.a, atol=1e-12)

    def test_reported_lags_and_concentration(self, rng):
        params, _ = small_model(10, seed=7)
        x = rng.normal(size=10)
        background = rng.normal(size=(6, 10))
        result = explain(params, x, background,
                         ExplainConfig(shap_mode="sampled", sample_permutations=60,
                                       smoothing_sigma=2.0, seed=3))
        assert result.reported_lags == range(1, 10)  # ceil(0.1*10) = 1 dropped
        assert 0.0 <= result.recency_concentration <= 1.0

    def test_attention_summary_matches_trace(self, rng):
        from fusecast.nn import forward
        from fusecast.explain import mean_attention as ma
        params, _ = small_model(7, seed=8)
        x = rng.normal(size=7)
        background = rng.normal(size=(3, 7))
        result = explain(params, x, background,
                         ExplainConfig(shap_mode="exact", smoothing_sigma=1.0))
        _, trace = forward(params, x)
        np.testing.assert_allclose(result.a, ma(trace.attention), atol=1e-12)
        assert abs(result.a.sum() - 1.0) < 1e-6
