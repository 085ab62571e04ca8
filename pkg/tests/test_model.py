"""Tests for threshold construction, model conditionals, and serialization."""

import math

import numpy as np
import pytest

from crbm.errors import OutOfRangeLevelError
from crbm.model import (
    OrdinalScale,
    VectorCrbmParameters,
    even_scale,
    factor_activations,
    init_parameters,
    level_probabilities,
    utility_interval,
    utility_means,
)
from crbm.serialize import load_model, save_vector_model
from crbm.truncnorm import Interval, interval_mass


class TestThresholds:
    def test_unit_gaps(self):
        scale = OrdinalScale(base=0.0, log_gaps=np.zeros(2), levels=4)
        np.testing.assert_allclose(scale.thresholds(), [0.0, 1.0, 2.0])

    def test_binary_scale(self):
        scale = OrdinalScale(base=0.0, log_gaps=np.zeros(0), levels=2)
        np.testing.assert_allclose(scale.thresholds(), [0.0])

    def test_log_gap_arithmetic(self):
        scale = OrdinalScale(base=-1.0, log_gaps=np.array([math.log(2.0)]), levels=3)
        np.testing.assert_allclose(scale.thresholds(), [-1.0, 1.0])

    def test_monotone_for_any_parameters(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            levels = int(rng.integers(2, 9))
            scale = OrdinalScale(
                base=float(rng.normal(0, 5)),
                log_gaps=rng.normal(0, 3, levels - 2),
                levels=levels,
            )
            assert np.all(np.diff(scale.thresholds()) > 0)

    def test_even_scale_centred(self):
        th = even_scale(5).thresholds()
        np.testing.assert_allclose(th, [-1.5, -0.5, 0.5, 1.5])
        assert abs(th.sum()) < 1e-12


class TestUtilityInterval:
    def setup_method(self):
        self.scale = OrdinalScale(base=0.0, log_gaps=np.zeros(2), levels=4)

    def test_lowest_level_unbounded_below(self):
        iv = utility_interval(self.scale, 1)
        assert iv.lower == -math.inf and iv.upper == 0.0

    def test_middle_level(self):
        iv = utility_interval(self.scale, 3)
        assert (iv.lower, iv.upper) == (1.0, 2.0)

    def test_top_level_unbounded_above(self):
        iv = utility_interval(self.scale, 4)
        assert iv.lower == 2.0 and iv.upper == math.inf

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeLevelError):
            utility_interval(self.scale, 0)
        with pytest.raises(OutOfRangeLevelError):
            utility_interval(self.scale, 5)


def _tiny_params(weights, alpha, gamma, stds=None, levels=3):
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    n, k = weights.shape
    return VectorCrbmParameters(
        visible_bias=np.asarray(alpha, dtype=float),
        factor_bias=np.asarray(gamma, dtype=float),
        weights=weights,
        utility_std=np.ones(n) if stds is None else np.asarray(stds, dtype=float),
        scales=[even_scale(levels) for _ in range(n)],
    )


class TestUtilityMean:
    def test_direct_substitution(self):
        params = _tiny_params([[0.5, -0.3]], [0.2], [0.0, 0.0])
        got = utility_means(params, np.array([1.0, 1.0]))
        np.testing.assert_allclose(got, [0.4])

    def test_zero_factors(self):
        params = _tiny_params([[0.5, -0.3]], [0.2], [0.0, 0.0])
        np.testing.assert_allclose(utility_means(params, np.zeros(2)), [0.2])

    def test_variance_scaling(self):
        params = _tiny_params([[1.0]], [0.0], [0.0], stds=[2.0])
        np.testing.assert_allclose(utility_means(params, np.ones(1)), [4.0])

    def test_accepts_real_valued_factors(self):
        params = _tiny_params([[1.0, 1.0]], [0.0], [0.0, 0.0])
        np.testing.assert_allclose(utility_means(params, np.array([0.25, 0.5])), [0.75])


class TestLevelProbabilities:
    def test_binary_symmetry(self):
        params = _tiny_params([[0.0]], [0.0], [0.0], levels=2)
        np.testing.assert_allclose(level_probabilities(params, np.zeros(1), 0), [0.5, 0.5])

    def test_three_levels_shifted_mean(self):
        params = _tiny_params([[0.5]], [0.0], [0.0], levels=3)
        params.scales[0] = OrdinalScale(base=0.0, log_gaps=np.zeros(1), levels=3)
        probs = level_probabilities(params, np.ones(1), 0)  # mean 0.5, thresholds (0, 1)
        np.testing.assert_allclose(probs, [0.3085, 0.3829, 0.3085], atol=1e-4)

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n, k = 3, 2
            params = VectorCrbmParameters(
                visible_bias=rng.normal(0, 2, n),
                factor_bias=rng.normal(0, 1, k),
                weights=rng.normal(0, 2, (n, k)),
                utility_std=rng.uniform(0.3, 3, n),
                scales=[even_scale(int(rng.integers(2, 8))) for _ in range(n)],
            )
            h = rng.random(k)
            for i in range(n):
                probs = level_probabilities(params, h, i)
                assert abs(probs.sum() - 1.0) < 1e-9
                assert np.all(probs >= 0)

    def test_matches_interval_mass_exactly(self):
        # the distribution is the Gaussian mass of each level's interval
        rng = np.random.default_rng(2)
        for _ in range(50):
            params = _tiny_params(
                rng.normal(0, 1, (2, 2)), rng.normal(0, 1, 2), rng.normal(0, 1, 2), levels=4
            )
            h = (rng.random(2) < 0.5).astype(float)
            for i in range(2):
                probs = level_probabilities(params, h, i)
                mu = float(utility_means(params, h, np.array([i]))[0])
                for lvl in range(1, 5):
                    iv = utility_interval(params.scales[i], lvl)
                    assert abs(probs[lvl - 1] - interval_mass(mu, 1.0, iv)) < 1e-12


class TestFactorActivations:
    def test_orthogonal_gives_half(self):
        params = _tiny_params([[1.0], [-1.0]], [0.0, 0.0], [0.0])
        got = factor_activations(params, np.array([1.0, 1.0]))
        np.testing.assert_allclose(got, [0.5])

    def test_saturation(self):
        params = _tiny_params([[0.0]], [0.0], [500.0])
        assert factor_activations(params, np.zeros(1))[0] == 1.0

    def test_cancellation(self):
        params = _tiny_params([[-1.0]], [0.0], [1.0])
        got = factor_activations(params, np.array([1.0]))
        np.testing.assert_allclose(got, [0.5])

    def test_masked_subset(self):
        params = _tiny_params([[1.0], [2.0], [3.0]], np.zeros(3), [0.0])
        u = np.array([0.5, -0.25])
        got = factor_activations(params, u, items=np.array([0, 2]))
        expected = 1.0 / (1.0 + math.exp(-(0.5 * 1.0 - 0.25 * 3.0)))
        np.testing.assert_allclose(got, [expected])


class TestInitParameters:
    def test_zero_std_gives_base_distribution(self):
        rng = np.random.default_rng(0)
        params = init_parameters(4, 3, [5] * 4, init_std=0.0, rng=rng)
        assert np.all(params.weights == 0)
        probs = level_probabilities(params, np.zeros(3), 0)
        base = _tiny_params([[0.0]], [0.0], [0.0], levels=5)
        np.testing.assert_allclose(probs, level_probabilities(base, np.zeros(1), 0))

    def test_no_factors_reduces_to_independent_probit(self):
        params = init_parameters(3, 0, [4, 4, 4], rng=np.random.default_rng(0))
        assert params.weights.shape == (3, 0)
        probs = level_probabilities(params, np.zeros(0), 1)
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_seeded_determinism(self):
        a = init_parameters(5, 4, [3] * 5, init_std=0.1, rng=np.random.default_rng(42))
        b = init_parameters(5, 4, [3] * 5, init_std=0.1, rng=np.random.default_rng(42))
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_heterogeneous_levels_coexist(self):
        params = init_parameters(2, 2, [3, 5], rng=np.random.default_rng(0))
        assert params.scales[0].levels == 3
        assert params.scales[1].levels == 5
        assert utility_interval(params.scales[0], 3).upper == math.inf
        assert utility_interval(params.scales[1], 3).upper < math.inf


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(123)
        params = VectorCrbmParameters(
            visible_bias=rng.normal(0, 1, 3),
            factor_bias=rng.normal(0, 1, 2),
            weights=rng.normal(0, 1, (3, 2)),
            utility_std=rng.uniform(0.5, 2, 3),
            scales=[
                OrdinalScale(rng.normal(), rng.normal(0, 1, 2), 4),
                even_scale(2),
                even_scale(7),
            ],
        )
        path = tmp_path / "model.json"
        save_vector_model(path, params, item_labels=["a", "b", "c"])
        loaded = load_model(path)
        assert loaded.kind == "vector"
        assert loaded.item_labels == ["a", "b", "c"]
        np.testing.assert_array_equal(loaded.params.visible_bias, params.visible_bias)
        np.testing.assert_array_equal(loaded.params.factor_bias, params.factor_bias)
        np.testing.assert_array_equal(loaded.params.weights, params.weights)
        np.testing.assert_array_equal(loaded.params.utility_std, params.utility_std)
        for got, want in zip(loaded.params.scales, params.scales):
            assert got.base == want.base
            np.testing.assert_array_equal(got.log_gaps, want.log_gaps)
            assert got.levels == want.levels

        # saving the loaded model reproduces the file byte for byte
        second = tmp_path / "model2.json"
        save_vector_model(second, loaded.params, item_labels=loaded.item_labels)
        assert path.read_bytes() == second.read_bytes()

    def test_version_check(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 99, "kind": "vector"}')
        with pytest.raises(ValueError):
            load_model(path)
