"""Tests for the matrix-variate model, views, smoothing, and training."""

import numpy as np
import pytest

from crbm.data import ObservationSet
from crbm.learning import TrainConfig
from crbm.matrix import (
    MatrixChains,
    MatrixCrbmParameters,
    PosteriorTables,
    cell_thresholds,
    cell_utility_mean,
    column_view,
    init_matrix_parameters,
    matrix_heldout_metrics,
    predict_cell,
    row_view,
    smooth_posteriors,
    structured_mean_field_epoch,
    train_matrix,
)
from crbm.model import level_probabilities
from crbm.synth import sample_matrix_dataset

from oracles import MatrixOracle, central_difference


def make_matrix_params(rng, d=3, n=3, k=2, s=2, levels=3, scale=0.5):
    params = init_matrix_parameters(d, n, k, s, levels, init_std=scale, rng=rng)
    params.item_bias = rng.normal(0, 0.3, n)
    params.instance_bias = rng.normal(0, 0.3, d)
    params.instance_factor_bias = rng.normal(0, 0.3, k)
    params.item_factor_bias = rng.normal(0, 0.3, s)
    params.item_log_gaps = rng.normal(0, 0.2, (n, levels - 2))
    params.instance_offsets = rng.normal(0, 0.2, (d, levels - 1))
    return params


class TestCellThresholds:
    def test_zero_offsets_reduce_to_item_thresholds(self):
        rng = np.random.default_rng(0)
        params = make_matrix_params(rng)
        params.instance_offsets[:] = 0.0
        for i in range(3):
            item_only = params.item_base[i] + np.concatenate(
                [[0.0], np.cumsum(np.exp(params.item_log_gaps[i]))]
            )
            np.testing.assert_array_equal(cell_thresholds(params, 1, i), item_only)

    def test_base_offset_shifts_first_threshold(self):
        rng = np.random.default_rng(1)
        params = make_matrix_params(rng)
        params.instance_offsets[:] = 0.0
        before = cell_thresholds(params, 0, 2)
        params.instance_offsets[0, 0] = 0.5
        after = cell_thresholds(params, 0, 2)
        assert abs((after[0] - before[0]) - 0.5) < 1e-12

    def test_ordering_for_any_offsets(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            params = make_matrix_params(rng, levels=5)
            params.instance_offsets = rng.normal(0, 3, params.instance_offsets.shape)
            th = cell_thresholds(params, int(rng.integers(3)), int(rng.integers(3)))
            assert np.all(np.diff(th) > 0)


class TestCellUtilityMean:
    def test_zero_factors(self):
        rng = np.random.default_rng(3)
        params = make_matrix_params(rng)
        got = cell_utility_mean(params, np.zeros(2), np.zeros(2), 1, 2)
        assert abs(got - (params.item_bias[2] + params.instance_bias[1])) < 1e-12

    def test_no_item_factors_matches_vector_mean(self):
        rng = np.random.default_rng(4)
        params = make_matrix_params(rng, s=0)
        h = rng.random(2)
        got = cell_utility_mean(params, h, np.zeros(0), 0, 1)
        expected = params.item_bias[1] + params.instance_bias[0] + params.item_weights[1] @ h
        assert abs(got - expected) < 1e-12

    def test_role_swap_symmetry(self):
        rng = np.random.default_rng(5)
        params = make_matrix_params(rng)
        h = rng.random(2)
        g = rng.random(2)
        swapped = MatrixCrbmParameters(
            item_bias=params.instance_bias.copy(),
            instance_bias=params.item_bias.copy(),
            instance_factor_bias=params.item_factor_bias.copy(),
            item_factor_bias=params.instance_factor_bias.copy(),
            item_weights=params.instance_weights.copy(),
            instance_weights=params.item_weights.copy(),
            utility_std=params.utility_std,
            item_base=np.zeros(3),
            item_log_gaps=np.zeros((3, 1)),
            instance_offsets=np.zeros((3, 2)),
            levels=3,
        )
        a = cell_utility_mean(params, h, g, 1, 2)
        b = cell_utility_mean(swapped, g, h, 2, 1)
        assert abs(a - b) < 1e-12


class TestViews:
    def test_column_view_reduces_to_vector_model(self):
        rng = np.random.default_rng(6)
        params = make_matrix_params(rng)
        params.instance_bias[:] = 0.0
        params.instance_offsets[:] = 0.0
        item_probs = np.zeros((3, 2))
        view = column_view(params, item_probs, 0, np.arange(3))
        np.testing.assert_allclose(view.visible_bias, params.item_bias)
        np.testing.assert_array_equal(view.weights, params.item_weights)
        for i, scale in enumerate(view.scales):
            np.testing.assert_allclose(
                scale.thresholds(), cell_thresholds(params, 0, i), atol=1e-12
            )

    def test_conditional_reduction_identity(self):
        # probabilities through the view equal the direct matrix-mean form
        rng = np.random.default_rng(7)
        params = make_matrix_params(rng)
        tables = PosteriorTables(
            instance_probs=rng.random((3, 2)), item_probs=rng.random((3, 2))
        )
        d = 1
        items = np.array([0, 2])
        view = column_view(params, tables.item_probs, d, items)
        for local_j, i in enumerate(items):
            via_view = level_probabilities(view, tables.instance_probs[d], local_j)
            direct = predict_cell(params, tables, d, i)
            np.testing.assert_allclose(via_view, direct, atol=1e-12)

    def test_row_view_mirror(self):
        rng = np.random.default_rng(8)
        params = make_matrix_params(rng)
        instance_probs = np.zeros((3, 2))
        view = row_view(params, instance_probs, 2, np.arange(3))
        expected_bias = params.item_bias[2] + params.instance_bias
        np.testing.assert_allclose(view.visible_bias, expected_bias)
        np.testing.assert_array_equal(view.weights, params.instance_weights)
        for local_d, scale in enumerate(view.scales):
            np.testing.assert_allclose(
                scale.thresholds(), cell_thresholds(params, local_d, 2), atol=1e-12
            )

    def test_ragged_masks_flow_through(self):
        rng = np.random.default_rng(9)
        params = make_matrix_params(rng)
        tables = PosteriorTables.uniform(3, 2, 3, 2)
        view_c = column_view(params, tables.item_probs, 1, np.array([2]))
        view_r = row_view(params, tables.instance_probs, 0, np.array([0, 2]))
        assert view_c.n_visible == 1
        assert view_r.n_visible == 2


class TestSmoothing:
    def test_convex_combination(self):
        assert smooth_posteriors(np.array([1.0]), np.array([0.0]), 0.5)[0] == 0.5

    def test_fixed_point(self):
        v = np.array([0.3, 0.8])
        np.testing.assert_array_equal(smooth_posteriors(v, v, 0.7), v)

    def test_geometric_convergence(self):
        prev = np.array([1.0])
        target = np.array([0.0])
        eta = 0.7
        for t in range(1, 30):
            prev = smooth_posteriors(prev, target, eta)
            assert abs(prev[0] - eta**t) < 1e-12

    def test_stays_probability_valued(self):
        rng = np.random.default_rng(10)
        table = rng.random((4, 3))
        for _ in range(500):
            table = smooth_posteriors(table, rng.random((4, 3)), 0.7)
        assert np.all((table >= 0) & (table <= 1))

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError):
            smooth_posteriors(np.array([0.5]), np.array([0.5]), 1.0)


class TestMatrixOracleGradients:
    def test_analytic_matches_finite_differences_spot_checks(self):
        rng = np.random.default_rng(11)
        params = make_matrix_params(rng, d=2, n=2, k=1, s=1, levels=3)
        cells = (np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), np.array([1, 3, 2, 2]))

        def evaluate():
            return MatrixOracle(params, cells).log_likelihood()

        grads = MatrixOracle(params, cells).gradients()
        checks = [
            ("item_bias", lambda: float(params.item_bias[0]),
             lambda v: params.item_bias.__setitem__(0, v), grads["item_bias"][0]),
            ("instance_bias", lambda: float(params.instance_bias[1]),
             lambda v: params.instance_bias.__setitem__(1, v), grads["instance_bias"][1]),
            ("item_weights", lambda: float(params.item_weights[1, 0]),
             lambda v: params.item_weights.__setitem__((1, 0), v), grads["item_weights"][1, 0]),
            ("instance_weights", lambda: float(params.instance_weights[0, 0]),
             lambda v: params.instance_weights.__setitem__((0, 0), v),
             grads["instance_weights"][0, 0]),
            ("item_log_gaps", lambda: float(params.item_log_gaps[0, 0]),
             lambda v: params.item_log_gaps.__setitem__((0, 0), v), grads["item_log_gaps"][0, 0]),
            ("kappa_base", lambda: float(params.instance_offsets[0, 0]),
             lambda v: params.instance_offsets.__setitem__((0, 0), v),
             grads["instance_offsets"][0, 0]),
            ("kappa_gap", lambda: float(params.instance_offsets[1, 1]),
             lambda v: params.instance_offsets.__setitem__((1, 1), v),
             grads["instance_offsets"][1, 1]),
        ]
        for name, read, write, got in checks:
            fd = central_difference(evaluate, read, write)
            assert abs(got - fd) <= 1e-4 * max(abs(got), abs(fd), 1e-8), name


def _matrix_dataset(rng, d=12, n=8, levels=4, density=0.7):
    truth = init_matrix_parameters(d, n, 2, 2, levels, init_std=0.8, rng=rng)
    truth.instance_bias = rng.normal(0, 0.4, d)
    return sample_matrix_dataset(truth, rng, density=density, burn_in=30)


class TestTraining:
    def test_structural_unit_count(self):
        rng = np.random.default_rng(12)
        chains = MatrixChains.initialise(5, 3, 4, 2, rng)
        total = chains.clamped_h.size + chains.clamped_g.size
        assert total == 5 * 3 + 4 * 2

    def test_epoch_runs_and_keeps_tables_valid(self):
        rng = np.random.default_rng(13)
        data = _matrix_dataset(rng)
        params = init_matrix_parameters(12, 8, 2, 2, 4, rng=rng)
        tables = PosteriorTables.uniform(12, 2, 8, 2)
        chains = MatrixChains.initialise(12, 2, 8, 2, rng)
        config = TrainConfig(n_factors=2, n_item_factors=2, learning_rate=0.05, minibatch=6)
        structured_mean_field_epoch(data, params, tables, chains, config, rng)
        assert params.is_finite()
        assert np.all((tables.instance_probs >= 0) & (tables.instance_probs <= 1))
        assert np.all((tables.item_probs >= 0) & (tables.item_probs <= 1))

    def test_no_item_factors_epoch_runs(self):
        rng = np.random.default_rng(14)
        data = _matrix_dataset(rng)
        params = init_matrix_parameters(12, 8, 2, 0, 4, rng=rng)
        tables = PosteriorTables.uniform(12, 2, 8, 0)
        chains = MatrixChains.initialise(12, 2, 8, 0, rng)
        config = TrainConfig(n_factors=2, n_item_factors=0, learning_rate=0.05, minibatch=6)
        structured_mean_field_epoch(data, params, tables, chains, config, rng)
        assert params.is_finite()

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(15)
        data = _matrix_dataset(rng)
        config = TrainConfig(
            n_factors=2, n_item_factors=2, learning_rate=0.05, epochs=2, minibatch=6
        )
        p1, t1, r1 = train_matrix(data, None, config, np.random.default_rng(3))
        p2, t2, r2 = train_matrix(data, None, config, np.random.default_rng(3))
        np.testing.assert_array_equal(p1.item_weights, p2.item_weights)
        np.testing.assert_array_equal(t1.instance_probs, t2.instance_probs)
        assert [r.train_pll for r in r1] == [r.train_pll for r in r2]

    def test_single_instance_degenerate(self):
        rng = np.random.default_rng(16)
        truth = init_matrix_parameters(1, 8, 2, 2, 4, init_std=0.6, rng=rng)
        data = sample_matrix_dataset(truth, rng, density=1.0, burn_in=20)
        config = TrainConfig(n_factors=2, n_item_factors=2, epochs=2, minibatch=4)
        params, tables, records = train_matrix(data, None, config, rng)
        assert params.is_finite()
        assert tables.instance_probs.shape == (1, 2)

    def test_validation_improves_on_synthetic(self):
        rng = np.random.default_rng(17)
        data = _matrix_dataset(rng, d=30, n=10, density=0.9)
        held = np.zeros(data.n_entries, dtype=bool)
        held[rng.choice(data.n_entries, size=40, replace=False)] = True
        train, valid = data.subset(~held), data.subset(held)
        config = TrainConfig(
            n_factors=2, n_item_factors=2, learning_rate=0.1, epochs=6, minibatch=10, patience=5
        )
        _, _, records = train_matrix(train, valid, config, np.random.default_rng(4))
        assert records[-1].valid_pll > records[0].valid_pll - 0.05

    def test_predict_cell_contract(self):
        rng = np.random.default_rng(18)
        params = make_matrix_params(rng)
        tables = PosteriorTables(rng.random((3, 2)), rng.random((3, 2)))
        probs = predict_cell(params, tables, 1, 2)
        assert abs(probs.sum() - 1.0) < 1e-9
        cold = predict_cell(params, tables, None, 2)
        assert abs(cold.sum() - 1.0) < 1e-9
        both_cold = predict_cell(params, tables, None, None)
        assert abs(both_cold.sum() - 1.0) < 1e-9


class TestRoleSymmetry:
    def test_transposed_model_gives_identical_predictives(self):
        rng = np.random.default_rng(19)
        params = make_matrix_params(rng)
        tables = PosteriorTables(rng.random((3, 2)), rng.random((3, 2)))
        # swap roles: items <-> instances, w <-> omega, gamma <-> xi, and move
        # the threshold split so every cell keeps the same cutpoints
        swapped = MatrixCrbmParameters(
            item_bias=params.instance_bias.copy(),
            instance_bias=params.item_bias.copy(),
            instance_factor_bias=params.item_factor_bias.copy(),
            item_factor_bias=params.instance_factor_bias.copy(),
            item_weights=params.instance_weights.copy(),
            instance_weights=params.item_weights.copy(),
            utility_std=params.utility_std,
            item_base=params.instance_offsets[:, 0].copy(),
            item_log_gaps=params.instance_offsets[:, 1:].copy(),
            instance_offsets=np.column_stack([params.item_base, params.item_log_gaps]),
            levels=params.levels,
        )
        swapped_tables = PosteriorTables(
            instance_probs=tables.item_probs.copy(), item_probs=tables.instance_probs.copy()
        )
        for d in range(3):
            for i in range(3):
                a = predict_cell(params, tables, d, i)
                b = predict_cell(swapped, swapped_tables, i, d)
                np.testing.assert_allclose(a, b, atol=1e-12)
