"""Tests for RMSE/MAE and pseudo-likelihood monitoring."""

import numpy as np
import pytest

from crbm.errors import EmptyEvaluationError
from crbm.inference import predict_variational
from crbm.metrics import (
    dataset_pseudo_log_likelihood,
    heldout_metrics,
    mae,
    pseudo_log_likelihood,
    rmse,
    write_metrics_report,
)
from crbm.model import VectorCrbmParameters, even_scale, level_probabilities

from oracles import VectorOracle


def make_params(rng, n=3, k=2, levels=3, weight_scale=0.6):
    return VectorCrbmParameters(
        visible_bias=rng.normal(0, 0.4, n),
        factor_bias=rng.normal(0, 0.4, k),
        weights=rng.normal(0, weight_scale, (n, k)),
        utility_std=np.ones(n),
        scales=[even_scale(levels) for _ in range(n)],
    )


class TestRmseMae:
    def test_exact_predictions(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert mae([1, 2, 3], [1, 2, 3]) == 0.0

    def test_constant_offset(self):
        assert rmse([2, 3, 4], [1, 2, 3]) == 1.0

    def test_signed_errors_square_out(self):
        assert rmse([2, 1], [1, 2]) == 1.0

    def test_mae_forced_arithmetic(self):
        assert mae([3, 1], [1, 1]) == 1.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(1, 5, 50)
        t = rng.integers(1, 6, 50).astype(float)
        perm = rng.permutation(50)
        assert rmse(p, t) == rmse(p[perm], t[perm])
        assert mae(p, t) == mae(p[perm], t[perm])

    def test_empty_rejected(self):
        with pytest.raises(EmptyEvaluationError):
            rmse([], [])
        with pytest.raises(EmptyEvaluationError):
            mae([1.0], [1.0, 2.0])


class TestPseudoLogLikelihood:
    def test_decoupled_equals_base_probabilities(self):
        rng = np.random.default_rng(1)
        params = make_params(rng)
        params.weights[:] = 0.0
        items = np.array([0, 1, 2])
        levels = np.array([1, 2, 3])
        got = pseudo_log_likelihood(params, items, levels)
        expected = np.mean(
            [
                np.log(level_probabilities(params, np.zeros(2), int(i))[int(l) - 1])
                for i, l in zip(items, levels)
            ]
        )
        assert abs(got - expected) < 1e-6

    def test_composes_the_variational_predictive(self):
        # the monitor equals the mean log of the full-context predictive
        rng = np.random.default_rng(2)
        params = make_params(rng)
        items = np.array([0, 1, 2])
        levels = np.array([2, 3, 1])
        got = pseudo_log_likelihood(params, items, levels)
        from crbm.inference import factor_posterior_meanfield

        mf = factor_posterior_meanfield(items, levels, params)
        expected = np.mean(
            [
                np.log(level_probabilities(params, mf.factor_probs, int(i))[int(l) - 1])
                for i, l in zip(items, levels)
            ]
        )
        assert abs(got - expected) < 1e-12

    def test_close_to_oracle_on_decoupled_model(self):
        rng = np.random.default_rng(3)
        params = make_params(rng)
        params.weights[:] = 0.0
        items = np.array([0, 2])
        levels = np.array([3, 3])
        oracle = VectorOracle(params)
        expected = np.mean(
            [
                np.log(oracle.predictive(np.delete(items, j), np.delete(levels, j), int(items[j]))[
                    int(levels[j]) - 1
                ])
                for j in range(items.size)
            ]
        )
        got = pseudo_log_likelihood(params, items, levels)
        assert abs(got - expected) < 1e-6

    def test_floor_prevents_nan(self):
        rng = np.random.default_rng(4)
        params = make_params(rng)
        params.visible_bias[0] = 10.0  # level 1 has probability ~4e-31: floored
        got = pseudo_log_likelihood(params, np.array([0]), np.array([1]))
        assert np.isfinite(got)
        assert got == pytest.approx(np.log(1e-12))

    def test_deterministic(self):
        params = make_params(np.random.default_rng(5))
        items = np.array([0, 1])
        levels = np.array([2, 2])
        assert pseudo_log_likelihood(params, items, levels) == pseudo_log_likelihood(
            params, items, levels
        )

    def test_empty_instance_rejected(self):
        params = make_params(np.random.default_rng(6))
        with pytest.raises(EmptyEvaluationError):
            pseudo_log_likelihood(params, np.empty(0, dtype=int), np.empty(0, dtype=int))


class TestHeldout:
    def test_scores_targets_from_context(self):
        rng = np.random.default_rng(7)
        params = make_params(rng)
        context = [(np.array([0, 1]), np.array([2, 3])), (np.array([2]), np.array([1]))]
        targets = [(np.array([2]), np.array([3])), (np.empty(0, dtype=int), np.empty(0, dtype=int))]
        report = heldout_metrics(params, context, targets)
        assert report.n_cells == 1
        probs = predict_variational(context[0][0], context[0][1], params, target=2)
        assert abs(report.pll - np.log(probs[2])) < 1e-12

    def test_dataset_average_weighting(self):
        rng = np.random.default_rng(8)
        params = make_params(rng)
        instances = [
            (np.array([0, 1, 2]), np.array([1, 2, 3])),
            (np.array([1]), np.array([3])),
        ]
        got = dataset_pseudo_log_likelihood(params, instances)
        a = pseudo_log_likelihood(params, *instances[0])
        b = pseudo_log_likelihood(params, *instances[1])
        assert abs(got - (3 * a + 1 * b) / 4) < 1e-12


class TestReportFile:
    def test_format(self, tmp_path):
        path = tmp_path / "report.tsv"
        write_metrics_report(path, [("rmse", 0.5, 10), ("mae", 0.25, 10)])
        lines = path.read_text().splitlines()
        assert lines[0] == "metric\tvalue\tn_cells"
        assert lines[1].startswith("rmse\t0.5")
        assert len(lines) == 3
