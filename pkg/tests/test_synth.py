"""Tests for the synthetic data generators."""

import numpy as np

from crbm.matrix import cell_thresholds, init_matrix_parameters
from crbm.model import VectorCrbmParameters, even_scale
from crbm.synth import sample_matrix_dataset, sample_vector_dataset


def test_vector_sampler_respects_scales_and_density():
    rng = np.random.default_rng(0)
    params = VectorCrbmParameters(
        visible_bias=rng.normal(0, 0.3, 6),
        factor_bias=np.zeros(2),
        weights=rng.normal(0, 0.5, (6, 2)),
        utility_std=np.ones(6),
        scales=[even_scale(3) for _ in range(3)] + [even_scale(5) for _ in range(3)],
    )
    obs = sample_vector_dataset(params, 200, rng, density=0.5, burn_in=10)
    assert obs.n_instances == 200
    for i in range(3):
        sel = obs.levels[obs.items == i]
        assert sel.max() <= 3
    assert 0.4 < obs.n_entries / (200 * 6) < 0.6


def test_vector_sampler_seeded():
    rng_params = np.random.default_rng(1)
    params = VectorCrbmParameters(
        visible_bias=rng_params.normal(0, 0.3, 4),
        factor_bias=np.zeros(2),
        weights=rng_params.normal(0, 0.5, (4, 2)),
        utility_std=np.ones(4),
        scales=[even_scale(4) for _ in range(4)],
    )
    a = sample_vector_dataset(params, 20, np.random.default_rng(9), burn_in=5)
    b = sample_vector_dataset(params, 20, np.random.default_rng(9), burn_in=5)
    np.testing.assert_array_equal(a.levels, b.levels)


def test_matrix_sampler_levels_follow_cell_thresholds():
    rng = np.random.default_rng(2)
    params = init_matrix_parameters(10, 8, 2, 2, 4, init_std=0.5, rng=rng)
    params.instance_offsets = rng.normal(0, 0.3, params.instance_offsets.shape)
    obs = sample_matrix_dataset(params, rng, density=0.6, burn_in=10)
    assert obs.levels.min() >= 1 and obs.levels.max() <= 4
    assert obs.n_instances == 10 and obs.n_items == 8
    # every cell's thresholds remain ordered under the sampled offsets
    for d, i, _ in list(obs.iter_entries())[:20]:
        assert np.all(np.diff(cell_thresholds(params, d, i)) > 0)
