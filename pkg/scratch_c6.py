"""Calibration for acceptance criterion 6 (matrix beats vector)."""

import sys
import time

import numpy as np

from crbm.data import holdout_cells
from crbm.learning import TrainConfig, train_vector
from crbm.matrix import init_matrix_parameters, matrix_heldout_metrics, train_matrix
from crbm.metrics import heldout_metrics
from crbm.synth import sample_matrix_dataset


def planted_matrix_model(rng, d_count=200, n_count=100, k=3, s=3, levels=5,
                         row_strength=1.6, col_strength=1.6):
    params = init_matrix_parameters(d_count, n_count, k, s, levels, init_std=0.15, rng=rng)
    item_sign = rng.choice([-1.0, 1.0], n_count)
    inst_sign = rng.choice([-1.0, 1.0], d_count)
    for i in range(n_count):
        params.item_weights[i, i % k] += row_strength * item_sign[i]
    for d in range(d_count):
        params.instance_weights[d, d % s] += col_strength * inst_sign[d]
    params.item_bias = rng.normal(0, 0.1, n_count) - row_strength * item_sign / 2.0
    params.instance_bias = rng.normal(0, 0.1, d_count) - col_strength * inst_sign / 2.0
    return params


def run_seed(seed, v_lr, m_lr, v_epochs, m_epochs):
    rng = np.random.default_rng(1000 + seed)
    truth = planted_matrix_model(rng)
    full = sample_matrix_dataset(truth, rng, density=0.3, burn_in=60)
    work, test = holdout_cells(full, 3, rng, min_context=6)
    train, valid = holdout_cells(work, 2, rng, min_context=6)

    t0 = time.monotonic()
    v_config = TrainConfig(n_factors=5, learning_rate=v_lr, epochs=v_epochs,
                           minibatch=100, patience=v_epochs)
    v_params, v_records = train_vector(train, valid, v_config, np.random.default_rng(seed))
    v_report = heldout_metrics(v_params, train.per_instance(), test.per_instance())
    t1 = time.monotonic()

    m_config = TrainConfig(n_factors=5, n_item_factors=5, learning_rate=m_lr,
                           epochs=m_epochs, minibatch=100, patience=m_epochs)
    m_params, m_tables, m_records = train_matrix(train, valid, m_config,
                                                 np.random.default_rng(seed))
    _, m_rmse, _ = matrix_heldout_metrics(m_params, m_tables, test)
    t2 = time.monotonic()
    print(f"seed {seed}: vector rmse={v_report.rmse:.4f} ({t1-t0:.0f}s) "
          f"matrix rmse={m_rmse:.4f} ({t2-t1:.0f}s) matrix_wins={m_rmse < v_report.rmse}")
    return v_report.rmse, m_rmse


if __name__ == "__main__":
    v_lr = float(sys.argv[1]) if len(sys.argv) > 1 else 1.5
    m_lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1.5
    v_epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 10
    m_epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 10
    seeds = range(int(sys.argv[5])) if len(sys.argv) > 5 else range(2)
    t0 = time.monotonic()
    wins = 0
    for seed in seeds:
        v, m = run_seed(seed, v_lr, m_lr, v_epochs, m_epochs)
        wins += m < v
    print(f"matrix wins {wins} of {len(list(seeds))}; total {time.monotonic()-t0:.0f}s")
