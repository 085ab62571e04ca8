"""Calibration run for acceptance criterion 5 (vector learning progress)."""

import sys
import time

import numpy as np

from crbm.data import holdout_cells
from crbm.learning import TrainConfig, train_vector
from crbm.metrics import heldout_metrics, rmse
from crbm.model import VectorCrbmParameters, even_scale
from crbm.inference import point_predictions, factor_posterior_meanfield
from crbm.model import level_probabilities
from crbm.synth import sample_vector_dataset

t0 = time.monotonic()
rng = np.random.default_rng(2024)
n_items, k, levels = 20, 5, 5
truth = VectorCrbmParameters(
    visible_bias=rng.normal(0, 0.3, n_items),
    factor_bias=np.zeros(k),
    weights=rng.normal(0, 0.8, (n_items, k)),
    utility_std=np.ones(n_items),
    scales=[even_scale(levels) for _ in range(n_items)],
)
full = sample_vector_dataset(truth, 2000, rng, burn_in=40)
print("sampled", full.n_entries, "cells", time.monotonic() - t0)

work, test = holdout_cells(full, 4, rng)
train, valid = holdout_cells(work, 4, rng)
print("train/valid/test cells:", train.n_entries, valid.n_entries, test.n_entries)

lr = float(sys.argv[1]) if len(sys.argv) > 1 else 0.05
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 12
config = TrainConfig(n_factors=k, learning_rate=lr, epochs=epochs, minibatch=100,
                     patience=10)
t1 = time.monotonic()
params, records = train_vector(train, valid, config, np.random.default_rng(7))
print(f"trained in {time.monotonic() - t1:.1f}s")
for r in records:
    print(f"epoch {r.epoch}: train_pll={r.train_pll:.4f} valid_pll={r.valid_pll:.4f} "
          f"rmse={r.valid_rmse:.4f} mae={r.valid_mae:.4f} ({r.seconds:.2f}s)")

pll = [r.valid_pll for r in records[:10]]
smooth = [np.mean(pll[max(0, i - 2) : i + 1]) for i in range(len(pll))]
print("smoothed:", [f"{s:.4f}" for s in smooth])
print("non-decreasing:", all(b >= a - 1e-12 for a, b in zip(smooth, smooth[1:])))

# item-mean baseline on test cells
ctx = train.per_instance()
tgt = test.per_instance()
report = heldout_metrics(params, ctx, tgt)
item_sums = np.zeros(n_items)
item_counts = np.zeros(n_items)
for d, i, lvl in train.iter_entries():
    item_sums[i] += lvl
    item_counts[i] += 1
item_means = item_sums / np.maximum(item_counts, 1)
base_preds = [item_means[i] for _, i, _ in test.iter_entries()]
base_truth = [lvl for _, _, lvl in test.iter_entries()]
print(f"model test rmse={report.rmse:.4f}  item-mean baseline={rmse(base_preds, base_truth):.4f}")
print(f"total {time.monotonic() - t0:.1f}s")
