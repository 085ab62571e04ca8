"""Model persistence: self-describing JSON with bit-exact float round-trips.

Python's JSON encoder emits the shortest representation that parses back to
the identical double, so arrays survive save/load unchanged.  Matrix models
extend the vector header with instance-side parameters and, optionally, the
posterior tables needed for warm restarts and prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .matrix import MatrixCrbmParameters, PosteriorTables
from .model import OrdinalScale, VectorCrbmParameters

FORMAT_VERSION = 1


@dataclass
class LoadedModel:
    kind: str                      # "vector" | "matrix"
    params: object                 # VectorCrbmParameters | MatrixCrbmParameters
    item_labels: list
    instance_labels: list | None = None
    posteriors: PosteriorTables | None = None


def _scale_record(scale: OrdinalScale) -> dict:
    return {
        "base": float(scale.base),
        "log_gaps": [float(x) for x in scale.log_gaps],
        "levels": int(scale.levels),
    }


def _scale_from_record(rec: dict) -> OrdinalScale:
    return OrdinalScale(rec["base"], np.array(rec["log_gaps"], dtype=float), rec["levels"])


def save_vector_model(path, params: VectorCrbmParameters, item_labels=None) -> None:
    if item_labels is None:
        item_labels = [str(i) for i in range(params.n_visible)]
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "vector",
        "n_visible": params.n_visible,
        "n_factors": params.n_factors,
        "visible_bias": params.visible_bias.tolist(),
        "factor_bias": params.factor_bias.tolist(),
        "weights": params.weights.tolist(),
        "utility_std": params.utility_std.tolist(),
        "scales": [_scale_record(s) for s in params.scales],
        "item_labels": [str(x) for x in item_labels],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def save_matrix_model(
    path,
    params: MatrixCrbmParameters,
    instance_labels=None,
    item_labels=None,
    posteriors: PosteriorTables | None = None,
) -> None:
    if item_labels is None:
        item_labels = [str(i) for i in range(params.n_items)]
    if instance_labels is None:
        instance_labels = [str(d) for d in range(params.n_instances)]
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "matrix",
        "n_items": params.n_items,
        "n_instances": params.n_instances,
        "n_instance_factors": params.n_instance_factors,
        "n_item_factors": params.n_item_factors,
        "levels": params.levels,
        "item_bias": params.item_bias.tolist(),
        "instance_bias": params.instance_bias.tolist(),
        "instance_factor_bias": params.instance_factor_bias.tolist(),
        "item_factor_bias": params.item_factor_bias.tolist(),
        "item_weights": params.item_weights.tolist(),
        "instance_weights": params.instance_weights.tolist(),
        "utility_std": float(params.utility_std),
        "item_base": params.item_base.tolist(),
        "item_log_gaps": params.item_log_gaps.tolist(),
        "instance_offsets": params.instance_offsets.tolist(),
        "item_labels": [str(x) for x in item_labels],
        "instance_labels": [str(x) for x in instance_labels],
    }
    if posteriors is not None:
        doc["posteriors"] = {
            "instance": posteriors.instance_probs.tolist(),
            "item": posteriors.item_probs.tolist(),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> LoadedModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version!r}")
    kind = doc.get("kind")
    if kind == "vector":
        params = VectorCrbmParameters(
            visible_bias=np.array(doc["visible_bias"], dtype=float),
            factor_bias=np.array(doc["factor_bias"], dtype=float),
            weights=np.array(doc["weights"], dtype=float).reshape(
                doc["n_visible"], doc["n_factors"]
            ),
            utility_std=np.array(doc["utility_std"], dtype=float),
            scales=[_scale_from_record(r) for r in doc["scales"]],
        )
        return LoadedModel(kind="vector", params=params, item_labels=doc["item_labels"])
    if kind == "matrix":
        n_items = doc["n_items"]
        n_instances = doc["n_instances"]
        params = MatrixCrbmParameters(
            item_bias=np.array(doc["item_bias"], dtype=float),
            instance_bias=np.array(doc["instance_bias"], dtype=float),
            instance_factor_bias=np.array(doc["instance_factor_bias"], dtype=float),
            item_factor_bias=np.array(doc["item_factor_bias"], dtype=float),
            item_weights=np.array(doc["item_weights"], dtype=float).reshape(
                n_items, doc["n_instance_factors"]
            ),
            instance_weights=np.array(doc["instance_weights"], dtype=float).reshape(
                n_instances, doc["n_item_factors"]
            ),
            utility_std=float(doc["utility_std"]),
            item_base=np.array(doc["item_base"], dtype=float),
            item_log_gaps=np.array(doc["item_log_gaps"], dtype=float).reshape(
                n_items, doc["levels"] - 2
            ),
            instance_offsets=np.array(doc["instance_offsets"], dtype=float).reshape(
                n_instances, doc["levels"] - 1
            ),
            levels=doc["levels"],
        )
        posteriors = None
        if "posteriors" in doc:
            posteriors = PosteriorTables(
                instance_probs=np.array(doc["posteriors"]["instance"], dtype=float).reshape(
                    n_instances, doc["n_instance_factors"]
                ),
                item_probs=np.array(doc["posteriors"]["item"], dtype=float).reshape(
                    n_items, doc["n_item_factors"]
                ),
            )
        return LoadedModel(
            kind="matrix",
            params=params,
            item_labels=doc["item_labels"],
            instance_labels=doc["instance_labels"],
            posteriors=posteriors,
        )
    raise ValueError(f"unknown model kind: {kind!r}")
