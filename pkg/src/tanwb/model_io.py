"""JSON serialization for TAN models.

Probabilities are written as decimal strings with 17 significant digits so
that a load/save cycle reproduces every float64 bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ModelError
from .schema import Schema, schema_hash
from .tan import TanModel, TanStructure

FORMAT_NAME = "tanwb-model"
FORMAT_VERSION = 1


def float_repr(x: float) -> str:
    """17-significant-digit decimal form; round-trips float64 exactly."""
    if np.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def _encode_array(arr: np.ndarray):
    if arr.ndim == 1:
        return [float_repr(v) for v in arr]
    return [_encode_array(sub) for sub in arr]


def _decode_array(data) -> np.ndarray:
    return np.array(data, dtype=np.float64)


def model_to_dict(model: TanModel, schema: Schema, task: str,
                  extra: dict | None = None) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "schema_hash": schema_hash(schema),
        "task": task,
        "alpha": float_repr(model.smoothing_alpha),
        "structure": {
            "root": model.structure.root_feature,
            "parents": list(model.structure.feature_parent),
        },
        "class_prior": _encode_array(model.class_prior),
        "cpts": [_encode_array(t) for t in model.cpts],
        "has_undefined_rows": model.has_undefined_rows,
    }
    if extra:
        doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> tuple[TanModel, dict]:
    """Rebuild a model; returns (model, full document) so callers can read
    provenance fields like schema_hash and task."""
    if doc.get("format") != FORMAT_NAME:
        raise ModelError(f"not a {FORMAT_NAME} document")
    structure = TanStructure(
        root_feature=doc["structure"]["root"],
        feature_parent=tuple(
            None if p is None else int(p) for p in doc["structure"]["parents"]
        ),
    )
    model = TanModel(
        structure=structure,
        class_prior=_decode_array(doc["class_prior"]),
        cpts=tuple(_decode_array(t) for t in doc["cpts"]),
        smoothing_alpha=float(doc["alpha"]),
        has_undefined_rows=bool(doc.get("has_undefined_rows", False)),
    )
    return model, doc


def save_model(model: TanModel, schema: Schema, task: str,
               path: Union[str, Path], extra: dict | None = None) -> None:
    doc = model_to_dict(model, schema, task, extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: Union[str, Path]) -> tuple[TanModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_dict(doc)
