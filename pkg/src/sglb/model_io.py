"""Versioned JSON model files.

Canonical form: sorted keys, no whitespace, floats in Python's shortest
round-trip repr. Saving, loading and saving again yields identical bytes.
See docs/model_format.md for the schema.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np

from .boosting import Ensemble
from .data import BorderSet
from .trees import ObliviousTree

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _clean(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null (only beta may be infinite)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _finite(values, what: str) -> list[float]:
    out = [float(v) for v in values]
    if not all(math.isfinite(v) for v in out):
        raise ModelFormatError(f"{what} contains non-finite values")
    return out


def to_dict(e: Ensemble) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "borders": [_finite(b, "borders") for b in e.borders.borders],
        "bias": _finite([e.bias], "bias")[0],
        "trees": [
            {
                "splits": [[f, b] for f, b in t.splits],
                "leaf_values": _finite(t.leaf_values, "leaf values"),
                "weight": _finite([w], "weight")[0],
            }
            for t, w in zip(e.trees, e.weights)
        ],
        "metadata": _clean(e.metadata),
    }


def dumps_model(e: Ensemble) -> str:
    return json.dumps(to_dict(e), sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_model(e: Ensemble, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_model(e) + "\n", encoding="utf-8")


def _require(obj: dict, key: str, kind, where: str = "model"):
    if key not in obj:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ModelFormatError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def from_dict(obj: dict) -> Ensemble:
    if not isinstance(obj, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}; this build reads {FORMAT_VERSION}")
    try:
        borders = BorderSet(tuple(np.array(b, dtype=np.float64) for b in _require(obj, "borders", list)))
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad borders: {exc}") from exc
    trees, weights = [], []
    for i, raw in enumerate(_require(obj, "trees", list)):
        where = f"tree {i}"
        if not isinstance(raw, dict):
            raise ModelFormatError(f"{where}: expected an object")
        splits = _require(raw, "splits", list, where)
        values = _require(raw, "leaf_values", list, where)
        if not splits:
            raise ModelFormatError(f"{where}: no splits")
        if len(values) != 2 ** len(splits):
            raise ModelFormatError(
                f"{where}: depth {len(splits)} needs {2 ** len(splits)} leaf values, found {len(values)}"
            )
        if any(not (isinstance(s, list) and len(s) == 2 and all(type(v) is int for v in s)) for s in splits):
            raise ModelFormatError(f"{where}: splits must be [feature, border] integer pairs")
        trees.append(ObliviousTree(tuple(tuple(s) for s in splits), np.array(values, dtype=np.float64)))
        weights.append(_require(raw, "weight", float, where))
    bias = _require(obj, "bias", float)
    meta = obj.get("metadata", {})
    try:
        return Ensemble(borders, tuple(trees), np.array(weights), bias, dict(meta))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc


def loads_model(text: str) -> Ensemble:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    return from_dict(obj)


def load_model(path: Union[str, Path]) -> Ensemble:
    return loads_model(Path(path).read_text(encoding="utf-8"))
