"""Tabular data loading, quantile borders, quantization and the synthetic generator.

Split convention used everywhere in the package: a split ``(feature j, border b)``
is the predicate ``x_j <= borders[j][b]``. A value's bin is the number of borders
strictly below it, so the predicate is equivalent to ``bin_j <= b``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class DataError(ValueError):
    """Malformed input data (bad CSV, wrong shapes, non-finite values)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = _frozen(self.features)
        y = _frozen(self.targets)
        if x.ndim != 2:
            raise DataError(f"features must be a 2-d matrix, got shape {x.shape}")
        n, k = x.shape
        if n < 1 or k < 1:
            raise DataError(f"dataset needs at least one row and one feature, got {x.shape}")
        if y.shape != (n,):
            raise DataError(f"targets length {y.shape} does not match {n} rows")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain NaN or Inf")
        if not np.all(np.isfinite(y)):
            raise DataError("targets contain NaN or Inf")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> Dataset:
        return Dataset(self.features[rows], self.targets[rows], self.feature_names)

    def same_as(self, other: Dataset) -> bool:
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
        )


@dataclass(frozen=True, eq=False)
class BorderSet:
    """Per-feature strictly increasing split thresholds."""

    borders: tuple[np.ndarray, ...]

    def __post_init__(self):
        fixed = []
        for j, b in enumerate(self.borders):
            b = _frozen(np.asarray(b, dtype=np.float64).reshape(-1))
            if b.size and not np.all(np.diff(b) > 0):
                raise DataError(f"borders of feature {j} are not strictly increasing")
            if not np.all(np.isfinite(b)):
                raise DataError(f"borders of feature {j} are not finite")
            fixed.append(b)
        object.__setattr__(self, "borders", tuple(fixed))

    def __len__(self) -> int:
        return len(self.borders)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.borders[j]

    @property
    def counts(self) -> list[int]:
        return [b.size for b in self.borders]

    def to_lists(self) -> list[list[float]]:
        return [[float(v) for v in b] for b in self.borders]

    def same_as(self, other: BorderSet) -> bool:
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.borders, other.borders)
        )


@dataclass(frozen=True, eq=False)
class QuantizedDataset:
    bins: np.ndarray
    borders: BorderSet
    targets: np.ndarray

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.int32, copy=True)
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "targets", _frozen(self.targets))

    @property
    def n_rows(self) -> int:
        return self.bins.shape[0]

    @property
    def n_features(self) -> int:
        return self.bins.shape[1]


def _parse_float(cell: str, line: int, column: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {line}, column {column + 1}: non-numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {line}, column {column + 1}: non-finite value {cell!r}")
    return value


def load_csv(
    path: Union[str, Path],
    target_column: Union[str, int, None] = "y",
    has_header: bool = True,
) -> Dataset:
    """Read a comma-separated numeric table.

    ``target_column`` is a header name or a 0-based column index. ``None``
    loads every column as a feature and sets all targets to zero, which is
    what prediction-only inputs need. Row numbers in error messages are
    1-based file line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    lines = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not lines:
        raise DataError(f"{path}: empty file")

    header = None
    if has_header:
        header = [c.strip() for c in lines[0][1]]
        lines = lines[1:]
        if not lines:
            raise DataError(f"{path}: header but no data rows")
    width = len(header) if header is not None else len(lines[0][1])

    if target_column is None:
        t_idx = None
    elif isinstance(target_column, int) or (
        isinstance(target_column, str) and header is None and target_column.lstrip("-").isdigit()
    ):
        t_idx = int(target_column)
        if t_idx < 0:
            t_idx += width
        if not 0 <= t_idx < width:
            raise DataError(f"{path}: target column index {target_column} out of range")
    else:
        if header is None:
            raise DataError(f"{path}: target column {target_column!r} given by name but file has no header")
        if target_column not in header:
            raise DataError(f"{path}: missing target column {target_column!r}")
        t_idx = header.index(target_column)

    values = np.empty((len(lines), width), dtype=np.float64)
    for r, (line, cells) in enumerate(lines):
        if len(cells) != width:
            raise DataError(f"row {line}: expected {width} columns, found {len(cells)}")
        for c, cell in enumerate(cells):
            values[r, c] = _parse_float(cell.strip(), line, c)

    keep = [c for c in range(width) if c != t_idx]
    if not keep:
        raise DataError(f"{path}: no feature columns besides the target")
    names = tuple(header[c] for c in keep) if header is not None else None
    targets = values[:, t_idx] if t_idx is not None else np.zeros(len(lines))
    return Dataset(values[:, keep], targets, names)


def save_csv(d: Dataset, path: Union[str, Path], target_name: str = "y") -> None:
    """Write features then target, using repr so floats survive a reload exactly."""
    names = d.feature_names or tuple(f"x{j + 1}" for j in range(d.n_features))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, target_name])
        for row, y in zip(d.features.tolist(), d.targets.tolist()):
            w.writerow([repr(v) for v in row] + [repr(y)])


def _midpoint(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    # adjacent doubles: keep lo so that ``hi <= mid`` can never hold
    return mid if lo <= mid < hi else lo


def feature_borders(values: np.ndarray, border_count: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    distinct, counts = np.unique(values, return_counts=True)
    if distinct.size < 2:
        return np.empty(0)
    # cumulative[i] = number of values <= distinct[i]; a cut after distinct[i]
    cumulative = np.cumsum(counts)[:-1]
    n = values.size
    chosen = set()
    for j in range(1, border_count + 1):
        target = j * n / (border_count + 1)
        chosen.add(int(np.argmin(np.abs(cumulative - target))))
    return np.array([_midpoint(distinct[i], distinct[i + 1]) for i in sorted(chosen)])


def compute_borders(d: Dataset, border_count: int) -> BorderSet:
    if border_count < 1:
        raise ValueError(f"border_count must be >= 1, got {border_count}")
    return BorderSet(tuple(feature_borders(d.features[:, j], border_count) for j in range(d.n_features)))


def quantize_matrix(features: np.ndarray, b: BorderSet) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != len(b):
        raise DataError(
            f"feature count mismatch: data has shape {features.shape}, borders cover {len(b)} features"
        )
    bins = np.empty(features.shape, dtype=np.int32)
    for j in range(features.shape[1]):
        bins[:, j] = np.searchsorted(b[j], features[:, j], side="left")
    return bins


def quantize(d: Dataset, b: BorderSet) -> QuantizedDataset:
    return QuantizedDataset(quantize_matrix(d.features, b), b, d.targets)


def generate_synthetic(n: int, seed: int) -> Dataset:
    """Three standard-normal features; label is 1{N(sin(x1 x2 x3), 1) > 0}."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    latent = np.sin(x[:, 0] * x[:, 1] * x[:, 2]) + rng.standard_normal(n)
    return Dataset(x, (latent > 0).astype(np.float64), ("x1", "x2", "x3"))


def is_binary(y: Sequence[float]) -> bool:
    y = np.asarray(y)
    return bool(np.all((y == 0) | (y == 1)))
