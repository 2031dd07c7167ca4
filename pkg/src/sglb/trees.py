"""Oblivious decision trees: structure search, leaf assignment and leaf fitting.

A tree of depth D uses one split per level. The leaf index of a row is the
binary code of its split outcomes, level 0 being the least significant bit,
with bit value 1 when the predicate ``x_j <= border`` holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import BorderSet, QuantizedDataset

Split = tuple[int, int]


@dataclass(frozen=True, eq=False)
class ObliviousTree:
    splits: tuple[Split, ...]
    leaf_values: np.ndarray

    def __post_init__(self):
        splits = tuple((int(f), int(b)) for f, b in self.splits)
        values = np.array(self.leaf_values, dtype=np.float64, copy=True).reshape(-1)
        values.setflags(write=False)
        if not splits:
            raise ValueError("a tree needs at least one split")
        if values.size != 2 ** len(splits):
            raise ValueError(
                f"depth {len(splits)} tree needs {2 ** len(splits)} leaf values, got {values.size}"
            )
        object.__setattr__(self, "splits", splits)
        object.__setattr__(self, "leaf_values", values)

    @property
    def depth(self) -> int:
        return len(self.splits)

    @property
    def n_leaves(self) -> int:
        return self.leaf_values.size


@dataclass
class SelectionParams:
    """Split-score randomization.

    Each candidate score gets Gaussian noise with standard deviation
    ``random_strength * std(g) / (1 + N ** (learning_rate * iteration))``.
    """

    random_strength: float = 0.0
    iteration: int = 0
    learning_rate: float = 0.1
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def noise_std(self, g: np.ndarray) -> float:
        if self.random_strength == 0:
            return 0.0
        n = g.shape[0]
        decay = 1.0 + float(n) ** (self.learning_rate * self.iteration)
        return self.random_strength * float(np.std(g)) / decay


def _check_assignment(assignment: np.ndarray, n_leaves: int | None) -> int:
    if assignment.size and assignment.min() < 0:
        raise ValueError("negative leaf index")
    top = int(assignment.max()) + 1 if assignment.size else 1
    if n_leaves is None:
        return top
    if top > n_leaves:
        raise ValueError(f"leaf index {top - 1} out of range for {n_leaves} leaves")
    return n_leaves


def score_partition(g, assignment, n_leaves: int | None = None) -> float:
    """``sqrt(sum over leaves of (sum of g in leaf)^2 / leaf size)``; empty leaves add 0."""
    g = np.asarray(g, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    m = _check_assignment(assignment, n_leaves)
    sums = np.bincount(assignment, weights=g, minlength=m)
    counts = np.bincount(assignment, minlength=m)
    nonempty = counts > 0
    return float(np.sqrt(np.sum(sums[nonempty] ** 2 / counts[nonempty])))


def _split_scores(g: np.ndarray, leaf: np.ndarray, n_leaves: int, bins: np.ndarray, n_borders: int) -> np.ndarray:
    """Scores of every border of one feature refining the current partition."""
    width = n_borders + 1
    idx = leaf * width + bins
    sums = np.bincount(idx, weights=g, minlength=n_leaves * width).reshape(n_leaves, width)
    counts = np.bincount(idx, minlength=n_leaves * width).reshape(n_leaves, width)
    # predicate true for border b  <=>  bin <= b
    left_s = np.cumsum(sums, axis=1)[:, :n_borders]
    left_n = np.cumsum(counts, axis=1)[:, :n_borders]
    right_s = sums.sum(axis=1, keepdims=True) - left_s
    right_n = counts.sum(axis=1, keepdims=True) - left_n
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(left_n > 0, left_s**2 / np.maximum(left_n, 1), 0.0)
        right = np.where(right_n > 0, right_s**2 / np.maximum(right_n, 1), 0.0)
    return np.sqrt((left + right).sum(axis=0))


def build_structure(g, q: QuantizedDataset, depth: int, sel: SelectionParams) -> tuple[Split, ...]:
    """Greedy level-wise split selection with noisy scores.

    At each level every unused ``(feature, border)`` candidate is scored on
    the refined partition, noise is drawn in candidate order (feature-major,
    then border), and the highest perturbed score wins. Ties go to the
    lowest candidate. Stops early if candidates run out.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (q.n_rows,):
        raise ValueError(f"gradient length {g.shape} does not match {q.n_rows} rows")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    counts = q.borders.counts
    candidates = [(j, b) for j, m in enumerate(counts) for b in range(m)]
    if not candidates:
        raise ValueError("no candidate splits: every feature is constant")

    std = sel.noise_std(g)
    leaf = np.zeros(q.n_rows, dtype=np.int64)
    used: set[Split] = set()
    splits: list[Split] = []
    for level in range(depth):
        n_leaves = 1 << level
        scores = np.concatenate(
            [_split_scores(g, leaf, n_leaves, q.bins[:, j], m) for j, m in enumerate(counts) if m]
        )
        available = np.array([c not in used for c in candidates])
        if not available.any():
            break
        scores = scores[available]
        if sel.random_strength > 0:
            scores = scores + std * sel.rng.standard_normal(scores.size)
        pick = int(np.argmax(scores))
        chosen = [c for c, ok in zip(candidates, available) if ok][pick]
        splits.append(chosen)
        used.add(chosen)
        f, b = chosen
        leaf = leaf + ((q.bins[:, f] <= b).astype(np.int64) << level)
    return tuple(splits)


def assign_leaves(splits: Sequence[Split], q) -> np.ndarray:
    """Leaf index per row; ``q`` is a QuantizedDataset or a raw bin matrix."""
    bins = q.bins if isinstance(q, QuantizedDataset) else np.asarray(q)
    n, k = bins.shape
    leaf = np.zeros(n, dtype=np.int64)
    for level, (f, b) in enumerate(splits):
        if not 0 <= f < k:
            raise ValueError(f"split feature {f} out of range for {k} features")
        if isinstance(q, QuantizedDataset) and not 0 <= b < q.borders.counts[f]:
            raise ValueError(f"split border {b} out of range for feature {f}")
        leaf += (bins[:, f] <= b).astype(np.int64) << level
    return leaf


def estimate_leaves(target, assignment, n_leaves: int) -> np.ndarray:
    """Per-leaf mean of ``target``; empty leaves get 0 (the minimum-norm fit)."""
    target = np.asarray(target, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    _check_assignment(assignment, n_leaves)
    sums = np.bincount(assignment, weights=target, minlength=n_leaves)
    counts = np.bincount(assignment, minlength=n_leaves)
    out = np.zeros(n_leaves)
    nonempty = counts > 0
    out[nonempty] = sums[nonempty] / counts[nonempty]
    return out


def leaf_projector(assignment) -> np.ndarray:
    """Dense N x N averaging matrix: ``P[i, j] = 1{leaf i == leaf j} / |leaf i|``."""
    assignment = np.asarray(assignment, dtype=np.int64)
    same = assignment[:, None] == assignment[None, :]
    sizes = same.sum(axis=1)
    return same / sizes[:, None]


def tree_leaf_index(t: ObliviousTree, borders: BorderSet, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != len(borders):
        raise ValueError(f"expected rows with {len(borders)} features, got shape {rows.shape}")
    leaf = np.zeros(rows.shape[0], dtype=np.int64)
    for level, (f, b) in enumerate(t.splits):
        leaf += (rows[:, f] <= borders[f][b]).astype(np.int64) << level
    return leaf


def apply_tree(t: ObliviousTree, borders: BorderSet, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(borders),):
        raise ValueError(f"expected a row of {len(borders)} features, got shape {x.shape}")
    return float(t.leaf_values[tree_leaf_index(t, borders, x[None, :])[0]])
