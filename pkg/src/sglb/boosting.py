"""Training loops for GB, SGB and SGLB over oblivious trees, plus ensemble prediction."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .data import BorderSet, Dataset, QuantizedDataset, is_binary
from .losses import Loss, batch_gradient, zero_one_loss
from .trees import (
    ObliviousTree,
    SelectionParams,
    assign_leaves,
    build_structure,
    estimate_leaves,
    tree_leaf_index,
)

log = logging.getLogger(__name__)

MODES = ("gb", "sgb", "sglb")


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``beta`` may be ``inf``, which switches the Langevin noise off while
    keeping the SGLB code path (and its random draws) intact.
    """

    mode: str = "sglb"
    learning_rate: float = 0.1
    beta: float = 1e3
    gamma: float = 1e-3
    random_strength: float = 0.0
    depth: int = 6
    border_count: int = 64
    iterations: int = 1000
    subsample: float = 1.0
    loss: Loss = field(default_factory=lambda: Loss("sla", 0.1))
    seed: int = 0
    use_best_model: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.gamma * self.learning_rate >= 1:
            raise ConfigError("gamma * learning_rate must be < 1")
        if not self.random_strength >= 0:
            raise ConfigError(f"random_strength must be >= 0, got {self.random_strength}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.border_count < 1:
            raise ConfigError(f"border_count must be >= 1, got {self.border_count}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not 0 < self.subsample <= 1:
            raise ConfigError(f"subsample must lie in (0, 1], got {self.subsample}")
        if self.mode == "gb" and self.subsample != 1:
            raise ConfigError("mode gb does not subsample; use sgb")

    @property
    def shrink(self) -> float:
        return 1.0 - self.gamma * self.learning_rate if self.mode == "sglb" else 1.0

    def noise_scale(self, n: int) -> float:
        """sqrt(2N / (learning_rate * beta)); zero outside SGLB."""
        if self.mode != "sglb":
            return 0.0
        return math.sqrt(2.0 * n / (self.learning_rate * self.beta))

    def metadata(self) -> dict:
        d = asdict(self)
        d["loss"] = {"kind": self.loss.kind, "sigma": self.loss.sigma}
        return d


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``bias + sum_t weights[t] * tree_t(x)`` with materialized weights."""

    borders: BorderSet
    trees: tuple[ObliviousTree, ...] = ()
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    bias: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
        w.setflags(write=False)
        if w.size != len(self.trees):
            raise ValueError(f"{len(self.trees)} trees but {w.size} weights")
        for t in self.trees:
            for f, b in t.splits:
                if not (0 <= f < len(self.borders) and 0 <= b < self.borders.counts[f]):
                    raise ValueError(f"split ({f}, {b}) does not reference a valid border")
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "weights", w)

    @property
    def n_features(self) -> int:
        return len(self.borders)

    def predict(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2 or rows.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, got shape {rows.shape}"
            )
        out = np.full(rows.shape[0], self.bias, dtype=np.float64)
        for t, w in zip(self.trees, self.weights):
            out += w * t.leaf_values[tree_leaf_index(t, self.borders, rows)]
        return out


@dataclass
class TrainTrace:
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    noise_scale: float = 0.0
    best_iteration: Optional[int] = None

    @property
    def iterations(self) -> int:
        return len(self.train_loss)


@dataclass
class IterationState:
    """What a training callback sees after each iteration."""

    iteration: int
    gradient: np.ndarray
    zeta: Optional[np.ndarray]
    zeta_prime: Optional[np.ndarray]
    tree: ObliviousTree
    assignment: np.ndarray
    predictions_before: np.ndarray
    predictions: np.ndarray


def _streams(seed: int) -> dict[str, np.random.Generator]:
    # independent streams so that e.g. Langevin draws never shift structure noise
    children = np.random.SeedSequence(seed).spawn(3)
    return {
        "subsample": np.random.default_rng(children[0]),
        "langevin": np.random.default_rng(children[1]),
        "structure": np.random.default_rng(children[2]),
    }


def shrink_weights(shrink: float, n_trees: int) -> np.ndarray:
    """weights[t] = shrink ** (n_trees - 1 - t)."""
    return np.array([shrink ** (n_trees - 1 - t) for t in range(n_trees)], dtype=np.float64)


def train(
    config: TrainConfig,
    train_data: QuantizedDataset,
    valid: Optional[QuantizedDataset] = None,
    callback: Optional[Callable[[IterationState], None]] = None,
) -> tuple[Ensemble, TrainTrace]:
    """Fit an ensemble.

    Per SGLB iteration: per-example gradients g; independent standard normal
    draws zeta, zeta'; structure chosen on ``g + c * zeta'``; leaf values
    ``-lr * leaf_mean(g + c * zeta)`` with ``c = sqrt(2N / (lr * beta))``;
    existing ensemble shrunk by ``1 - gamma * lr``. SGB and GB skip the noise
    and the shrinkage. Tree weights are never rewritten during training; they
    are materialized once from the shrink factor at the end.
    """
    n = train_data.n_rows
    if n < 1:
        raise ValueError("empty training set")
    loss = config.loss
    loss.check_targets(train_data.targets)
    if valid is not None:
        if not valid.borders.same_as(train_data.borders):
            raise ValueError("validation data must be quantized with the training borders")
        loss.check_targets(valid.targets)

    streams = _streams(config.seed)
    sglb = config.mode == "sglb"
    subsample = 1.0 if config.mode == "gb" else config.subsample
    shrink = config.shrink
    scale = config.noise_scale(n)
    y = np.asarray(train_data.targets)

    trace = TrainTrace(noise_scale=scale)
    trees: list[ObliviousTree] = []
    F = np.zeros(n)
    V = np.zeros(valid.n_rows) if valid is not None else None
    best = (math.inf, -1)
    start = time.perf_counter()

    for it in range(config.iterations):
        g = batch_gradient(loss, F, y, subsample, streams["subsample"])
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(it, "gradient")
        zeta = zeta_prime = None
        structure_target = value_target = g
        if sglb:
            zeta = streams["langevin"].standard_normal(n)
            zeta_prime = streams["langevin"].standard_normal(n)
            structure_target = g + scale * zeta_prime
            value_target = g + scale * zeta

        sel = SelectionParams(config.random_strength, it, config.learning_rate, streams["structure"])
        splits = build_structure(structure_target, train_data, config.depth, sel)
        assignment = assign_leaves(splits, train_data)
        values = -config.learning_rate * estimate_leaves(value_target, assignment, 1 << len(splits))
        tree = ObliviousTree(splits, values)
        trees.append(tree)

        before = F
        F = shrink * F + values[assignment] if sglb else F + values[assignment]
        train_loss = float(np.mean(loss.value(F, y)))
        if not math.isfinite(train_loss):
            raise TrainingDiverged(it, "loss")
        trace.train_loss.append(train_loss)
        if V is not None:
            leaf_v = assign_leaves(splits, valid)
            V = shrink * V + values[leaf_v] if sglb else V + values[leaf_v]
            vl = float(np.mean(loss.value(V, valid.targets)))
            trace.valid_loss.append(vl)
            if vl < best[0]:
                best = (vl, it)
        trace.elapsed.append(time.perf_counter() - start)
        if callback is not None:
            callback(IterationState(it, g, zeta, zeta_prime, tree, assignment, before, F))

    if config.use_best_model and valid is not None and best[1] >= 0:
        trace.best_iteration = best[1]
        trees = trees[: best[1] + 1]
        log.info("use_best_model: keeping %d of %d trees", len(trees), config.iterations)

    meta = config.metadata()
    meta["iterations_completed"] = trace.iterations
    meta["train_size"] = n
    ensemble = Ensemble(train_data.borders, tuple(trees), shrink_weights(shrink, len(trees)), 0.0, meta)
    return ensemble, trace


def predict(e: Ensemble, rows) -> np.ndarray:
    return e.predict(rows)


def evaluate(e: Ensemble, data: Dataset, loss: Loss) -> tuple[float, float]:
    """Mean loss and 0-1 error (NaN for non-binary targets)."""
    loss.check_targets(data.targets)
    F = e.predict(data.features)
    mean_loss = float(np.mean(loss.value(F, data.targets)))
    zo = zero_one_loss(F, data.targets) if is_binary(data.targets) else float("nan")
    return mean_loss, zo
