"""Scalar losses L(z, y) with first derivatives in the prediction z."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("sla", "logloss", "mse")


@dataclass(frozen=True)
class Loss:
    """A pointwise loss. ``sigma`` is the SLA temperature and is ignored otherwise.

    * ``sla``: ``1 - sigmoid((2y - 1) z / sigma)``, a smoothed 0-1 loss.
    * ``logloss``: ``-y log sigmoid(z) - (1 - y) log(1 - sigmoid(z))``.
    * ``mse``: ``(z - y)^2 / 2``.

    ``value`` and ``derivative`` are vectorized and do not validate ``y``;
    call :meth:`check_targets` once when data enters a trainer or evaluator.
    """

    kind: str
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}, expected one of {KINDS}")
        if self.kind == "sla" and not self.sigma > 0:
            raise ValueError(f"SLA temperature must be positive, got {self.sigma}")

    @property
    def is_classification(self) -> bool:
        return self.kind != "mse"

    def check_targets(self, y) -> None:
        if not self.is_classification:
            return
        y = np.asarray(y)
        if not np.all((y == 0) | (y == 1)):
            bad = y[(y != 0) & (y != 1)].ravel()[0]
            raise ValueError(f"{self.kind} needs targets in {{0, 1}}, found {bad!r}")

    def value(self, z, y):
        z = np.asarray(z, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "sla":
            return expit(-(2.0 * y - 1.0) * z / self.sigma)
        if self.kind == "logloss":
            return np.logaddexp(0.0, z) - y * z
        return 0.5 * (z - y) ** 2

    def derivative(self, z, y):
        z = np.asarray(z, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "sla":
            sign = 2.0 * y - 1.0
            m = sign * z / self.sigma
            return -(sign / self.sigma) * expit(m) * expit(-m)
        if self.kind == "logloss":
            return expit(z) - y
        return z - y

    def gradient_bound(self) -> float:
        if self.kind == "sla":
            return 1.0 / (4.0 * self.sigma)
        if self.kind == "logloss":
            return 1.0
        return float("inf")


def loss_value(l: Loss, z: float, y: float) -> float:
    l.check_targets(y)
    return float(l.value(z, y))


def loss_gradient(l: Loss, z: float, y: float) -> float:
    l.check_targets(y)
    return float(l.derivative(z, y))


def batch_gradient(l: Loss, F, Y, subsample: float = 1.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-example gradients, optionally Bernoulli-subsampled.

    With ``subsample < 1`` each coordinate is kept with probability ``subsample``
    and divided by it, otherwise zeroed, so the estimate stays unbiased.
    No 1/N factor is applied.
    """
    F = np.asarray(F, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if F.shape != Y.shape:
        raise ValueError(f"length mismatch: predictions {F.shape} vs targets {Y.shape}")
    if not 0.0 < subsample <= 1.0:
        raise ValueError(f"subsample rate must lie in (0, 1], got {subsample}")
    g = l.derivative(F, Y)
    if subsample < 1.0:
        if rng is None:
            raise ValueError("subsampling needs a random generator")
        keep = rng.random(g.shape[0]) < subsample
        g = np.where(keep, g / subsample, 0.0)
    return g


def zero_one_loss(F, Y) -> float:
    """Error rate; a prediction of exactly zero counts as an error."""
    F = np.asarray(F, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if F.shape != Y.shape:
        raise ValueError(f"length mismatch: predictions {F.shape} vs targets {Y.shape}")
    if F.size == 0:
        raise ValueError("zero_one_loss of an empty vector")
    return float(1.0 - np.mean((2.0 * Y - 1.0) * F > 0))
