"""Independent checks of leaf estimation, projector structure and the SGLB stationary law.

The dense oracles here build the leaf indicator matrix H explicitly and never
call into the fast leaf-averaging code they are meant to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .boosting import IterationState, TrainConfig, train
from .data import BorderSet, QuantizedDataset
from .losses import Loss
from .trees import SelectionParams, assign_leaves, build_structure, leaf_projector

RIDGE = 1e-12
DENSE_LIMIT = 2000
PINF_LIMIT = 200
PROJECTOR_TOL = 1e-10


class DiagnosticsError(ValueError):
    pass


def indicator_matrix(assignment, n_leaves: Optional[int] = None) -> np.ndarray:
    assignment = np.asarray(assignment, dtype=np.int64)
    m = n_leaves if n_leaves is not None else int(assignment.max()) + 1
    H = np.zeros((assignment.size, m))
    H[np.arange(assignment.size), assignment] = 1.0
    return H


def _ridge_solve(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    G = H.T @ H + RIDGE * np.eye(H.shape[1])
    return np.linalg.solve(G, rhs)


def pinv_leaf_oracle(assignment, target, n_leaves: Optional[int] = None) -> np.ndarray:
    """Minimum-norm least squares leaf values as ``(H^T H + d I)^-1 H^T target`` with d = 1e-12."""
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.size > DENSE_LIMIT:
        raise DiagnosticsError(f"dense oracle limited to {DENSE_LIMIT} rows, got {assignment.size}")
    H = indicator_matrix(assignment, n_leaves)
    return _ridge_solve(H, H.T @ np.asarray(target, dtype=np.float64))


@dataclass
class ProjectorReport:
    symmetry_defect: float
    idempotence_defect: float
    image_residual: float

    @property
    def passed(self) -> bool:
        return max(self.symmetry_defect, self.idempotence_defect, self.image_residual) <= PROJECTOR_TOL


def ridge_projector(assignment, n_leaves: Optional[int] = None) -> np.ndarray:
    H = indicator_matrix(assignment, n_leaves)
    return H @ _ridge_solve(H, H.T)


def check_projector(assignment, n_leaves: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> ProjectorReport:
    """Symmetry, idempotence and image defects (max-abs) of ``H (H^T H + d I)^-1 H^T``.

    The image check applies P to ``H theta`` for a random theta supported on
    non-empty leaves.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.size > DENSE_LIMIT:
        raise DiagnosticsError(f"dense projector limited to {DENSE_LIMIT} rows, got {assignment.size}")
    rng = rng or np.random.default_rng(0)
    H = indicator_matrix(assignment, n_leaves)
    P = H @ _ridge_solve(H, H.T)
    theta = rng.standard_normal(H.shape[1])
    v = H @ theta
    return ProjectorReport(
        symmetry_defect=float(np.max(np.abs(P - P.T))),
        idempotence_defect=float(np.max(np.abs(P @ P - P))),
        image_residual=float(np.max(np.abs(P @ v - v))),
    )


@dataclass
class PInfinityEstimate:
    matrix: np.ndarray
    samples: int
    standard_error: np.ndarray
    distinct_structures: int

    def symmetry_z(self) -> float:
        """Largest |P - P^T| in units of the elementwise Monte Carlo standard error."""
        diff = np.abs(self.matrix - self.matrix.T)
        se = np.sqrt(self.standard_error**2 + self.standard_error.T**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / se, np.where(diff > 1e-12, np.inf, 0.0))
        return float(z.max())


def estimate_p_infinity(
    q: QuantizedDataset,
    depth: int,
    samples: int,
    rng: np.random.Generator,
    random_strength: float = 0.0,
    iteration: int = 0,
    learning_rate: float = 0.1,
) -> PInfinityEstimate:
    """``N * E P_s`` over structures sampled at a zero gradient.

    Sampling at g = 0 means the structure sees pure Gaussian noise; by scale
    invariance of the selection any noise variance gives the same law, so
    unit variance is used.
    """
    n = q.n_rows
    if n > PINF_LIMIT:
        raise DiagnosticsError(f"P-infinity estimate limited to {PINF_LIMIT} rows, got {n}")
    if samples < 1:
        raise DiagnosticsError("samples must be >= 1")
    total = np.zeros((n, n))
    total_sq = np.zeros((n, n))
    seen = set()
    for it in range(samples):
        z = rng.standard_normal(n)
        sel = SelectionParams(random_strength, iteration, learning_rate, rng)
        splits = build_structure(z, q, depth, sel)
        seen.add(splits)
        P = leaf_projector(assign_leaves(splits, q))
        total += P
        total_sq += P * P
    mean = total / samples
    var = np.maximum(total_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / samples) * n
    return PInfinityEstimate(n * mean, samples, se, len(seen))


def isolating_dataset(targets: Sequence[float]) -> QuantizedDataset:
    """Binary-coded features: row i has feature j = bit j of i, one border at 0.5 each.

    Any tree using all ``ceil(log2 N)`` splits puts every row in its own leaf.
    """
    y = np.asarray(targets, dtype=np.float64)
    n = y.size
    k = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    bits = ((np.arange(n)[:, None] >> np.arange(k)[None, :]) & 1).astype(np.int32)
    borders = BorderSet(tuple(np.array([0.5]) for _ in range(k)))
    # bin = number of borders strictly below the value: 0 for value 0, 1 for value 1
    return QuantizedDataset(bits, borders, y)


def sglb_isolated_chain(
    targets: np.ndarray,
    beta: float,
    gamma: float,
    learning_rate: float,
    zeta: np.ndarray,
    start: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Train predictions of SGLB with MSE loss when every tree isolates every row.

    Then the leaf-averaging projector is the identity and one iteration is
    ``F <- (1 - gamma*lr) F - lr * (F - Y + sqrt(2N / (lr*beta)) * zeta)``,
    a linear recursion evaluated here with a single IIR filter pass.
    ``zeta`` has shape (iterations, N); row t holds the leaf-value noise of
    iteration t. Returns predictions after each iteration.
    """
    y = np.asarray(targets, dtype=np.float64)
    n = y.size
    scale = math.sqrt(2.0 * n / (learning_rate * beta))
    a = 1.0 - (1.0 + gamma) * learning_rate
    drive = learning_rate * y[None, :] - learning_rate * scale * zeta
    f0 = np.zeros(n) if start is None else np.asarray(start, dtype=np.float64)
    out, _ = lfilter([1.0], [1.0, -a], drive, axis=0, zi=(a * f0)[None, :])
    return out


@dataclass
class StationaryReport:
    empirical_mean: list[float]
    empirical_variance: list[float]
    analytic_mean: list[float]
    analytic_variance: float
    mean_z: list[float]
    variance_ratio: list[float]
    effective_samples: float
    trainer_crosscheck_error: Optional[float]
    discrete_variance: float = float("nan")
    mean_tolerance: float = 4.0
    variance_band: tuple[float, float] = (0.8, 1.25)

    @property
    def mean_passed(self) -> bool:
        return all(abs(z) <= self.mean_tolerance for z in self.mean_z)

    @property
    def variance_passed(self) -> bool:
        lo, hi = self.variance_band
        return all(lo <= r <= hi for r in self.variance_ratio)

    @property
    def passed(self) -> bool:
        cross_ok = self.trainer_crosscheck_error is None or self.trainer_crosscheck_error <= 1e-9
        return self.mean_passed and self.variance_passed and cross_ok

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(mean_passed=self.mean_passed, variance_passed=self.variance_passed, passed=self.passed)
        return d


def _trainer_crosscheck(q: QuantizedDataset, beta: float, gamma: float, learning_rate: float, steps: int, seed: int) -> float:
    """Run the real trainer for a few iterations and replay its noise through the recursion."""
    n = q.n_rows
    depth = q.n_features
    cfg = TrainConfig(
        mode="sglb", learning_rate=learning_rate, beta=beta, gamma=gamma, depth=depth,
        border_count=1, iterations=steps, loss=Loss("mse"), seed=seed,
    )
    zetas, preds = [], []

    def record(state: IterationState) -> None:
        if np.unique(state.assignment).size != n:
            raise DiagnosticsError("sampled tree does not isolate every row")
        zetas.append(state.zeta.copy())
        preds.append(state.predictions.copy())

    train(cfg, q, callback=record)
    replay = sglb_isolated_chain(q.targets, beta, gamma, learning_rate, np.array(zetas))
    return float(np.max(np.abs(replay - np.array(preds))))


def gibbs_moment_test(
    targets: Sequence[float],
    beta: float,
    gamma: float,
    learning_rate: float,
    iterations: int,
    burn_in: int,
    rng: np.random.Generator,
    depth: Optional[int] = None,
    crosscheck_steps: int = 200,
) -> StationaryReport:
    """Compare SGLB's long-run train predictions with the analytic Gaussian stationary law.

    With MSE loss and every row in its own leaf the chain is a discretized
    Ornstein-Uhlenbeck process, ``dF = -gamma F dt - (F - Y) dt + sqrt(2N/beta) dW``,
    whose stationary law is ``N(Y / (1 + gamma), N / (beta (1 + gamma)) I)``.
    Standard errors of the mean use the effective sample size implied by the
    chain's lag-one autocorrelation ``1 - (1 + gamma) lr``.
    """
    y = np.asarray(targets, dtype=np.float64)
    n = y.size
    if burn_in >= iterations:
        raise DiagnosticsError(f"burn_in ({burn_in}) must be smaller than iterations ({iterations})")
    q = isolating_dataset(y)
    needed = q.n_features
    if depth is not None and depth < needed:
        raise DiagnosticsError(f"depth {depth} cannot isolate {n} rows; need depth >= {needed}")
    if np.unique(q.bins, axis=0).shape[0] != n:
        raise DiagnosticsError("rows are not separable by the available splits")
    a = 1.0 - (1.0 + gamma) * learning_rate
    if not abs(a) < 1:
        raise DiagnosticsError(f"unstable discretization: |1 - (1 + gamma) lr| = {abs(a)} >= 1")

    seed = int(rng.integers(2**31))
    cross = None
    # the trainer rejects gamma * lr >= 1 (shrink factor would not be positive)
    if crosscheck_steps and gamma * learning_rate < 1:
        cross = _trainer_crosscheck(q, beta, gamma, learning_rate, crosscheck_steps, seed)

    zeta = rng.standard_normal((iterations, n))
    chain = sglb_isolated_chain(y, beta, gamma, learning_rate, zeta)[burn_in:]
    m = chain.shape[0]
    mean = chain.mean(axis=0)
    var = chain.var(axis=0)
    ess = m * (1.0 - a) / (1.0 + a)
    target_mean = y / (1.0 + gamma)
    target_var = n / (beta * (1.0 + gamma))
    z = (mean - target_mean) / np.sqrt(var / ess)
    return StationaryReport(
        empirical_mean=mean.tolist(),
        empirical_variance=var.tolist(),
        analytic_mean=target_mean.tolist(),
        analytic_variance=target_var,
        mean_z=z.tolist(),
        variance_ratio=(var / target_var).tolist(),
        effective_samples=float(ess),
        trainer_crosscheck_error=cross,
        # exact stationary variance of the discrete chain, for reference only
        discrete_variance=2.0 * n * learning_rate / beta / (1.0 - a * a),
    )


@dataclass
class ConsistencyReport:
    learning_rates: list[float]
    variance_error: list[float]
    improved_steps: int
    required_steps: int = 2

    @property
    def passed(self) -> bool:
        return self.improved_steps >= self.required_steps


def discretization_consistency(
    targets: Sequence[float],
    beta: float,
    gamma: float,
    learning_rates: Sequence[float] = (8e-3, 4e-3, 2e-3, 1e-3),
    horizon: float = 2000.0,
    burn_in_time: float = 100.0,
    rng: Optional[np.random.Generator] = None,
) -> ConsistencyReport:
    """Does shrinking the learning rate move the stationary variance toward the analytic one?

    Each learning rate runs ``horizon / lr`` iterations. The sampling error of
    the empirical variance is removed with a control variate: an exact OU
    transition driven by the same normals, whose variance error is pure
    Monte Carlo noise. The corrected estimate is
    ``var_chain - (var_exact - v)`` for analytic variance v, and the reported
    error is its mean relative deviation from v over coordinates. The Euler
    chain's mean is exact for a linear drift, so only the variance is compared.
    """
    rng = rng or np.random.default_rng(0)
    y = np.asarray(targets, dtype=np.float64)
    n = y.size
    k = 1.0 + gamma
    mu = y / k
    v = n / (beta * k)
    errors = []
    for lr in learning_rates:
        steps = int(round(horizon / lr))
        burn = int(round(burn_in_time / lr))
        zeta = rng.standard_normal((steps, n))
        euler = sglb_isolated_chain(y, beta, gamma, lr, zeta)[burn:]
        decay = math.exp(-k * lr)
        exact_sd = math.sqrt(v * (1.0 - decay**2))
        drive = (1.0 - decay) * mu[None, :] - exact_sd * zeta
        exact, _ = lfilter([1.0], [1.0, -decay], drive, axis=0, zi=np.zeros((1, n)))
        exact = exact[burn:]
        corrected = euler.var(axis=0) - (exact.var(axis=0) - v)
        errors.append(float(np.mean(np.abs(corrected - v) / v)))
    improved = sum(1 for a, b in zip(errors, errors[1:]) if b < a)
    return ConsistencyReport(list(learning_rates), errors, improved)
