"""Cross-validated comparison of boosting variants on the synthetic 0-1 task."""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .boosting import TrainConfig, train
from .data import compute_borders, generate_synthetic, quantize
from .losses import Loss, zero_one_loss

REFERENCE = "SLA+SGLB"


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return regularized_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> float:
    """Two-sided paired t-test p-value.

    Degenerate differences: all equal and zero gives 1, all equal and nonzero gives 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    if np.all(d == d[0]):
        return 1.0 if d[0] == 0 else 0.0
    mean = float(d.mean())
    se = float(d.std(ddof=1)) / math.sqrt(n)
    return t_two_sided_p(mean / se, n - 1)


def synthetic_methods(iterations: int = 1000) -> dict[str, TrainConfig]:
    """The four loss/method combinations of the synthetic study."""
    common = dict(learning_rate=0.1, depth=1, border_count=5, iterations=iterations)
    sla = Loss("sla", 0.1)
    return {
        "Logloss+GB": TrainConfig(mode="gb", loss=Loss("logloss"), **common),
        "SLA+GB": TrainConfig(mode="gb", loss=sla, **common),
        "SLA+SGB": TrainConfig(mode="sgb", loss=sla, subsample=0.5, **common),
        "SLA+SGLB": TrainConfig(mode="sglb", loss=sla, beta=1e3, gamma=1e-3, **common),
    }


@dataclass
class ExperimentSpec:
    folds: int = 20
    train_size: int = 1000
    test_size: int = 1000
    methods: dict[str, TrainConfig] = field(default_factory=synthetic_methods)
    seed: int = 0
    reference: str = REFERENCE

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.train_size < 1 or self.test_size < 1:
            raise ValueError("train and test sizes must be >= 1")
        if not self.methods:
            raise ValueError("no methods configured")

    def fold_seed(self, fold: int) -> int:
        return self.seed * 10007 + fold


@dataclass
class ExperimentResult:
    losses: dict[str, list[float]]
    reference: str
    seconds: float = 0.0

    @property
    def means(self) -> dict[str, float]:
        return {m: float(np.mean(v)) for m, v in self.losses.items()}

    @property
    def p_values(self) -> dict[str, Optional[float]]:
        ref = self.losses.get(self.reference)
        out: dict[str, Optional[float]] = {}
        for m, v in self.losses.items():
            out[m] = None if ref is None or m == self.reference else paired_t_test(v, ref)
        return out

    def records(self) -> list[dict]:
        p = self.p_values
        means = self.means
        return [
            {"method": m, "mean_zero_one": means[m], "p_value_vs_reference": p[m],
             "reference": self.reference, "fold_losses": v}
            for m, v in self.losses.items()
        ]

    def table(self) -> str:
        p = self.p_values
        width = max(len("method"), *(len(m) for m in self.losses))
        lines = [f"{'method':<{width}}  0-1 loss  p-value vs {self.reference}"]
        for m, mean in self.means.items():
            pv = "---" if p[m] is None else f"{p[m]:.3g}"
            lines.append(f"{m:<{width}}  {mean:8.4f}  {pv}")
        return "\n".join(lines)


class ExperimentFailure(RuntimeError):
    pass


def run_fold(spec: ExperimentSpec, fold: int) -> dict[str, float]:
    seed = spec.fold_seed(fold)
    data = generate_synthetic(spec.train_size + spec.test_size, seed)
    train_d = data.subset(slice(0, spec.train_size))
    test_d = data.subset(slice(spec.train_size, None))
    quantized = {}
    out = {}
    for name, cfg in spec.methods.items():
        if cfg.border_count not in quantized:
            quantized[cfg.border_count] = quantize(train_d, compute_borders(train_d, cfg.border_count))
        try:
            model, _ = train(dataclasses.replace(cfg, seed=seed), quantized[cfg.border_count])
        except Exception as exc:
            raise ExperimentFailure(f"fold {fold}, method {name}: {exc}") from exc
        out[name] = zero_one_loss(model.predict(test_d.features), test_d.targets)
    return out


def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: Optional[Callable[[int, dict[str, float]], None]] = None,
) -> ExperimentResult:
    """Train every method on every fold and collect test 0-1 losses.

    Folds are independent; with ``workers > 1`` they run in worker processes
    and results are still gathered in fold order.
    """
    start = time.perf_counter()
    folds = range(spec.folds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_fold = list(pool.map(run_fold, [spec] * spec.folds, folds))
    else:
        per_fold = []
        for f in folds:
            per_fold.append(run_fold(spec, f))
            if progress is not None:
                progress(f, per_fold[-1])
    losses = {m: [r[m] for r in per_fold] for m in spec.methods}
    return ExperimentResult(losses, spec.reference, time.perf_counter() - start)
