"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from sglb.boosting import TrainConfig, train
from sglb.data import Dataset, compute_borders, generate_synthetic, quantize
from sglb.diagnostics import check_projector, discretization_consistency, gibbs_moment_test, pinv_leaf_oracle
from sglb.experiments import ExperimentSpec, run_experiment
from sglb.losses import Loss
from sglb.model_io import dumps_model, load_model, loads_model, save_model
from sglb.trees import SelectionParams, apply_tree, build_structure, estimate_leaves

pytestmark = pytest.mark.acceptance

REFERENCE_MEANS = {"Logloss+GB": 0.482, "SLA+GB": 0.475, "SLA+SGB": 0.474, "SLA+SGLB": 0.470}
ORDER = ["SLA+SGLB", "SLA+SGB", "SLA+GB", "Logloss+GB"]


@pytest.mark.slow
def test_criterion_1_synthetic_study(acceptance_line):
    start = time.perf_counter()
    result = run_experiment(ExperimentSpec(folds=20, train_size=1000, test_size=1000, seed=0))
    seconds = time.perf_counter() - start
    means = result.means
    ordered = all(means[a] <= means[b] for a, b in zip(ORDER, ORDER[1:]))
    p_worst = result.p_values["Logloss+GB"]
    significant = means["SLA+SGLB"] < means["Logloss+GB"] and p_worst < 0.05
    close = {m: abs(means[m] - REFERENCE_MEANS[m]) <= 0.015 for m in REFERENCE_MEANS}
    passed = ordered and significant and all(close.values()) and seconds <= 1800
    detail = (
        "means " + ", ".join(f"{m}={means[m]:.4f}" for m in ORDER)
        + f"; ordered={ordered}; p(Logloss+GB vs SLA+SGLB)={p_worst:.2g}"
        + f"; outside +-0.015: {[m for m, ok in close.items() if not ok]}; {seconds:.0f}s"
    )
    acceptance_line(1, passed, detail)
    assert passed, detail


def test_criterion_2_pseudo_inverse_and_projector(acceptance_line):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst_pinv = worst_proj = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 201))
        leaves = 2 ** int(rng.integers(0, 5))
        a = rng.integers(0, leaves, n)
        t = rng.standard_normal(n)
        worst_pinv = max(worst_pinv, float(np.max(np.abs(estimate_leaves(t, a, leaves) - pinv_leaf_oracle(a, t, leaves)))))
        rep = check_projector(a, leaves, rng)
        worst_proj = max(worst_proj, rep.symmetry_defect, rep.idempotence_defect)
    seconds = time.perf_counter() - start
    passed = worst_pinv <= 1e-10 and worst_proj <= 1e-10 and seconds <= 60
    detail = f"max leaf error {worst_pinv:.2e}, max projector defect {worst_proj:.2e}, {seconds:.1f}s"
    acceptance_line(2, passed, detail)
    assert passed, detail


def test_criterion_3_gibbs_stationarity(acceptance_line):
    start = time.perf_counter()
    rep = gibbs_moment_test([1, -1, 2, 0], beta=100, gamma=0.5, learning_rate=1e-3, iterations=2_000_000,
                            burn_in=100_000, rng=np.random.default_rng(3))
    con = discretization_consistency([1, -1, 2, 0], beta=100, gamma=0.5, rng=np.random.default_rng(4))
    seconds = time.perf_counter() - start
    passed = rep.passed and con.improved_steps >= 2 and seconds <= 300
    detail = (
        f"max |z| {max(map(abs, rep.mean_z)):.2f}, variance ratios "
        f"[{min(rep.variance_ratio):.3f}, {max(rep.variance_ratio):.3f}], "
        f"improved steps {con.improved_steps}/3, {seconds:.1f}s"
    )
    acceptance_line(3, passed, detail)
    assert passed, detail


def test_criterion_4_homogeneity(acceptance_line):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(120, 5))
    d = Dataset(x, np.zeros(120))
    q = quantize(d, compute_borders(d, 8))
    total = matched = 0
    for trial in range(100):
        g = rng.normal(size=120) * rng.uniform(0.01, 10)
        base = build_structure(g, q, 6, SelectionParams(1.0, 2, 0.1, np.random.default_rng(trial)))
        for lam in (0.1, 1.0, 7.0, 100.0):
            other = build_structure(lam * g, q, 6, SelectionParams(1.0, 2, 0.1, np.random.default_rng(trial)))
            total += 1
            matched += other == base
    passed = matched == total
    acceptance_line(4, passed, f"{matched}/{total} split sequences identical")
    assert passed


def test_criterion_5_gradient_checks(acceptance_line):
    rng = np.random.default_rng(6)
    h = 1e-5
    failures = {}
    for loss in (Loss("sla", 0.1), Loss("logloss"), Loss("mse")):
        z = rng.uniform(-10, 10, 1000)
        y = rng.integers(0, 2, 1000).astype(float)
        dz = loss.derivative(z, y)
        fd = (loss.value(z + h, y) - loss.value(z - h, y)) / (2 * h)
        failures[loss.kind] = int(np.sum(np.abs(dz - fd) > 1e-6 * (1 + np.abs(dz))))
    passed = not any(failures.values())
    acceptance_line(5, passed, f"points outside tolerance per loss: {failures}")
    assert passed


def test_criterion_6_shrinkage_and_round_trip(acceptance_line, tmp_path):
    d = generate_synthetic(300, 6)
    q = quantize(d, compute_borders(d, 16))
    cfg = TrainConfig(mode="sglb", learning_rate=0.1, gamma=1e-3, beta=1e3, depth=2, iterations=1000)
    model, _ = train(cfg, q)
    naive = np.zeros(d.n_rows)
    shrink = 1 - cfg.gamma * cfg.learning_rate
    for t, tree in enumerate(model.trees):
        naive += shrink ** (999 - t) * np.array([apply_tree(tree, q.borders, row) for row in d.features])
    lazy_err = float(np.max(np.abs(model.predict(d.features) - naive)))

    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(model, a)
    reloaded = load_model(a)
    rows = np.random.default_rng(7).normal(size=(1000, 3))
    exact = np.array_equal(reloaded.predict(rows), model.predict(rows))
    save_model(reloaded, b)
    same_bytes = a.read_bytes() == b.read_bytes()
    passed = lazy_err <= 1e-9 and exact and same_bytes
    detail = f"lazy vs naive {lazy_err:.2e}, reload exact={exact}, bytes identical={same_bytes}"
    acceptance_line(6, passed, detail)
    assert passed, detail


def test_criterion_7_degeneration(acceptance_line):
    d = generate_synthetic(500, 8)
    q = quantize(d, compute_borders(d, 16))
    common = dict(depth=4, iterations=200, random_strength=1.0, seed=9, loss=Loss("sla", 0.1))
    gb, _ = train(TrainConfig(mode="gb", **common), q)
    sg, _ = train(TrainConfig(mode="sglb", beta=math.inf, gamma=0.0, **common), q)
    gb_doc, sg_doc = json.loads(dumps_model(gb)), json.loads(dumps_model(sg))
    passed = gb_doc["trees"] == sg_doc["trees"] and np.array_equal(gb.predict(d.features), sg.predict(d.features))
    acceptance_line(7, passed, "trees, weights and predictions bit-identical" if passed else "ensembles differ")
    assert passed
