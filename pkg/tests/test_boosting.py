import math

import numpy as np
import pytest

from sglb.boosting import ConfigError, Ensemble, TrainConfig, TrainingDiverged, evaluate, predict, shrink_weights, train
from sglb.data import BorderSet, Dataset, compute_borders, generate_synthetic, quantize
from sglb.losses import Loss
from sglb.trees import ObliviousTree, apply_tree, leaf_projector


def synth_q(n=200, seed=0, border_count=8):
    d = generate_synthetic(n, seed)
    return quantize(d, compute_borders(d, border_count)), d


def regression_q(n=60, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = x[:, 0] - 2 * x[:, 1] + rng.normal(0, 0.1, n)
    d = Dataset(x, y)
    return quantize(d, compute_borders(d, 8)), d


def test_noise_scale():
    assert TrainConfig(learning_rate=0.1, beta=1000).noise_scale(1000) == pytest.approx(math.sqrt(20), abs=1e-12)
    assert TrainConfig(mode="gb").noise_scale(1000) == 0.0
    assert TrainConfig(beta=math.inf).noise_scale(1000) == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(learning_rate=0),
        dict(learning_rate=-1),
        dict(beta=0),
        dict(gamma=-1),
        dict(gamma=10, learning_rate=0.1),
        dict(depth=0),
        dict(border_count=0),
        dict(subsample=0),
        dict(mode="gb", subsample=0.5),
        dict(mode="dart"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_synthetic_study_configuration_runs_to_completion():
    q, _ = synth_q(1000, 1, border_count=5)
    cfg = TrainConfig(mode="sglb", learning_rate=0.1, beta=1e3, gamma=1e-3, depth=1, border_count=5,
                      iterations=1000, loss=Loss("sla", 0.1))
    model, trace = train(cfg, q)
    assert len(model.trees) == 1000 and trace.iterations == 1000
    assert model.metadata["iterations_completed"] == 1000


def test_noise_free_sglb_degenerates_to_gb():
    q, _ = synth_q(300, 2)
    common = dict(depth=3, iterations=50, loss=Loss("sla", 0.1), seed=5, random_strength=0.5)
    gb, _ = train(TrainConfig(mode="gb", **common), q)
    sg, _ = train(TrainConfig(mode="sglb", beta=math.inf, gamma=0.0, **common), q)
    assert [t.splits for t in gb.trees] == [t.splits for t in sg.trees]
    assert all(np.array_equal(a.leaf_values, b.leaf_values) for a, b in zip(gb.trees, sg.trees))
    assert np.array_equal(gb.weights, sg.weights)


def test_seeded_determinism():
    q, _ = synth_q(200, 3)
    cfg = TrainConfig(depth=2, iterations=30, random_strength=1.0, subsample=0.7, seed=11)
    a, _ = train(cfg, q)
    b, _ = train(cfg, q)
    assert [t.splits for t in a.trees] == [t.splits for t in b.trees]
    assert all(np.array_equal(x.leaf_values, y.leaf_values) for x, y in zip(a.trees, b.trees))


def test_lazy_weights_match_naive_recomputation():
    q, d = synth_q(300, 4)
    cfg = TrainConfig(learning_rate=0.1, gamma=1e-3, beta=1e3, depth=2, iterations=100)
    model, _ = train(cfg, q)
    naive = np.zeros(d.n_rows)
    for t, tree in enumerate(model.trees):
        naive += (1 - 1e-4) ** (99 - t) * np.array([apply_tree(tree, q.borders, x) for x in d.features])
    assert np.max(np.abs(model.predict(d.features) - naive)) <= 1e-9
    assert np.array_equal(model.weights, shrink_weights(1 - 1e-4, 100))


def test_shrink_weights_are_exact_powers():
    w = shrink_weights(0.99, 5)
    assert w.tolist() == [0.99**4, 0.99**3, 0.99**2, 0.99, 1.0]


def test_incremental_predictions_match_full_evaluation():
    q, d = synth_q(250, 5)
    states = []
    cfg = TrainConfig(depth=3, iterations=40, subsample=0.8)
    model, _ = train(cfg, q, callback=lambda s: states.append(s.predictions.copy()))
    assert np.max(np.abs(states[-1] - model.predict(d.features))) <= 1e-9


def test_sgld_correspondence():
    q, _ = synth_q(30, 6, border_count=4)
    cfg = TrainConfig(mode="sglb", learning_rate=0.05, beta=50.0, gamma=0.2, depth=2, iterations=20)
    c = cfg.noise_scale(q.n_rows)
    checked = []

    def check(s):
        P = leaf_projector(s.assignment)
        expected = (1 - cfg.gamma * cfg.learning_rate) * s.predictions_before - cfg.learning_rate * P @ (
            s.gradient + c * s.zeta
        )
        checked.append(np.max(np.abs(expected - s.predictions)))

    train(cfg, q, callback=check)
    assert len(checked) == 20 and max(checked) <= 1e-10


def test_gb_mse_loss_is_monotone():
    q, _ = regression_q()
    _, trace = train(TrainConfig(mode="gb", learning_rate=0.05, depth=2, iterations=200, loss=Loss("mse")), q)
    assert np.all(np.diff(trace.train_loss) <= 1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_iteration():
    q, _ = regression_q()
    with pytest.raises(TrainingDiverged) as info:
        # every step overshoots by a factor of two
        train(TrainConfig(mode="gb", learning_rate=3.0, depth=6, border_count=64, iterations=3000,
                          loss=Loss("mse")), q)
    assert 0 < info.value.iteration < 3000


def test_zero_iterations_predicts_zero():
    q, _ = synth_q(10, 7)
    model, _ = train(TrainConfig(iterations=0), q)
    assert np.array_equal(model.predict(np.ones((3, 3))), np.zeros(3))


def test_use_best_model_truncates():
    q, d = synth_q(300, 8)
    v = generate_synthetic(300, 9)
    vq = quantize(v, q.borders)
    model, trace = train(TrainConfig(depth=2, iterations=60, use_best_model=True), q, vq)
    assert len(model.trees) == trace.best_iteration + 1
    assert trace.valid_loss[trace.best_iteration] == min(trace.valid_loss)


def test_validation_needs_training_borders():
    q, _ = synth_q(50, 10)
    other, _ = synth_q(50, 11)
    with pytest.raises(ValueError, match="borders"):
        train(TrainConfig(iterations=2), q, other)


def test_predict_examples():
    b = BorderSet((np.array([0.0]),))
    empty = Ensemble(b, (), np.array([]), 0.0, {})
    assert predict(empty, np.ones((4, 1))).tolist() == [0.0] * 4
    t = ObliviousTree(((0, 0),), np.array([1.0, -1.0]))
    single = Ensemble(b, (t,), np.array([1.0]), 0.0, {})
    rows = np.array([[-1.0], [2.0]])
    assert predict(single, rows).tolist() == [apply_tree(t, b, r) for r in rows]
    with pytest.raises(ValueError):
        predict(single, np.ones((2, 2)))


def test_evaluate_examples():
    b = BorderSet((np.array([0.5]),))
    x = np.array([[0.0], [1.0], [0.0], [1.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    sep = Ensemble(b, (ObliviousTree(((0, 0),), np.array([-1.0, 1.0])),), np.array([1.0]), 0.0, {})
    loss, zo = evaluate(sep, Dataset(x, y), Loss("sla", 0.1))
    assert loss < 1e-4 and zo == 0.0
    zero = Ensemble(b, (), np.array([]), 0.0, {})
    loss, zo = evaluate(zero, Dataset(x, y), Loss("logloss"))
    assert loss == pytest.approx(math.log(2)) and zo == 1.0
