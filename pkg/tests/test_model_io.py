import json

import numpy as np
import pytest

from sglb.boosting import Ensemble, TrainConfig, train
from sglb.data import BorderSet, compute_borders, generate_synthetic, quantize
from sglb.model_io import ModelFormatError, dumps_model, load_model, loads_model, save_model
from sglb.trees import ObliviousTree, apply_tree


@pytest.fixture(scope="module")
def trained():
    d = generate_synthetic(500, 21)
    q = quantize(d, compute_borders(d, 16))
    model, _ = train(TrainConfig(depth=3, iterations=100, random_strength=0.5, seed=2), q)
    return model


def test_empty_ensemble_round_trip(tmp_path):
    e = Ensemble(BorderSet((np.array([0.0]), np.array([]))), (), np.array([]), 0.0, {})
    save_model(e, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.predict(np.ones((3, 2))).tolist() == [0.0, 0.0, 0.0]


def test_predictions_bit_identical(tmp_path, trained):
    path = tmp_path / "m.json"
    save_model(trained, path)
    back = load_model(path)
    rows = np.random.default_rng(0).normal(size=(1000, 3)) * 2
    assert np.array_equal(back.predict(rows), trained.predict(rows))
    # stored weights are the shrink factors, not all ones
    assert not np.all(back.weights == 1.0)
    assert np.array_equal(back.weights, trained.weights)


def test_reserialization_is_byte_identical(tmp_path, trained):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(trained, a)
    save_model(load_model(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_version_mismatch_rejected(trained):
    obj = json.loads(dumps_model(trained))
    obj["format_version"] = 99
    with pytest.raises(ModelFormatError, match="format_version"):
        loads_model(json.dumps(obj))


def minimal_model(**tree):
    t = {"splits": [[0, 0]], "leaf_values": [0.0, 1.0], "weight": 1.0}
    t.update(tree)
    return {"format_version": 1, "borders": [[0.5]], "bias": 0.0, "trees": [t], "metadata": {}}


def test_hand_written_model():
    e = loads_model(json.dumps(minimal_model()))
    t = ObliviousTree(((0, 0),), np.array([0.0, 1.0]))
    rows = np.array([[0.0], [1.0], [0.5]])
    assert e.predict(rows).tolist() == [apply_tree(t, e.borders, r) for r in rows] == [1.0, 0.0, 1.0]


@pytest.mark.parametrize(
    "tree, match",
    [
        (dict(splits=[[0, 0], [0, 0]], leaf_values=[0.0, 1.0, 2.0]), "needs 4 leaf values"),
        (dict(splits=[[0, 3]]), "border"),
        (dict(splits=[["a", 0]]), "integer pairs"),
        (dict(weight="1"), "wrong type"),
    ],
)
def test_structural_errors(tree, match):
    with pytest.raises(ModelFormatError, match=match):
        loads_model(json.dumps(minimal_model(**tree)))


def test_not_json():
    with pytest.raises(ModelFormatError, match="JSON"):
        loads_model("{broken")


def test_infinite_beta_is_stored_as_null(tmp_path):
    d = generate_synthetic(40, 1)
    q = quantize(d, compute_borders(d, 4))
    model, _ = train(TrainConfig(beta=float("inf"), gamma=0.0, depth=1, iterations=3), q)
    text = dumps_model(model)
    assert '"beta":null' in text
    assert loads_model(text).metadata["beta"] is None
