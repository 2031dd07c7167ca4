"""Stochastic gradient Langevin boosting (SGLB) and classic SGB over oblivious trees."""

from .boosting import Ensemble, TrainConfig, TrainTrace, evaluate, predict, train
from .data import (
    BorderSet,
    Dataset,
    QuantizedDataset,
    compute_borders,
    generate_synthetic,
    load_csv,
    quantize,
    save_csv,
)
from .losses import Loss, batch_gradient, loss_gradient, loss_value, zero_one_loss
from .model_io import load_model, save_model
from .trees import ObliviousTree, SelectionParams, apply_tree, assign_leaves, build_structure, estimate_leaves

__version__ = "0.1.0"
