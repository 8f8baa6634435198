"""Sparse linear classifiers trained directly on multivariate measures.

Feature groups of a fixed budget ``B`` are generated greedily by an outer
loop; an inner cutting-plane loop fits group weights for the chosen loss.
"""

from .contingency import ContingencyTable, LossKind, LossSpec, loss_value
from .data_io import (DataError, DegenerateDataError, FeatureGroup, MulticlassDataset, SparseDataset,
                      SparseVector, SvmlightParseError, as_binary, binarize, load_svmlight,
                      parse_svmlight)
from .label_oracle import most_violated_y
from .metrics import evaluate
from .model import TrainedModel, groupwise_score, load, loads, predict_scores, save, dumps, train
from .outer_groups import most_violated_group, run_two_layer
from .qcqp import QcqpInput, QcqpSolution, solve as solve_qcqp

__version__ = "0.1.0"

__all__ = [
    "ContingencyTable", "LossKind", "LossSpec", "loss_value",
    "DataError", "DegenerateDataError", "FeatureGroup", "MulticlassDataset", "SparseDataset",
    "SparseVector", "SvmlightParseError", "as_binary", "binarize", "load_svmlight", "parse_svmlight",
    "most_violated_y", "evaluate", "TrainedModel", "groupwise_score", "load", "loads",
    "predict_scores", "save", "dumps", "train", "most_violated_group", "run_two_layer",
    "QcqpInput", "QcqpSolution", "solve_qcqp",
]
