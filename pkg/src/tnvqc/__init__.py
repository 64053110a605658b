"""Tensor-train exponential machines vs. variational quantum classifiers on
the UCI car-evaluation data."""
from .errors import InvalidInputError, TrainingDivergedError
from .tt import TtTensor, frobenius_norm, orthogonalize, tt_add, tt_inner, tt_round, tt_scale, tt_svd, tt_to_dense

__all__ = [
    "InvalidInputError", "TrainingDivergedError", "TtTensor", "frobenius_norm", "orthogonalize",
    "tt_add", "tt_inner", "tt_round", "tt_scale", "tt_svd", "tt_to_dense",
]
__version__ = "0.1.0"
