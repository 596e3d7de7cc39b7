"""Minimal hand-rolled neural core: dense + LSTM layers, Adam, gradient checking.

Everything is float64 numpy with analytically derived backward passes; a
central-finite-difference checker guards the derivations.
"""

from .layers import DenseLayer, LSTMCell
from .networks import QNetwork, RecurrentQNetwork
from .optim import Adam, SGD, q_loss
from .gradcheck import max_relative_error

__all__ = [
    "DenseLayer",
    "LSTMCell",
    "QNetwork",
    "RecurrentQNetwork",
    "Adam",
    "SGD",
    "q_loss",
    "max_relative_error",
]
