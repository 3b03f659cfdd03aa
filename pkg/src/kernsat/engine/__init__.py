from .functional import ShapeError, softmax, softmax_cross_entropy
from .layers import Conv2D, Dense, ResidualBlock
from .network import Architecture, Network
from .optim import AdamState, NonFiniteGradientError, adam_step
from .training import (LossRecord, ProvenanceError, TrainConfig, TrainingDivergedError,
                       evaluate, train)

__all__ = [
    "AdamState", "Architecture", "Conv2D", "Dense", "LossRecord", "Network",
    "NonFiniteGradientError", "ProvenanceError", "ResidualBlock", "ShapeError",
    "TrainConfig", "TrainingDivergedError", "adam_step", "evaluate", "softmax",
    "softmax_cross_entropy", "train",
]
