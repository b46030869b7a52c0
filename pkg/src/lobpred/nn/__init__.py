"""Small float64 reverse-mode engine and the CNN-LSTM classifiers built on it."""

from .model import (
    ArchitectureSpec,
    ConvSpec,
    DenseSpec,
    DropoutSpec,
    InceptionSpec,
    LSTMSpec,
    Model,
    PoolSpec,
    build_model,
    deeplob_full,
    infer_shapes,
    level1,
    predict,
    preset,
    slim,
)
from .tensor import NonFiniteActivation, NonFiniteGradient, ShapeMismatch, Tensor
from .training import Adam, TrainConfig, TrainResult, train

__all__ = [
    "Adam", "ArchitectureSpec", "ConvSpec", "DenseSpec", "DropoutSpec", "InceptionSpec",
    "LSTMSpec", "Model", "NonFiniteActivation", "NonFiniteGradient", "PoolSpec",
    "ShapeMismatch", "Tensor", "TrainConfig", "TrainResult", "build_model", "deeplob_full",
    "infer_shapes", "level1", "predict", "preset", "slim", "train",
]
