"""Denoising networks: dense single-layer, convolutional, and fusion."""

from .common import TrainConfig, TrainingDivergence
from .dense import DenseDenoiser, dense_train
from .cnn import CnnDenoiser, cnn_train
from .fusion import FusionDenoiser, fusion_init, fusion_train

__all__ = [
    "TrainConfig", "TrainingDivergence",
    "DenseDenoiser", "dense_train",
    "CnnDenoiser", "cnn_train",
    "FusionDenoiser", "fusion_init", "fusion_train",
]
