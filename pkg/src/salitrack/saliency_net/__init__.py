"""Trainable toy fully-convolutional saliency network."""

from .checkpoint import load, save
from .estimator import SaliencyNetwork
from .layers import conv_forward, max_pool, transposed_conv
from .model import (
    NetworkParams,
    ScorePair,
    Topology,
    backward,
    forward,
    init_params,
    loss_and_grad,
    preprocess,
    sgd_step,
    train,
    weighted_bce_loss,
)

__all__ = [
    "NetworkParams",
    "SaliencyNetwork",
    "ScorePair",
    "Topology",
    "backward",
    "conv_forward",
    "forward",
    "init_params",
    "load",
    "loss_and_grad",
    "max_pool",
    "preprocess",
    "save",
    "sgd_step",
    "train",
    "transposed_conv",
    "weighted_bce_loss",
]
