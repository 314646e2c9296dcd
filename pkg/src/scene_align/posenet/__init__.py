"""Coarse azimuth classification on normal-image crops."""

from .network import (  # noqa: F401
    ConvSpec,
    DropoutSpec,
    GlobalAvgPoolSpec,
    LRNSpec,
    MaxPoolSpec,
    Network,
    NetworkSpec,
    ReluSpec,
    default_network_spec,
    forward,
    loss_and_grad,
    tiny_network_spec,
)
from .predict import predict_pose, predicted_yaws  # noqa: F401
from .train import TrainConfig, TrainingDiverged, normalize_crop_bytes, train  # noqa: F401
from .weights_io import load_weights, save_weights  # noqa: F401
