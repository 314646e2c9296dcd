"""Top-k azimuth-bin inference for a single normal-image crop."""

from __future__ import annotations

import numpy as np

from ..align import bin_center
from ..geometry import NormalImage, crop_and_warp
from .network import Network, NetworkSpec
from .train import normalize_crop_bytes


def crop_to_batch(crop: NormalImage, input_side: int) -> np.ndarray:
    """Resize a crop to the network side and stack channels-first."""
    if crop.width != input_side or crop.height != input_side:
        crop = crop_and_warp(crop, (0, 0, crop.width, crop.height), input_side)
    x = normalize_crop_bytes(crop.channels)
    return x.transpose(2, 0, 1)[None, :, :, :]


def predict_pose(
    spec: NetworkSpec,
    weights: dict,
    crop: NormalImage,
    category_id: int,
    k: int,
) -> list[tuple[int, float]]:
    """Ranked (bin, score) over the category's foreground azimuth bins.

    Scores are the softmax over the n_posebin foreground bins (the
    background bin is excluded); ties rank the lower bin index first. Use
    ``bin_center`` to turn a bin into its yaw.
    """
    if not (1 <= k <= spec.n_posebin):
        raise ValueError("k must be in [1, n_posebin]")
    if not (0 <= category_id < spec.n_class):
        raise ValueError(f"unknown category id: {category_id}")
    net = Network(spec)
    net.set_weights(weights)
    logits = net.forward(crop_to_batch(crop, spec.input_side))[0]
    start = category_id * spec.slice_width
    fg = logits[start : start + spec.n_posebin]
    shifted = fg - fg.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")
    return [(int(b), float(probs[b])) for b in order[:k]]


def predicted_yaws(predictions: list[tuple[int, float]], n_posebin: int) -> list[float]:
    return [bin_center(b, n_posebin) for b, _ in predictions]
