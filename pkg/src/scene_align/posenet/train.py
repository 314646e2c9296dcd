"""SGD training loop with named, seeded randomness streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, NetworkSpec, softmax_loss

# substream tags so init / shuffling / dropout draws never interleave
STREAM_INIT = 101
STREAM_SHUFFLE = 102
STREAM_DROPOUT = 103


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    input_side: int = 227

    def __post_init__(self):
        if min(self.batch_size, self.input_side) < 1 or self.epochs < 0:
            raise ValueError("batch_size and input_side must be >= 1, epochs >= 0")
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("optimizer hyperparameters must be non-negative")


def normalize_crop_bytes(channels: np.ndarray) -> np.ndarray:
    """Angle bytes to network input range: (byte - 128) / 128."""
    return (np.asarray(channels, dtype=np.float64) - 128.0) / 128.0


def train(
    spec: NetworkSpec,
    inputs: np.ndarray,
    labels: np.ndarray,
    category_ids: np.ndarray,
    cfg: TrainConfig,
    init_weights: dict | None = None,
) -> tuple[dict, list[tuple[int, float, float]]]:
    """SGD with momentum and weight decay; deterministic for a fixed seed.

    Returns the final weights plus a log of (epoch, mean loss, train top-1),
    with top-1 measured in inference mode after each epoch. Raises
    TrainingDiverged if the loss stops being finite.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    category_ids = np.asarray(category_ids, dtype=np.int64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("training set is empty")

    net = Network(spec)
    if init_weights is not None:
        net.set_weights(init_weights)
    else:
        net.init_params(np.random.default_rng([cfg.seed, STREAM_INIT]))

    shuffle_rng = np.random.default_rng([cfg.seed, STREAM_SHUFFLE])
    dropout_rng = np.random.default_rng([cfg.seed, STREAM_DROPOUT])

    velocity = {k: np.zeros_like(v) for k, v in net.get_weights().items()}
    log: list[tuple[int, float, float]] = []

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            logits = net.forward(inputs[sel], train=True, rng=dropout_rng)
            loss, dlogits = softmax_loss(logits, labels[sel], category_ids[sel], spec.slice_width)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}")
            net.backward(dlogits)
            grads = net.grads()
            for layer in net.layers:
                for name, param in layer.params().items():
                    g = grads[name] + cfg.weight_decay * param
                    velocity[name] = cfg.momentum * velocity[name] - cfg.learning_rate * g
                    param += velocity[name]
            losses.append(loss)
        top1 = evaluate_top1(net, inputs, labels, category_ids)
        log.append((epoch, float(np.mean(losses)), top1))

    return net.get_weights(), log


def evaluate_top1(net: Network, inputs, labels, category_ids, batch_size: int = 64) -> float:
    """Inference-mode top-1 accuracy over the category slices."""
    from .network import category_slices

    n = inputs.shape[0]
    correct = 0
    for start in range(0, n, batch_size):
        sel = slice(start, min(start + batch_size, n))
        logits = net.forward(inputs[sel], train=False)
        sl = category_slices(logits, category_ids[sel], net.spec.slice_width)
        correct += int((sl.argmax(axis=1) == labels[sel]).sum())
    return correct / n
