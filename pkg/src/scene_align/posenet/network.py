"""Network assembly, forward pass, and the per-category softmax loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import LRN, Conv2D, Dropout, GlobalAvgPool, MaxPool2D, ReLU


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    n_filters: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class ReluSpec:
    pass


@dataclass(frozen=True)
class MaxPoolSpec:
    kernel: int
    stride: int


@dataclass(frozen=True)
class LRNSpec:
    n: int = 5
    alpha: float = 1e-4
    beta: float = 0.75
    kappa: float = 2.0


@dataclass(frozen=True)
class DropoutSpec:
    rate: float


@dataclass(frozen=True)
class GlobalAvgPoolSpec:
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer descriptors plus the category/bin layout of the output.

    The final conv must emit (n_posebin + 1) * n_class channels: per
    category, n_posebin azimuth bins plus one background bin.
    """

    layers: tuple
    n_posebin: int = 8
    n_class: int = 1
    in_channels: int = 3
    input_side: int = 227

    def __post_init__(self):
        convs = [l for l in self.layers if isinstance(l, ConvSpec)]
        if not convs:
            raise ValueError("network needs at least one conv layer")
        want = (self.n_posebin + 1) * self.n_class
        if convs[-1].n_filters != want:
            raise ValueError(
                f"final conv must have (n_posebin+1)*n_class = {want} filters, got {convs[-1].n_filters}"
            )

    @property
    def slice_width(self) -> int:
        return self.n_posebin + 1


def default_network_spec(n_posebin: int = 8, n_class: int = 1, input_side: int = 227) -> NetworkSpec:
    """The stock architecture: two conv/pool stages and a conv classifier head."""
    return NetworkSpec(
        layers=(
            ConvSpec(7, 96, 4, 0),
            ReluSpec(),
            MaxPoolSpec(3, 2),
            DropoutSpec(0.5),
            LRNSpec(),
            ConvSpec(5, 128, 2, 2),
            ReluSpec(),
            MaxPoolSpec(3, 2),
            LRNSpec(),
            ConvSpec(3, (n_posebin + 1) * n_class, 1, 1),
            ReluSpec(),
            GlobalAvgPoolSpec(),
        ),
        n_posebin=n_posebin,
        n_class=n_class,
        input_side=input_side,
    )


def tiny_network_spec(n_posebin: int = 8, n_class: int = 1, input_side: int = 12) -> NetworkSpec:
    """Small two-conv net used for gradient checks and overfit sanity runs."""
    return NetworkSpec(
        layers=(
            ConvSpec(3, 4, 1, 1),
            ReluSpec(),
            MaxPoolSpec(2, 2),
            LRNSpec(n=3),
            DropoutSpec(0.5),
            ConvSpec(3, (n_posebin + 1) * n_class, 1, 1),
            ReluSpec(),
            GlobalAvgPoolSpec(),
        ),
        n_posebin=n_posebin,
        n_class=n_class,
        input_side=input_side,
    )


class Network:
    """Instantiated layers with parameter storage, forward and backward."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.layers = []
        in_ch = spec.in_channels
        counts: dict[str, int] = {}

        def tag(base):
            counts[base] = counts.get(base, 0) + 1
            return f"{base}{counts[base]}"

        for ls in spec.layers:
            if isinstance(ls, ConvSpec):
                self.layers.append(Conv2D(tag("conv"), in_ch, ls.n_filters, ls.kernel, ls.stride, ls.pad))
                in_ch = ls.n_filters
            elif isinstance(ls, ReluSpec):
                self.layers.append(ReLU(tag("relu")))
            elif isinstance(ls, MaxPoolSpec):
                self.layers.append(MaxPool2D(tag("pool"), ls.kernel, ls.stride))
            elif isinstance(ls, LRNSpec):
                self.layers.append(LRN(tag("norm"), ls.n, ls.alpha, ls.beta, ls.kappa))
            elif isinstance(ls, DropoutSpec):
                self.layers.append(Dropout(tag("drop"), ls.rate))
            elif isinstance(ls, GlobalAvgPoolSpec):
                self.layers.append(GlobalAvgPool(tag("gap")))
            else:
                raise ValueError(f"unknown layer spec: {ls!r}")

    def init_params(self, rng, std=0.01):
        for layer in self.layers:
            if isinstance(layer, Conv2D):
                layer.init_params(rng, std)

    def get_weights(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update({k: v.copy() for k, v in layer.params().items()})
        return out

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for layer in self.layers:
            for name in layer.params():
                if name not in weights:
                    raise KeyError(f"missing weight array: {name}")
            if isinstance(layer, Conv2D):
                w = np.asarray(weights[f"{layer.name}.weight"], dtype=np.float64)
                b = np.asarray(weights[f"{layer.name}.bias"], dtype=np.float64)
                if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                    raise ValueError(f"shape mismatch for {layer.name}")
                layer.weight = w.copy()
                layer.bias = b.copy()

    def forward(self, x: np.ndarray, train: bool = False, rng=None, dropout_masks=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ValueError("batch must have shape (n, c, h, w)")
        if x.shape[2] != self.spec.input_side or x.shape[3] != self.spec.input_side:
            raise ValueError(
                f"input spatial size {x.shape[2]}x{x.shape[3]} does not match configured side {self.spec.input_side}"
            )
        drop_i = 0
        for layer in self.layers:
            if isinstance(layer, Dropout):
                mask = dropout_masks[drop_i] if dropout_masks is not None else None
                drop_i += 1
                x = layer.forward(x, train=train, rng=rng, mask=mask)
            else:
                x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update(layer.grads())
        return out


def category_slices(logits: np.ndarray, category_ids: np.ndarray, slice_width: int) -> np.ndarray:
    """Per-example (n, slice_width) logits of each example's own category."""
    n = logits.shape[0]
    cat = np.asarray(category_ids, dtype=np.int64)
    if cat.min() < 0 or ((cat + 1) * slice_width > logits.shape[1]).any():
        raise ValueError("category id out of range")
    idx = cat[:, None] * slice_width + np.arange(slice_width)[None, :]
    return logits[np.arange(n)[:, None], idx]


def softmax_loss(
    logits: np.ndarray, labels: np.ndarray, category_ids: np.ndarray, slice_width: int
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over each example's category slice.

    Returns the scalar loss and its gradient w.r.t. the full logit array
    (zero outside each example's slice).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if (labels < 0).any() or (labels >= slice_width).any():
        raise ValueError("label outside the category slice")
    n = logits.shape[0]
    sl = category_slices(logits, category_ids, slice_width)
    shifted = sl - sl.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels])))

    d_slice = probs.copy()
    d_slice[np.arange(n), labels] -= 1.0
    d_slice /= n
    dlogits = np.zeros_like(logits)
    cat = np.asarray(category_ids, dtype=np.int64)
    idx = cat[:, None] * slice_width + np.arange(slice_width)[None, :]
    dlogits[np.arange(n)[:, None], idx] = d_slice
    return loss, dlogits


def forward(spec: NetworkSpec, weights: dict, batch: np.ndarray, train_mode: bool = False, rng=None) -> np.ndarray:
    """Functional forward pass: deterministic when train_mode is off."""
    net = Network(spec)
    net.set_weights(weights)
    return net.forward(batch, train=train_mode, rng=rng)


def loss_and_grad(
    spec: NetworkSpec,
    weights: dict,
    batch: np.ndarray,
    labels: np.ndarray,
    category_ids: np.ndarray,
    train_mode: bool = False,
    rng=None,
    dropout_masks=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss plus exact weight gradients for the whole computation graph."""
    net = Network(spec)
    net.set_weights(weights)
    logits = net.forward(batch, train=train_mode, rng=rng, dropout_masks=dropout_masks)
    loss, dlogits = softmax_loss(logits, labels, category_ids, spec.slice_width)
    net.backward(dlogits)
    return loss, net.grads()
