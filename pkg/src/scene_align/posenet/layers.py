"""From-scratch CNN layers (NCHW, float64) with exact backward passes.

Every layer caches what its backward pass needs during forward; gradients
are validated against central finite differences in the tests.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """View of all k x k windows at the given stride: (n, c, oh, ow, k, k)."""
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"feature map {h}x{w} too small for a {k}x{k} window: the network's input side is too small"
        )
    sn, sc, sh, sw = x.strides
    return as_strided(x, (n, c, oh, ow, k, k), (sn, sc, sh * stride, sw * stride, sh, sw))


class Conv2D:
    def __init__(self, name, in_channels, out_channels, kernel, stride=1, pad=0):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = np.zeros((out_channels, in_channels, kernel, kernel))
        self.bias = np.zeros(out_channels)
        self.d_weight = np.zeros_like(self.weight)
        self.d_bias = np.zeros_like(self.bias)
        self._cache = None

    def init_params(self, rng, std=0.01):
        self.weight = rng.normal(0.0, std, self.weight.shape)
        self.bias = np.zeros_like(self.bias)

    def forward(self, x, train=False, rng=None):
        if self.pad:
            x = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        win = _windows(x, self.kernel, self.stride)
        out = np.einsum("nchwkl,ockl->nohw", win, self.weight) + self.bias[None, :, None, None]
        self._cache = (win, x.shape)
        return out

    def backward(self, dout):
        win, padded_shape = self._cache
        self.d_bias = dout.sum(axis=(0, 2, 3))
        self.d_weight = np.einsum("nchwkl,nohw->ockl", win, dout)
        dx = np.zeros(padded_shape)
        oh, ow = dout.shape[2], dout.shape[3]
        s = self.stride
        for ki in range(self.kernel):
            for li in range(self.kernel):
                patch = np.einsum("nohw,oc->nchw", dout, self.weight[:, :, ki, li])
                dx[:, :, ki : ki + oh * s : s, li : li + ow * s : s] += patch
        if self.pad:
            dx = dx[:, :, self.pad : -self.pad, self.pad : -self.pad]
        return dx

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def grads(self):
        return {f"{self.name}.weight": self.d_weight, f"{self.name}.bias": self.d_bias}


class ReLU:
    def __init__(self, name="relu"):
        self.name = name
        self._mask = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)

    def params(self):
        return {}

    def grads(self):
        return {}


class MaxPool2D:
    def __init__(self, name, kernel, stride):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self._cache = None

    def forward(self, x, train=False, rng=None):
        win = _windows(x, self.kernel, self.stride)
        n, c, oh, ow = win.shape[:4]
        flat = win.reshape(n, c, oh, ow, -1)
        arg = flat.argmax(axis=-1)  # first maximum wins on ties
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, arg, (n, c, oh, ow))
        return out

    def backward(self, dout):
        x_shape, arg, (n, c, oh, ow) = self._cache
        ki, li = np.divmod(arg, self.kernel)
        ni, ci, oi, oj = np.indices((n, c, oh, ow))
        rows = oi * self.stride + ki
        cols = oj * self.stride + li
        dx = np.zeros(x_shape)
        np.add.at(dx, (ni, ci, rows, cols), dout)
        return dx

    def params(self):
        return {}

    def grads(self):
        return {}


class LRN:
    """Local response normalization across channels.

    y_i = x_i * (kappa + (alpha / n) * sum_{j in window(i)} x_j^2)^(-beta)
    with a channel window of size n centered at i, clipped at the ends.
    """

    def __init__(self, name, n=5, alpha=1e-4, beta=0.75, kappa=2.0):
        self.name = name
        self.n = n
        self.alpha = alpha
        self.beta = beta
        self.kappa = kappa
        self._cache = None

    def _window_sum(self, t):
        c = t.shape[1]
        half = self.n // 2
        pad = np.zeros((t.shape[0], c + 1) + t.shape[2:])
        np.cumsum(t, axis=1, out=pad[:, 1:])
        hi = np.minimum(np.arange(c) + half + 1, c)
        lo = np.maximum(np.arange(c) - half, 0)
        return pad[:, hi] - pad[:, lo]

    def forward(self, x, train=False, rng=None):
        scale = self.kappa + (self.alpha / self.n) * self._window_sum(x * x)
        out = x * scale ** (-self.beta)
        self._cache = (x, scale)
        return out

    def backward(self, dout):
        x, scale = self._cache
        t = dout * x * scale ** (-self.beta - 1.0)
        return dout * scale ** (-self.beta) - (2.0 * self.alpha * self.beta / self.n) * x * self._window_sum(t)

    def params(self):
        return {}

    def grads(self):
        return {}


class Dropout:
    """Inverted dropout; identity in inference mode."""

    def __init__(self, name, rate):
        self.name = name
        self.rate = rate
        self._mask = None

    def forward(self, x, train=False, rng=None, mask=None):
        if not train:
            self._mask = None
            return x
        if mask is None:
            if rng is None:
                raise ValueError("dropout in train mode needs an rng or a mask")
            mask = rng.random(x.shape) >= self.rate
        self._mask = mask
        return x * mask / (1.0 - self.rate)

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask / (1.0 - self.rate)

    def params(self):
        return {}

    def grads(self):
        return {}


class GlobalAvgPool:
    """Average over all remaining spatial positions: (n, c, h, w) -> (n, c)."""

    def __init__(self, name="gap"):
        self.name = name
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None], (n, c, h, w)) / (h * w)

    def params(self):
        return {}

    def grads(self):
        return {}
