"""Small convolutional completion network with hand-written backprop.

Layout (all 3x3 convolutions, zero "same" padding)::

    conv(C_in -> 16) lrelu
    conv(16 -> 32, stride 2) lrelu
    conv(32 -> 32) lrelu
    2x nearest upsample
    conv(32 -> 16) lrelu
    conv(16 -> 1)

Inputs are ``(B, C_in, N_y, N_x)`` with even ``N_y`` and ``N_x``; outputs
are ``(B, N_y, N_x)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import QuantizedGrid
from .base import GridEstimator

LAYOUT = ((16, 1), (32, 2), (32, 1), (16, 1), (1, 1))
UPSAMPLE_AT = 3
NEG_SLOPE = 0.2
MAGIC = b"RMEW1"


@dataclass
class NetworkWeights:
    kernels: list
    biases: list

    @property
    def input_channels(self) -> int:
        return self.kernels[0].shape[1]

    @classmethod
    def init(cls, input_channels: int, rng: np.random.Generator) -> "NetworkWeights":
        """Uniform fan-in initialization, zero biases."""
        kernels, biases = [], []
        c_in = input_channels
        for c_out, _ in LAYOUT:
            bound = 1.0 / np.sqrt(9 * c_in)
            kernels.append(rng.uniform(-bound, bound, (c_out, c_in, 3, 3)))
            biases.append(np.zeros(c_out))
            c_in = c_out
        return cls(kernels, biases)

    @classmethod
    def zeros(cls, input_channels: int) -> "NetworkWeights":
        w = cls.init(input_channels, np.random.default_rng(0))
        return cls([np.zeros_like(k) for k in w.kernels], [np.zeros_like(b) for b in w.biases])

    def params(self) -> list:
        out = []
        for k, b in zip(self.kernels, self.biases):
            out += [k, b]
        return out

    def copy(self) -> "NetworkWeights":
        return NetworkWeights([k.copy() for k in self.kernels], [b.copy() for b in self.biases])

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def to_bytes(self) -> bytes:
        """``RMEW1``, u32 layer count, per layer u32 ``(c_out, c_in, kh, kw)``,
        then per layer the f64 kernel (row-major) followed by its f64 bias,
        all little-endian."""
        parts = [MAGIC, struct.pack("<I", len(self.kernels))]
        for k in self.kernels:
            parts.append(struct.pack("<4I", *k.shape))
        for k, b in zip(self.kernels, self.biases):
            parts.append(np.ascontiguousarray(k, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "NetworkWeights":
        if data[:5] != MAGIC:
            raise ValueError("not an RMEW1 weight file")
        (n_layers,) = struct.unpack_from("<I", data, 5)
        pos = 9
        shapes = []
        for _ in range(n_layers):
            shapes.append(struct.unpack_from("<4I", data, pos))
            pos += 16
        kernels, biases = [], []
        for shape in shapes:
            n = int(np.prod(shape))
            kernels.append(np.frombuffer(data, "<f8", n, pos).reshape(shape).astype(float))
            pos += 8 * n
            biases.append(np.frombuffer(data, "<f8", shape[0], pos).astype(float))
            pos += 8 * shape[0]
        if pos != len(data):
            raise ValueError("trailing bytes in weight file")
        return cls(kernels, biases)


def _conv_forward(x, w, b, stride):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * 9)
    out = cols @ w.reshape(len(w), -1).T + b
    return out.reshape(n, ho, wo, len(w)).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, w, stride):
    n, c, h, wd = x_shape
    ho, wo = dout.shape[2:]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, len(w))
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(len(w), -1)).reshape(n, ho, wo, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += dcols[..., di, dj].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _lrelu(z):
    return np.where(z > 0, z, NEG_SLOPE * z)


def _check_input(x, weights):
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != weights.input_channels:
        raise ValueError(f"expected input (B, {weights.input_channels}, H, W), got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError("grid dimensions must be even")
    return x


def network_forward(x, weights: NetworkWeights, return_cache=False):
    """Forward pass; ``x`` is ``(B, C, H, W)`` or a single ``(C, H, W)`` tensor."""
    a = _check_input(x, weights)
    cache = []
    n_layers = len(weights.kernels)
    for idx, (w, b) in enumerate(zip(weights.kernels, weights.biases)):
        if idx == UPSAMPLE_AT:
            a = a.repeat(2, axis=2).repeat(2, axis=3)
        z, cols = _conv_forward(a, w, b, LAYOUT[idx][1])
        cache.append((a.shape, cols, z))
        a = _lrelu(z) if idx < n_layers - 1 else z
    out = a[:, 0]
    return (out, cache) if return_cache else out


def network_backward(dout, cache, weights: NetworkWeights):
    """Gradients of a scalar loss w.r.t. every kernel and bias given
    ``dout = dL/d(output)`` of shape ``(B, H, W)``.

    Returns lists ``(dkernels, dbiases)`` aligned with ``weights``.
    """
    n_layers = len(weights.kernels)
    g = np.asarray(dout, dtype=float)[:, None]
    dks, dbs = [None] * n_layers, [None] * n_layers
    for idx in reversed(range(n_layers)):
        x_shape, cols, z = cache[idx]
        if idx < n_layers - 1:
            g = g * np.where(z > 0, 1.0, NEG_SLOPE)
        g, dks[idx], dbs[idx] = _conv_backward(g, cols, x_shape, weights.kernels[idx], LAYOUT[idx][1])
        if idx == UPSAMPLE_AT:
            n, c, h, w = g.shape
            g = g.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
    return dks, dbs


def masked_mse(pred, target, mask):
    """Mean squared error over entries where ``mask`` is 1, and its gradient."""
    total = mask.sum()
    if total == 0:
        return 0.0, np.zeros_like(pred)
    diff = (pred - target) * mask
    return float(np.sum(diff ** 2) / total), 2.0 * diff / total


def loss_and_grad(weights: NetworkWeights, x, target, mask):
    pred, cache = network_forward(x, weights, return_cache=True)
    loss, dpred = masked_mse(pred, target, mask)
    dks, dbs = network_backward(dpred, cache, weights)
    return loss, dks, dbs


def grid_offset(observed: QuantizedGrid) -> float:
    """Mean of the observed entries; the network works on values relative to it."""
    m = observed.mask > 0
    return float(observed.values[m].mean()) if m.any() else 0.0


def plain_input(observed: QuantizedGrid, offset: float) -> np.ndarray:
    return np.stack([(observed.values - offset) * observed.mask, observed.mask])


class NetworkEstimator(GridEstimator):
    """Plain completion network fed with ``[values, mask]``."""

    name = "cnn"
    input_channels = 2

    def __init__(self, weights: NetworkWeights, spec=None):
        if weights.input_channels != self.input_channels:
            raise ValueError(f"{self.name} needs {self.input_channels}-channel weights")
        self.weights = weights
        self.spec = spec

    def network_input(self, observed: QuantizedGrid, obs_locations=None, obs_power=None):
        """``(tensor, offset)`` where the estimate is ``forward(tensor) + offset``."""
        offset = grid_offset(observed)
        return plain_input(observed, offset), offset

    def estimate_grid(self, observed: QuantizedGrid, obs_locations=None, obs_power=None):
        x, offset = self.network_input(observed, obs_locations, obs_power)
        return network_forward(x, self.weights)[0] + offset
