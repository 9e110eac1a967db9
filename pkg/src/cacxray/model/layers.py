"""Primitive layers with explicit forward and backward passes.

Everything runs in float64 on (N, C, H, W) arrays so analytic gradients can be
verified against central finite differences. Layers never mutate their input
activations; convolution caches its im2col matrix for the backward pass.

Parameter naming: each layer owns entries in a flat ``tensors`` dict under its
dotted name, e.g. ``block0.layer1.conv2.w`` or ``head.fc1.b``. Weight decay
elsewhere keys off the ``.w`` suffix, so only convolution kernels and linear
weight matrices end in ``.w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class RunCtx:
    """State threaded through one forward/backward pass."""

    tensors: dict[str, np.ndarray]
    mode: str  # "train" | "eval"
    frozen: Callable[[str], bool]
    caches: dict = field(default_factory=dict)


def _quantized_normal(rng: np.random.Generator, std: float, shape) -> np.ndarray:
    # draws pass through float32 so freshly initialized weights survive the
    # float32 weights file bitwise
    return (rng.normal(0.0, std, size=shape).astype(np.float32)).astype(np.float64)


class Layer:
    """Base: parameter-free, shape-preserving."""

    def __init__(self, name: str):
        self.name = name

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return []

    def init_params(self, rng: np.random.Generator, tensors: dict) -> None:
        pass

    def forward(self, x: np.ndarray, ctx: RunCtx) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, ctx: RunCtx, grads: dict) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    """2-D convolution without bias, im2col implementation."""

    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, stride: int = 1, pad: int = 0):
        super().__init__(name)
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.wname = name + ".w"

    def param_shapes(self):
        return [(self.wname, (self.c_out, self.c_in, self.kernel, self.kernel))]

    def init_params(self, rng, tensors):
        fan_in = self.c_in * self.kernel * self.kernel
        tensors[self.wname] = _quantized_normal(rng, np.sqrt(2.0 / fan_in), self.param_shapes()[0][1])

    def forward(self, x, ctx):
        w = ctx.tensors[self.wname]
        n, c, h, wid = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        ho = (h + 2 * p - k) // s + 1
        wo = (wid + 2 * p - k) // s + 1
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        # (n, c, ho, wo, k, k) -> (n, ho*wo, c*k*k)
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho * wo, c * k * k)
        y = cols @ w.reshape(self.c_out, -1).T  # (n, ho*wo, c_out)
        ctx.caches[self.name] = (cols, x.shape, (ho, wo))
        return np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(n, self.c_out, ho, wo)

    def backward(self, dy, ctx, grads):
        cols, x_shape, (ho, wo) = ctx.caches[self.name]
        n, c, h, wid = x_shape
        k, s, p = self.kernel, self.stride, self.pad
        w = ctx.tensors[self.wname]
        dym = np.ascontiguousarray(dy.reshape(n, self.c_out, ho * wo).transpose(0, 2, 1))
        dw = np.tensordot(dym, cols, axes=([0, 1], [0, 1]))  # (c_out, c*k*k)
        grads[self.wname] = grads.get(self.wname, 0.0) + dw.reshape(w.shape)
        dcols = dym @ w.reshape(self.c_out, -1)  # (n, ho*wo, c*k*k)
        dwin = dcols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((n, c, h + 2 * p, wid + 2 * p))
        for ki in range(k):
            rstop = ki + s * (ho - 1) + 1
            for kj in range(k):
                cstop = kj + s * (wo - 1) + 1
                dxp[:, :, ki:rstop:s, kj:cstop:s] += dwin[:, :, :, :, ki, kj]
        return dxp[:, :, p : p + h, p : p + wid] if p else dxp


class BatchNorm2d(Layer):
    """Per-channel batch normalization with running moments.

    Train mode normalizes by biased batch statistics and updates the running
    moments in place; eval mode (or a frozen layer in train mode) normalizes
    by the stored running moments and leaves them untouched.
    """

    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.channels = channels
        self.gname = name + ".gamma"
        self.bname = name + ".beta"
        self.rmname = name + ".running_mean"
        self.rvname = name + ".running_var"

    def param_shapes(self):
        c = (self.channels,)
        return [(self.gname, c), (self.bname, c), (self.rmname, c), (self.rvname, c)]

    def init_params(self, rng, tensors):
        c = self.channels
        tensors[self.gname] = np.ones(c)
        tensors[self.bname] = np.zeros(c)
        tensors[self.rmname] = np.zeros(c)
        tensors[self.rvname] = np.ones(c)

    def forward(self, x, ctx):
        g = ctx.tensors[self.gname]
        b = ctx.tensors[self.bname]
        batch_stats = ctx.mode == "train" and not ctx.frozen(self.gname)
        if batch_stats:
            m = x.mean(axis=(0, 2, 3))
            v = x.var(axis=(0, 2, 3))
            rm = ctx.tensors[self.rmname]
            rv = ctx.tensors[self.rvname]
            rm *= 1.0 - BN_MOMENTUM
            rm += BN_MOMENTUM * m
            rv *= 1.0 - BN_MOMENTUM
            rv += BN_MOMENTUM * v
        else:
            m = ctx.tensors[self.rmname].copy()
            v = ctx.tensors[self.rvname].copy()
        inv = 1.0 / np.sqrt(v + BN_EPS)
        xhat = (x - m[None, :, None, None]) * inv[None, :, None, None]
        ctx.caches[self.name] = (xhat, inv, batch_stats)
        return g[None, :, None, None] * xhat + b[None, :, None, None]

    def backward(self, dy, ctx, grads):
        xhat, inv, batch_stats = ctx.caches[self.name]
        g = ctx.tensors[self.gname]
        axes = (0, 2, 3)
        grads[self.gname] = grads.get(self.gname, 0.0) + np.sum(dy * xhat, axis=axes)
        grads[self.bname] = grads.get(self.bname, 0.0) + np.sum(dy, axis=axes)
        dxhat = dy * g[None, :, None, None]
        if not batch_stats:
            return dxhat * inv[None, :, None, None]
        nel = dy.shape[0] * dy.shape[2] * dy.shape[3]
        s1 = np.sum(dxhat, axis=axes)
        s2 = np.sum(dxhat * xhat, axis=axes)
        return (inv[None, :, None, None] / nel) * (
            nel * dxhat - s1[None, :, None, None] - xhat * s2[None, :, None, None]
        )


class ReLU(Layer):
    def forward(self, x, ctx):
        mask = x > 0
        ctx.caches[self.name] = mask
        return np.where(mask, x, 0.0)

    def backward(self, dy, ctx, grads):
        return np.where(ctx.caches[self.name], dy, 0.0)


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; a trailing odd row/column is dropped.
    Gradient ties route to the first maximal element of each window."""

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        win = (
            x[:, :, : h2 * 2, : w2 * 2]
            .reshape(n, c, h2, 2, w2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2, w2, 4)
        )
        idx = np.argmax(win, axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        ctx.caches[self.name] = (idx, x.shape)
        return y

    def backward(self, dy, ctx, grads):
        idx, (n, c, h, w) = ctx.caches[self.name]
        h2, w2 = h // 2, w // 2
        dwin = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dx = np.zeros((n, c, h, w))
        dx[:, :, : h2 * 2, : w2 * 2] = (
            dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        )
        return dx


class AvgPool2x2(Layer):
    """2x2 average pooling, stride 2; a trailing odd row/column is dropped."""

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        y = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2).mean(axis=(3, 5))
        ctx.caches[self.name] = x.shape
        return y

    def backward(self, dy, ctx, grads):
        n, c, h, w = ctx.caches[self.name]
        h2, w2 = h // 2, w // 2
        dx = np.zeros((n, c, h, w))
        dx[:, :, : h2 * 2, : w2 * 2] = np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) / 4.0
        return dx


class GlobalAvgPool(Layer):
    """(N, C, H, W) -> (N, C) spatial mean."""

    def forward(self, x, ctx):
        ctx.caches[self.name] = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy, ctx, grads):
        n, c, h, w = ctx.caches[self.name]
        return np.broadcast_to(dy[:, :, None, None], (n, c, h, w)) / (h * w)


class Linear(Layer):
    def __init__(self, name: str, d_in: int, d_out: int):
        super().__init__(name)
        self.d_in = d_in
        self.d_out = d_out
        self.wname = name + ".w"
        self.bname = name + ".b"

    def param_shapes(self):
        return [(self.wname, (self.d_out, self.d_in)), (self.bname, (self.d_out,))]

    def init_params(self, rng, tensors):
        tensors[self.wname] = _quantized_normal(rng, np.sqrt(2.0 / self.d_in), (self.d_out, self.d_in))
        tensors[self.bname] = np.zeros(self.d_out)

    def forward(self, x, ctx):
        ctx.caches[self.name] = x
        return x @ ctx.tensors[self.wname].T + ctx.tensors[self.bname]

    def backward(self, dy, ctx, grads):
        x = ctx.caches[self.name]
        grads[self.wname] = grads.get(self.wname, 0.0) + dy.T @ x
        grads[self.bname] = grads.get(self.bname, 0.0) + dy.sum(axis=0)
        return dy @ ctx.tensors[self.wname]
