"""Layers with hand-written reverse passes.

Image-like activations are laid out (batch, time, width, channels).  Each
layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Tensor.grad`` during ``backward``.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


class Layer:
    def params(self) -> list[Tensor]:
        return []

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _Windowed(Layer):
    """Shared sliding-window plumbing for convolution and max-pooling."""

    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: str

    def _pads(self, t: int, w: int):
        if self.padding == "valid":
            return (0, 0), (0, 0)
        return (_same_padding(t, self.kernel[0], self.stride[0]),
                _same_padding(w, self.kernel[1], self.stride[1]))

    def output_shape(self, shape):
        t, w = shape[0], shape[1]
        (pt0, pt1), (pw0, pw1) = self._pads(t, w)
        tp, wp = t + pt0 + pt1, w + pw0 + pw1
        kh, kw = self.kernel
        if kh > tp or kw > wp:
            raise ValueError(f"kernel {self.kernel} larger than padded input {(tp, wp)}")
        return ((tp - kh) // self.stride[0] + 1, (wp - kw) // self.stride[1] + 1) + tuple(shape[2:])

    def _pad(self, x: np.ndarray, value: float = 0.0) -> np.ndarray:
        pads = self._pads(x.shape[1], x.shape[2])
        self._pads_used = pads
        if pads == ((0, 0), (0, 0)):
            return x
        return np.pad(x, ((0, 0), pads[0], pads[1], (0, 0)), constant_values=value)

    def _windows(self, xp: np.ndarray, to: int, wo: int):
        kh, kw = self.kernel
        sh, sw = self.stride
        for i in range(kh):
            for j in range(kw):
                yield xp[:, i : i + sh * (to - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :]

    def _unpad(self, dxp: np.ndarray) -> np.ndarray:
        (t0, t1), (w0, w1) = self._pads_used
        return dxp[:, t0 : dxp.shape[1] - t1, w0 : dxp.shape[2] - w1, :]


class Conv2D(_Windowed):
    def __init__(self, in_channels: int, filters: int, kernel=(1, 1), stride=(1, 1),
                 padding: str = "valid", rng: np.random.Generator | None = None):
        if padding not in ("valid", "zero"):
            raise ValueError(f"padding must be 'valid' or 'zero', got {padding!r}")
        self.kernel, self.stride, self.padding = tuple(kernel), tuple(stride), padding
        self.in_channels, self.filters = in_channels, filters
        rng = rng or np.random.default_rng(0)
        fan_in = self.kernel[0] * self.kernel[1] * in_channels
        self.weight = Tensor(_he_uniform(rng, (*self.kernel, in_channels, filters), fan_in), name="conv.w")
        self.bias = Tensor(np.zeros(filters), name="conv.b")

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        if shape[2] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {shape[2]}")
        to, wo, _ = super().output_shape(shape)
        return to, wo, self.filters

    def forward(self, x, training=False):
        b = x.shape[0]
        to, wo, _ = self.output_shape(x.shape[1:])
        xp = self._pad(x)
        self._xp_shape = xp.shape
        if self.kernel == (1, 1) and self.stride == (1, 1):
            self._cols = xp.reshape(-1, self.in_channels)
        else:
            cols = np.stack(list(self._windows(xp, to, wo)), axis=3)  # (B, to, wo, kh*kw, C)
            self._cols = cols.reshape(b * to * wo, -1)
        w = self.weight.data.reshape(-1, self.filters)
        return (self._cols @ w + self.bias.data).reshape(b, to, wo, self.filters)

    def backward(self, dy):
        b, to, wo, f = dy.shape
        dy2 = dy.reshape(-1, f)
        self.weight.grad += (self._cols.T @ dy2).reshape(self.weight.shape)
        self.bias.grad += dy2.sum(axis=0)
        dcols = dy2 @ self.weight.data.reshape(-1, f).T
        self._cols = None
        if self.kernel == (1, 1) and self.stride == (1, 1):
            return self._unpad(dcols.reshape(self._xp_shape))
        dcols = dcols.reshape(b, to, wo, -1, self.in_channels)
        dxp = np.zeros(self._xp_shape)
        for n, view in enumerate(self._windows(dxp, to, wo)):
            view += dcols[:, :, :, n, :]
        return self._unpad(dxp)


class MaxPool(_Windowed):
    """Stride-1 max pooling; 'zero' padding keeps the size and never wins the max."""

    def __init__(self, kernel=(3, 1), padding: str = "zero"):
        self.kernel, self.stride, self.padding = tuple(kernel), (1, 1), padding

    def forward(self, x, training=False):
        to, wo = self.output_shape(x.shape[1:])[:2]
        xp = self._pad(x, -np.inf)
        self._xp_shape = xp.shape
        stacked = np.stack(list(self._windows(xp, to, wo)), axis=3)
        self._arg = stacked.argmax(axis=3)
        return np.take_along_axis(stacked, self._arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(self, dy):
        to, wo = dy.shape[1:3]
        dxp = np.zeros(self._xp_shape)
        for n, view in enumerate(self._windows(dxp, to, wo)):
            view += np.where(self._arg == n, dy, 0.0)
        return self._unpad(dxp)


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.01):
        self.slope = slope

    def forward(self, x, training=False):
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._pos, dy, self.slope * dy)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class Inception(Layer):
    """Parallel branches over the same input, concatenated on channels."""

    def __init__(self, branches):
        self.branches = [b if isinstance(b, Sequential) else Sequential(b) for b in branches]

    def params(self):
        return [p for b in self.branches for p in b.params()]

    def output_shape(self, shape):
        outs = [b.output_shape(shape) for b in self.branches]
        if len({o[:2] for o in outs}) != 1:
            raise ValueError(f"inception branches disagree on spatial shape: {outs}")
        return outs[0][:2] + (sum(o[2] for o in outs),)

    def forward(self, x, training=False):
        outs = [b.forward(x, training) for b in self.branches]
        self._splits = np.cumsum([o.shape[-1] for o in outs])[:-1]
        return np.concatenate(outs, axis=-1)

    def backward(self, dy):
        parts = np.split(dy, self._splits, axis=-1)
        dx = None
        for branch, part in zip(self.branches, parts):
            g = branch.backward(np.ascontiguousarray(part))
            dx = g if dx is None else dx + g
        return dx


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class ToSequence(Layer):
    """(B, T, W, C) -> (B, T, W*C): time stays the sequence axis."""

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LSTM(Layer):
    """Single-layer LSTM over (B, T, D) returning the final hidden state (B, H).

    Gate order in the packed weights is input, forget, cell, output.
    """

    def __init__(self, input_dim: int, units: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.input_dim, self.units = input_dim, units
        h = units
        self.w_x = Tensor(_he_uniform(rng, (input_dim, 4 * h), input_dim), name="lstm.wx")
        self.w_h = Tensor(_he_uniform(rng, (h, 4 * h), h), name="lstm.wh")
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        self.bias = Tensor(b, name="lstm.b")

    def params(self):
        return [self.w_x, self.w_h, self.bias]

    def output_shape(self, shape):
        if shape[1] != self.input_dim:
            raise ValueError(f"LSTM expects {self.input_dim} features, got {shape[1]}")
        return (self.units,)

    def forward(self, x, training=False):
        b, t, _ = x.shape
        h_dim = self.units
        self._x = x
        zx = x.transpose(1, 0, 2) @ self.w_x.data + self.bias.data  # (T, B, 4H)
        h = np.zeros((b, h_dim))
        c = np.zeros((b, h_dim))
        self._gates = np.empty((t, b, 4 * h_dim))
        self._c = np.empty((t + 1, b, h_dim))
        self._h = np.empty((t + 1, b, h_dim))
        self._c[0], self._h[0] = c, h
        wh = self.w_h.data
        for s in range(t):
            z = zx[s] + h @ wh
            g = self._gates[s]
            g[:] = _sigmoid(z)
            g[:, 2 * h_dim : 3 * h_dim] = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            c = g[:, h_dim : 2 * h_dim] * c + g[:, :h_dim] * g[:, 2 * h_dim : 3 * h_dim]
            h = g[:, 3 * h_dim :] * np.tanh(c)
            self._c[s + 1], self._h[s + 1] = c, h
        return h

    def backward(self, dy):
        x = self._x
        b, t, _ = x.shape
        hd = self.units
        wh = self.w_h.data
        dz_all = np.empty((t, b, 4 * hd))
        dh = dy
        dc = np.zeros((b, hd))
        for s in range(t - 1, -1, -1):
            g = self._gates[s]
            i, f, gg, o = g[:, :hd], g[:, hd : 2 * hd], g[:, 2 * hd : 3 * hd], g[:, 3 * hd :]
            tc = np.tanh(self._c[s + 1])
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = dz_all[s]
            dz[:, :hd] = dc * gg * i * (1.0 - i)
            dz[:, hd : 2 * hd] = dc * self._c[s] * f * (1.0 - f)
            dz[:, 2 * hd : 3 * hd] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * hd :] = dh * tc * o * (1.0 - o)
            dc = dc * f
            dh = dz @ wh.T
        dz2 = dz_all.reshape(t * b, -1)
        self.w_h.grad += self._h[:t].reshape(t * b, hd).T @ dz2
        xt = x.transpose(1, 0, 2).reshape(t * b, -1)
        self.w_x.grad += xt.T @ dz2
        self.bias.grad += dz2.sum(axis=0)
        self._x = self._gates = self._c = self._h = None
        return (dz2 @ self.w_x.data.T).reshape(t, b, -1).transpose(1, 0, 2)


class Dense(Layer):
    def __init__(self, in_features: int, units: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.in_features, self.units = in_features, units
        self.weight = Tensor(_he_uniform(rng, (in_features, units), in_features), name="dense.w")
        self.bias = Tensor(np.zeros(units), name="dense.b")

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ValueError(f"Dense expects ({self.in_features},), got {shape}")
        return (self.units,)

    def forward(self, x, training=False):
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dy):
        self.weight.grad += self._x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data.T


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    logp = log_softmax(logits)
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
