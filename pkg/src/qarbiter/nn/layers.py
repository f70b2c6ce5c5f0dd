"""Plain-numpy neural layers with hand-written backward passes.

Everything runs in float64. Each layer caches whatever its backward pass
needs during forward; backward() accumulates parameter gradients into the
layer's grad buffers (zero them between optimization steps) and returns
the gradient with respect to the layer input.
"""

from __future__ import annotations

import numpy as np


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight init."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # branch on sign to avoid exp overflow for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Layer:
    """Minimal layer protocol; parameterless layers inherit as-is."""

    def params(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads(self) -> list[tuple[str, np.ndarray]]:
        return []

    def zero_grads(self) -> None:
        for _, g in self.grads():
            g.fill(0.0)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.W = fan_in_uniform(rng, (in_dim, out_dim), in_dim)
        self.b = np.zeros(out_dim)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.gW += self._x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.W.T

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [("W", self.gW), ("b", self.gb)]


class Conv2d(Layer):
    """Valid (no padding), stride-1 convolution over NHWC inputs.

    Kernels here are tiny (2x2), so the convolution is expressed as one
    matmul per kernel offset instead of an im2col buffer.
    """

    def __init__(self, in_ch: int, out_ch: int, ksize: int, rng: np.random.Generator):
        self.kh = self.kw = ksize
        self.cin = in_ch
        self.cout = out_ch
        self.W = fan_in_uniform(rng, (ksize, ksize, in_ch, out_ch), ksize * ksize * in_ch)
        self.b = np.zeros(out_ch)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        # batched matmul straight on the shifted views: fastest path found
        # for these tiny kernels (no im2col buffer)
        self._x = x
        _, h, w, _ = x.shape
        oh, ow = h - self.kh + 1, w - self.kw + 1
        y = x[:, 0:oh, 0:ow, :] @ self.W[0, 0]
        for u in range(self.kh):
            for v in range(self.kw):
                if u == 0 and v == 0:
                    continue
                y += x[:, u:u + oh, v:v + ow, :] @ self.W[u, v]
        return y + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        _, h, w, _ = x.shape
        oh, ow = h - self.kh + 1, w - self.kw + 1
        self.gb += dy.sum(axis=(0, 1, 2))
        dx = np.zeros_like(x)
        for u in range(self.kh):
            for v in range(self.kw):
                patch = x[:, u:u + oh, v:v + ow, :]
                self.gW[u, v] += np.einsum("bhwc,bhwo->co", patch, dy, optimize=True)
                dx[:, u:u + oh, v:v + ow, :] += dy @ self.W[u, v].T
        return dx

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [("W", self.gW), ("b", self.gb)]


class ReLU(Layer):
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Flatten(Layer):
    def __init__(self):
        self._shape: tuple | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class LSTM(Layer):
    """Single LSTM layer processing [batch, time, features] sequences.

    Gate order in the packed weight matrices is (input, forget, cell, output).
    forward_seq caches per-step activations for backprop through time;
    step() is the cache-free path used at decision time.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.hidden = hidden
        self.Wx = fan_in_uniform(rng, (in_dim, 4 * hidden), in_dim)
        self.Wh = fan_in_uniform(rng, (hidden, 4 * hidden), hidden)
        self.b = np.zeros(4 * hidden)
        self.gWx = np.zeros_like(self.Wx)
        self.gWh = np.zeros_like(self.Wh)
        self.gb = np.zeros_like(self.b)
        self._cache: list[tuple] | None = None

    def _gates(self, x, h, c):
        hid = self.hidden
        z = x @ self.Wx + h @ self.Wh + self.b
        i = sigmoid(z[..., :hid])
        f = sigmoid(z[..., hid:2 * hid])
        g = np.tanh(z[..., 2 * hid:3 * hid])
        o = sigmoid(z[..., 3 * hid:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        return i, f, g, o, c_new, h_new

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        """One recurrence step without caching. Returns (h', c')."""
        *_, c_new, h_new = self._gates(x, h, c)
        return h_new, c_new

    def forward_seq(self, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray):
        """Run the full sequence; returns (hs [B,L,H], (h_T, c_T))."""
        bsz, length, _ = xs.shape
        h, c = h0, c0
        hs = np.empty((bsz, length, self.hidden))
        self._cache = []
        for t in range(length):
            x = xs[:, t, :]
            i, f, g, o, c_new, h_new = self._gates(x, h, c)
            self._cache.append((x, h, c, i, f, g, o, c_new))
            h, c = h_new, c_new
            hs[:, t, :] = h
        return hs, (h, c)

    def backward_seq(self, dhs: np.ndarray) -> np.ndarray:
        """BPTT given the loss gradient at every output position."""
        bsz, length, _ = dhs.shape
        dxs = np.empty((bsz, length, self.in_dim))
        dh_next = np.zeros((bsz, self.hidden))
        dc_next = np.zeros((bsz, self.hidden))
        for t in reversed(range(length)):
            x, h_prev, c_prev, i, f, g, o, c_new = self._cache[t]
            tanh_c = np.tanh(c_new)
            dh = dhs[:, t, :] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g ** 2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.gWx += x.T @ dz
            self.gWh += h_prev.T @ dz
            self.gb += dz.sum(axis=0)
            dxs[:, t, :] = dz @ self.Wx.T
            dh_next = dz @ self.Wh.T
            dc_next = dc * f
        return dxs

    def params(self):
        return [("Wx", self.Wx), ("Wh", self.Wh), ("b", self.b)]

    def grads(self):
        return [("Wx", self.gWx), ("Wh", self.gWh), ("b", self.gb)]
