"""Neural-network layers with explicit reverse-mode gradients.

All image tensors are NHWC float arrays; convolutions are cross-correlations
with stride 1 and 'valid' or 'same' padding.  Each layer caches what its
backward pass needs during forward and accumulates parameter gradients into
``grads`` (zeroed by ``zero_grad``).  Shapes are validated up front so a
mismatched batch fails loudly rather than broadcasting silently.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

__all__ = [
    "Layer", "Dense", "Conv2D", "SeparableConv2D", "AvgPool2D",
    "ELU", "ReLU", "Softmax", "lecun_uniform",
]


def lecun_uniform(rng: np.random.Generator, shape, fan_in: int,
                  dtype=np.float64) -> np.ndarray:
    """Fan-in-scaled uniform init, variance 1/fan_in."""
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _pad_hw(x: np.ndarray, k: int) -> np.ndarray:
    lo, hi = (k - 1) // 2, k // 2
    return np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """(N, H', W', kh, kw, C) sliding view for a k x k kernel."""
    w = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    # sliding_window_view puts window axes last: (N, H', W', C, k, k)
    return np.moveaxis(w, 3, 5)


class Layer:
    kind = "layer"

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def zero_grad(self):
        for g in self.grads():
            g[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class Dense(Layer):
    """Affine layer; non-2D inputs are flattened per batch element."""

    kind = "dense"

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None,
                 dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.w = lecun_uniform(rng, (d_in, d_out), fan_in=d_in, dtype=dtype)
        self.b = np.zeros(d_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x_shape: tuple | None = None
        self._x: np.ndarray | None = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x):
        self._x_shape = x.shape
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.w.shape[0]:
            raise ShapeMismatch(
                f"dense expects {self.w.shape[0]} features, got {x2.shape[1]}")
        self._x = x2
        return x2 @ self.w + self.b

    def backward(self, dy, need_input_grad: bool = True):
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        if not need_input_grad:
            return None
        return (dy @ self.w.T).reshape(self._x_shape)


class Conv2D(Layer):
    """k x k cross-correlation, stride 1; padding 'valid' or 'same'."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, k: int = 5, padding: str = "valid",
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be valid|same, got {padding!r}")
        rng = rng or np.random.default_rng(0)
        self.k, self.padding = k, padding
        self.w = lecun_uniform(rng, (k, k, c_in, c_out), fan_in=k * k * c_in,
                               dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x_padded: np.ndarray | None = None
        self._x_shape: tuple | None = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.w.shape[2]:
            raise ShapeMismatch(
                f"conv2d expects NHWC with C={self.w.shape[2]}, got {x.shape}")
        self._x_shape = x.shape
        xp = _pad_hw(x, self.k) if self.padding == "same" else x
        if xp.shape[1] < self.k or xp.shape[2] < self.k:
            raise ShapeMismatch(f"input {x.shape} smaller than {self.k}x{self.k} kernel")
        self._x_padded = xp
        win = _windows(xp, self.k)
        return np.tensordot(win, self.w, axes=([3, 4, 5], [0, 1, 2])) + self.b

    def backward(self, dy, need_input_grad: bool = True):
        win = _windows(self._x_padded, self.k)
        self.dw += np.tensordot(win, dy, axes=([0, 1, 2], [0, 1, 2]))
        self.db += dy.sum(axis=(0, 1, 2))
        if not need_input_grad:
            return None
        # full correlation of dy with the spatially flipped kernel
        dyp = np.pad(dy, ((0, 0), (self.k - 1, self.k - 1),
                          (self.k - 1, self.k - 1), (0, 0)))
        w_flip = self.w[::-1, ::-1]  # (k, k, c_in, c_out)
        dxp = np.tensordot(_windows(dyp, self.k), w_flip.transpose(0, 1, 3, 2),
                           axes=([3, 4, 5], [0, 1, 2]))
        if self.padding == "same":
            lo, hi = (self.k - 1) // 2, self.k // 2
            h, w = self._x_shape[1], self._x_shape[2]
            dxp = dxp[:, lo:lo + h, lo:lo + w, :]
        return dxp


class SeparableConv2D(Layer):
    """Depthwise k x k (one kernel per input channel) then pointwise 1x1."""

    kind = "separable_conv2d"

    def __init__(self, c_in: int, c_out: int, k: int = 5, padding: str = "same",
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be valid|same, got {padding!r}")
        rng = rng or np.random.default_rng(0)
        self.k, self.padding = k, padding
        self.wd = lecun_uniform(rng, (k, k, c_in), fan_in=k * k, dtype=dtype)
        self.wp = lecun_uniform(rng, (c_in, c_out), fan_in=c_in, dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dwd = np.zeros_like(self.wd)
        self.dwp = np.zeros_like(self.wp)
        self.db = np.zeros_like(self.b)
        self._x_padded = None
        self._mid = None
        self._x_shape = None

    def params(self):
        return [self.wd, self.wp, self.b]

    def grads(self):
        return [self.dwd, self.dwp, self.db]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.wd.shape[2]:
            raise ShapeMismatch(
                f"separable conv expects NHWC with C={self.wd.shape[2]}, got {x.shape}")
        self._x_shape = x.shape
        xp = _pad_hw(x, self.k) if self.padding == "same" else x
        if xp.shape[1] < self.k or xp.shape[2] < self.k:
            raise ShapeMismatch(f"input {x.shape} smaller than {self.k}x{self.k} kernel")
        self._x_padded = xp
        win = _windows(xp, self.k)
        mid = np.einsum("nijabc,abc->nijc", win, self.wd)
        self._mid = mid
        return np.tensordot(mid, self.wp, axes=([3], [0])) + self.b

    def backward(self, dy, need_input_grad: bool = True):
        self.dwp += np.tensordot(self._mid, dy, axes=([0, 1, 2], [0, 1, 2]))
        self.db += dy.sum(axis=(0, 1, 2))
        dmid = np.tensordot(dy, self.wp, axes=([3], [1]))
        win = _windows(self._x_padded, self.k)
        self.dwd += np.einsum("nijabc,nijc->abc", win, dmid)
        if not need_input_grad:
            return None
        dmp = np.pad(dmid, ((0, 0), (self.k - 1, self.k - 1),
                            (self.k - 1, self.k - 1), (0, 0)))
        dxp = np.einsum("nijabc,abc->nijc", _windows(dmp, self.k),
                        self.wd[::-1, ::-1])
        if self.padding == "same":
            lo = (self.k - 1) // 2
            h, w = self._x_shape[1], self._x_shape[2]
            dxp = dxp[:, lo:lo + h, lo:lo + w, :]
        return dxp


class AvgPool2D(Layer):
    """2x2 average pooling, stride 2.

    'valid' floors odd extents (trailing row/column dropped); 'same' ceils,
    averaging only over in-bounds cells at the edges.
    """

    kind = "avgpool"

    def __init__(self, pool: int = 2, padding: str = "valid"):
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be valid|same, got {padding!r}")
        self.pool = pool
        self.padding = padding
        self._x_shape = None
        self._counts = None

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"avgpool expects NHWC, got {x.shape}")
        self._x_shape = x.shape
        n, h, w, c = x.shape
        p = self.pool
        if self.padding == "valid":
            ho, wo = h // p, w // p
            xv = x[:, :ho * p, :wo * p, :]
            y = xv.reshape(n, ho, p, wo, p, c).mean(axis=(2, 4))
            self._counts = None
            return y
        ho, wo = -(-h // p), -(-w // p)
        xp = np.pad(x, ((0, 0), (0, ho * p - h), (0, wo * p - w), (0, 0)))
        sums = xp.reshape(n, ho, p, wo, p, c).sum(axis=(2, 4))
        ones = np.ones((1, h, w, 1))
        onesp = np.pad(ones, ((0, 0), (0, ho * p - h), (0, wo * p - w), (0, 0)))
        counts = onesp.reshape(1, ho, p, wo, p, 1).sum(axis=(2, 4))
        self._counts = counts
        return sums / counts

    def backward(self, dy):
        n, h, w, c = self._x_shape
        p = self.pool
        if self.padding == "valid":
            ho, wo = h // p, w // p
            dx = np.zeros(self._x_shape)
            spread = np.repeat(np.repeat(dy / (p * p), p, axis=1), p, axis=2)
            dx[:, :ho * p, :wo * p, :] = spread
            return dx
        spread = np.repeat(np.repeat(dy / self._counts, p, axis=1), p, axis=2)
        return spread[:, :h, :w, :]


class ELU(Layer):
    kind = "elu"

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha
        self._y = None

    def forward(self, x):
        y = np.where(x > 0, x, self.alpha * np.expm1(x))
        self._y = y
        return y

    def backward(self, dy):
        return dy * np.where(self._y > 0, 1.0, self._y + self.alpha)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Softmax(Layer):
    """Row softmax over the last axis (terminal layer)."""

    kind = "softmax"

    def __init__(self):
        self._y = None

    def forward(self, x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        self._y = y
        return y

    def backward(self, dy):
        y = self._y
        return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))
