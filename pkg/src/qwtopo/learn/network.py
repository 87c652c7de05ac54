"""Model assembly, checkpoints, and feature extraction.

A NetworkModel is an ordered list of layers ending in Softmax, plus the
input image shape and the Chern labels the output indices stand for.  The
two baseline classifiers are a three-dense-layer MLP and a two-conv "vanilla"
CNN; a six-block separable-convolution network is constructible from the
same layers for completeness.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadMagic, ShapeMismatch, TruncatedFile, VersionMismatch
from .layers import (AvgPool2D, Conv2D, Dense, ELU, Layer, ReLU,
                     SeparableConv2D, Softmax)

__all__ = [
    "NetworkModel", "build_mlp", "build_vanilla_cnn", "build_dnn6",
    "save_model", "load_model", "feature_vectors",
]

MODEL_MAGIC = b"QWNET001"
MODEL_VERSION = 1


@dataclass
class NetworkModel:
    layers: list[Layer]
    input_shape: tuple[int, int, int]  # (H, W, C)
    classes: list[int]                 # Chern label per output index
    arch: str = "custom"

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities, shape (batch, len(classes))."""
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeMismatch(
                f"model expects {self.input_shape} images, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        """Forward pass stopping before the terminal softmax."""
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeMismatch(
                f"model expects {self.input_shape} images, got {x.shape[1:]}")
        for layer in self.layers[:-1]:
            x = layer.forward(x)
        return x

    def backward_from_logits(self, dlogits: np.ndarray):
        """Backprop through everything below the softmax.

        Stops at the lowest parametric layer: nothing below it has weights,
        so its (often most expensive) input gradient is never needed.
        """
        lowest = min((i for i, l in enumerate(self.layers[:-1]) if l.params()),
                     default=0)
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            if i == lowest and layer.params():
                layer.backward(dlogits, need_input_grad=False)
                return None
            dlogits = layer.backward(dlogits)
        return dlogits

    def predict(self, x: np.ndarray, batch: int = 64) -> np.ndarray:
        """Predicted Chern labels."""
        out = []
        for i in range(0, len(x), batch):
            probs = self.forward(x[i:i + batch])
            out.append(np.argmax(probs, axis=1))
        cls = np.asarray(self.classes)
        return cls[np.concatenate(out)] if out else np.empty(0, dtype=int)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def load_params(self, snapshot: list[np.ndarray]):
        for p, s in zip(self.params(), snapshot, strict=True):
            p[...] = s


def build_mlp(input_shape, classes, seed: int = 0, dtype=np.float64) -> NetworkModel:
    """AvgPool(2,2) -> 2048 ELU -> 256 ELU -> softmax head."""
    h, w, c = input_shape
    rng = np.random.default_rng(seed)
    d_in = (h // 2) * (w // 2) * c
    layers = [
        AvgPool2D(2, "valid"),
        Dense(d_in, 2048, rng, dtype), ELU(),
        Dense(2048, 256, rng, dtype), ELU(),
        Dense(256, len(classes), rng, dtype), Softmax(),
    ]
    return NetworkModel(layers, tuple(input_shape), list(classes), arch="mlp")


def build_vanilla_cnn(input_shape, classes, seed: int = 0,
                      dtype=np.float64) -> NetworkModel:
    """AvgPool -> [conv32 ELU, pool] -> [conv64 ELU, pool] -> 256 ELU -> softmax."""
    h, w, c = input_shape
    rng = np.random.default_rng(seed)
    layers: list[Layer] = [AvgPool2D(2, "same")]
    h, w = -(-h // 2), -(-w // 2)
    for c_out in (32, 64):
        layers += [Conv2D(c, c_out, 5, "same", rng, dtype), ELU(),
                   AvgPool2D(2, "same")]
        c = c_out
        h, w = -(-h // 2), -(-w // 2)
    layers += [Dense(h * w * c, 256, rng, dtype), ELU(),
               Dense(256, len(classes), rng, dtype), Softmax()]
    return NetworkModel(layers, tuple(input_shape), list(classes), arch="cnn")


def build_dnn6(input_shape, classes, seed: int = 0, dtype=np.float64) -> NetworkModel:
    """Six computation blocks (8, 8, 16, 16, 32, 32 filters), each
    AvgPool -> Conv2D(valid) -> SeparableConv2D(same, ELU), then dense head.
    Needs input extents >= 568 (the production 599x599 lattice fits);
    constructible but not trained at full scale.
    """
    h, w, c = input_shape
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for filters in (8, 8, 16, 16, 32, 32):
        layers += [AvgPool2D(2, "valid"),
                   Conv2D(c, filters, 5, "valid", rng, dtype),
                   SeparableConv2D(filters, filters, 5, "same", rng, dtype), ELU()]
        h, w = h // 2 - 4, w // 2 - 4
        c = filters
        if h < 1 or w < 1:
            raise ShapeMismatch(
                f"input {input_shape} too small for the six-block network")
    layers += [Dense(h * w * c, 256, rng, dtype), ReLU(),
               Dense(256, len(classes), rng, dtype), Softmax()]
    return NetworkModel(layers, tuple(input_shape), list(classes), arch="dnn6")


_BUILDERS = {"mlp": build_mlp, "cnn": build_vanilla_cnn, "dnn6": build_dnn6}


def build_model(arch: str, input_shape, classes, seed: int = 0,
                dtype=np.float64) -> NetworkModel:
    if arch not in _BUILDERS:
        raise ValueError(f"unknown arch {arch!r}; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[arch](input_shape, classes, seed, dtype)


def feature_vectors(model: NetworkModel, x: np.ndarray, batch: int = 64) -> np.ndarray:
    """Channel-wise global average of the last convolutional feature map.

    This is the feature the unsupervised memory (SOM) consumes; dimension
    equals the filter count of the final conv/separable-conv layer.
    """
    last_conv = max((i for i, l in enumerate(model.layers)
                     if isinstance(l, (Conv2D, SeparableConv2D))), default=None)
    if last_conv is None:
        raise ValueError("model has no convolutional layer to extract features from")
    feats = []
    for i in range(0, len(x), batch):
        h = x[i:i + batch]
        for layer in model.layers[:last_conv + 1]:
            h = layer.forward(h)
        feats.append(h.mean(axis=(1, 2)))
    return np.concatenate(feats, axis=0)


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, arch tag, input shape, classes,
# layer records (kind tag, hyperparams, f64 payloads)

_KIND_TAGS = {"avgpool": 1, "conv2d": 2, "separable_conv2d": 3, "dense": 4,
              "elu": 5, "relu": 6, "softmax": 7}
_PAD_TAGS = {"valid": 0, "same": 1}


def _write_array(out: list[bytes], a: np.ndarray):
    out.append(struct.pack("<I", a.ndim))
    out.append(struct.pack(f"<{a.ndim}I", *a.shape))
    out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob, self.off, self.path = blob, 0, path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.blob):
            raise TruncatedFile(f"{self.path}: ran out of bytes")
        vals = struct.unpack_from(fmt, self.blob, self.off)
        self.off += size
        return vals

    def array(self) -> np.ndarray:
        (ndim,) = self.take("<I")
        shape = self.take(f"<{ndim}I")
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        size = 8 * count
        if self.off + size > len(self.blob):
            raise TruncatedFile(f"{self.path}: array payload truncated")
        a = np.frombuffer(self.blob, dtype="<f8", count=count, offset=self.off)
        self.off += size
        return a.reshape(shape).copy()


def save_model(model: NetworkModel, path: str | Path):
    out: list[bytes] = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION)]
    arch = model.arch.encode()
    out.append(struct.pack("<I", len(arch)))
    out.append(arch)
    out.append(struct.pack("<3I", *model.input_shape))
    out.append(struct.pack("<I", len(model.classes)))
    out.append(struct.pack(f"<{len(model.classes)}i", *model.classes))
    out.append(struct.pack("<I", len(model.layers)))
    for layer in model.layers:
        out.append(struct.pack("<B", _KIND_TAGS[layer.kind]))
        if isinstance(layer, AvgPool2D):
            out.append(struct.pack("<IB", layer.pool, _PAD_TAGS[layer.padding]))
        elif isinstance(layer, Conv2D):
            out.append(struct.pack("<IB", layer.k, _PAD_TAGS[layer.padding]))
            _write_array(out, layer.w)
            _write_array(out, layer.b)
        elif isinstance(layer, SeparableConv2D):
            out.append(struct.pack("<IB", layer.k, _PAD_TAGS[layer.padding]))
            _write_array(out, layer.wd)
            _write_array(out, layer.wp)
            _write_array(out, layer.b)
        elif isinstance(layer, Dense):
            _write_array(out, layer.w)
            _write_array(out, layer.b)
        elif isinstance(layer, ELU):
            out.append(struct.pack("<d", layer.alpha))
    Path(path).write_bytes(b"".join(out))


def load_model(path: str | Path) -> NetworkModel:
    blob = Path(path).read_bytes()
    if blob[:8] != MODEL_MAGIC:
        raise BadMagic(f"{path}: not a model checkpoint")
    r = _Reader(blob, path)
    r.off = 8
    (version,) = r.take("<I")
    if version != MODEL_VERSION:
        raise VersionMismatch(f"{path}: model version {version}")
    (arch_len,) = r.take("<I")
    arch = bytes(r.take(f"<{arch_len}B")).decode() if arch_len else "custom"
    input_shape = r.take("<3I")
    (n_classes,) = r.take("<I")
    classes = list(r.take(f"<{n_classes}i"))
    (n_layers,) = r.take("<I")
    inv_pad = {v: k for k, v in _PAD_TAGS.items()}
    layers: list[Layer] = []
    for _ in range(n_layers):
        (tag,) = r.take("<B")
        if tag == _KIND_TAGS["avgpool"]:
            pool, pad = r.take("<IB")
            layers.append(AvgPool2D(pool, inv_pad[pad]))
        elif tag == _KIND_TAGS["conv2d"]:
            k, pad = r.take("<IB")
            w = r.array()
            b = r.array()
            layer = Conv2D(w.shape[2], w.shape[3], k, inv_pad[pad])
            layer.w, layer.b = w, b
            layer.dw, layer.db = np.zeros_like(w), np.zeros_like(b)
            layers.append(layer)
        elif tag == _KIND_TAGS["separable_conv2d"]:
            k, pad = r.take("<IB")
            wd = r.array()
            wp = r.array()
            b = r.array()
            layer = SeparableConv2D(wd.shape[2], wp.shape[1], k, inv_pad[pad])
            layer.wd, layer.wp, layer.b = wd, wp, b
            layer.dwd, layer.dwp, layer.db = (np.zeros_like(wd),
                                              np.zeros_like(wp), np.zeros_like(b))
            layers.append(layer)
        elif tag == _KIND_TAGS["dense"]:
            w = r.array()
            b = r.array()
            layer = Dense(w.shape[0], w.shape[1])
            layer.w, layer.b = w, b
            layer.dw, layer.db = np.zeros_like(w), np.zeros_like(b)
            layers.append(layer)
        elif tag == _KIND_TAGS["elu"]:
            (alpha,) = r.take("<d")
            layers.append(ELU(alpha))
        elif tag == _KIND_TAGS["relu"]:
            layers.append(ReLU())
        elif tag == _KIND_TAGS["softmax"]:
            layers.append(Softmax())
        else:
            raise VersionMismatch(f"{path}: unknown layer tag {tag}")
    return NetworkModel(layers, tuple(int(v) for v in input_shape), classes, arch=arch)
