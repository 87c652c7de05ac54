"""Self-organizing map used as the unsupervised external memory.

Classic online Kohonen updates: per iteration one feature vector is
presented, the best-matching unit (BMU) found by Euclidean distance, and
every unit pulled toward the feature with a Gaussian neighborhood factor

    w += lr(i) * exp(-d^2 / (2 r(i)^2)) * (x - w)

where d is the grid distance to the BMU.  The neighborhood radius shrinks
as r(i) = radius0 * exp(-i / tau) with time constant
tau = iters_total / ln(radius0); the learning rate follows the same
staircase decay cadence as the supervised network (factor `decay` every
`decay_every` iterations).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import BadMagic, DimMismatch, TruncatedFile, VersionMismatch

__all__ = ["SOMState", "som_init", "som_step", "som_fit", "som_assign",
           "som_time_constant", "save_som", "load_som"]

SOM_MAGIC = b"QWSOM001"
SOM_VERSION = 1


@dataclass
class SOMState:
    codebook: np.ndarray  # (height, width, dim)
    lr0: float = 0.4
    decay: float = 0.9
    decay_every: int = 100
    radius0: float | None = None  # default: half the larger grid side
    iters_total: int = 1000

    def __post_init__(self):
        if self.codebook.ndim != 3:
            raise ValueError("codebook must be (height, width, dim)")
        if not np.all(np.isfinite(self.codebook)):
            raise ValueError("codebook must be finite")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.radius0 is None:
            self.radius0 = max(self.height, self.width) / 2.0
        if self.radius0 > max(self.height, self.width):
            raise ValueError("radius0 must not exceed the grid extent")

    @property
    def height(self) -> int:
        return self.codebook.shape[0]

    @property
    def width(self) -> int:
        return self.codebook.shape[1]

    @property
    def dim(self) -> int:
        return self.codebook.shape[2]


def som_init(height: int = 64, width: int = 64, dim: int = 32, seed: int = 0,
             **kw) -> SOMState:
    """Fresh state with uniform [0, 1) codebook entries.

    Desk-scale defaults: 64x64 grid (radius0 then defaults to 32); the
    production 256x256/radius 128 memory is reachable through the same
    arguments.
    """
    rng = np.random.default_rng(seed)
    return SOMState(codebook=rng.uniform(0.0, 1.0, size=(height, width, dim)), **kw)


def som_time_constant(iters_total: int, radius0: float) -> float:
    """tau = iterations / ln(initial radius)."""
    if radius0 <= 1.0:
        raise ValueError("radius schedule needs radius0 > 1")
    return iters_total / np.log(radius0)


def _bmu(codebook: np.ndarray, x: np.ndarray) -> tuple[int, int]:
    d2 = np.sum((codebook - x) ** 2, axis=2)
    flat = int(np.argmin(d2))  # ties resolve to the lowest flat index
    return flat // codebook.shape[1], flat % codebook.shape[1]


def som_step(codebook: np.ndarray, x: np.ndarray, lr: float,
             radius: float) -> tuple[int, int]:
    """One in-place neighborhood update; returns the BMU coordinate."""
    r, c = _bmu(codebook, x)
    rows = np.arange(codebook.shape[0])[:, None] - r
    cols = np.arange(codebook.shape[1])[None, :] - c
    d2 = rows**2 + cols**2
    theta = lr * np.exp(-d2 / (2.0 * radius**2))
    codebook += theta[..., None] * (x - codebook)
    return r, c


def som_fit(features: np.ndarray, state: SOMState, seed: int = 0) -> SOMState:
    """Run the full online schedule over shuffled features (cyclically).

    Returns a new state; the input state is not modified.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != state.dim:
        raise DimMismatch(
            f"features must be (n, {state.dim}), got {features.shape}")
    out = replace(state, codebook=state.codebook.copy())
    if state.iters_total == 0:
        return out
    tau = som_time_constant(state.iters_total, state.radius0)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(features))
    for i in range(state.iters_total):
        x = features[order[i % len(order)]]
        lr = state.lr0 * state.decay ** (i // state.decay_every)
        radius = state.radius0 * np.exp(-i / tau)
        som_step(out.codebook, x, lr, radius)
    return out


def som_assign(state: SOMState, feature: np.ndarray) -> tuple[int, int]:
    """(row, col) of the best-matching unit; deterministic tie-break."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (state.dim,):
        raise DimMismatch(f"feature must have dim {state.dim}, got {feature.shape}")
    return _bmu(state.codebook, feature)


def save_som(state: SOMState, path: str | Path):
    head = struct.pack("<8sIIII3dIQ", SOM_MAGIC, SOM_VERSION,
                       state.height, state.width, state.dim,
                       state.lr0, state.decay, state.radius0,
                       state.decay_every, state.iters_total)
    Path(path).write_bytes(head + np.ascontiguousarray(
        state.codebook, dtype="<f8").tobytes())


def load_som(path: str | Path) -> SOMState:
    blob = Path(path).read_bytes()
    fmt = "<8sIIII3dIQ"
    size = struct.calcsize(fmt)
    if blob[:8] != SOM_MAGIC:
        raise BadMagic(f"{path}: not a SOM checkpoint")
    if len(blob) < size:
        raise TruncatedFile(f"{path}: header incomplete")
    (_, version, h, w, dim, lr0, decay, radius0,
     decay_every, iters_total) = struct.unpack_from(fmt, blob)
    if version != SOM_VERSION:
        raise VersionMismatch(f"{path}: SOM version {version}")
    count = h * w * dim
    if len(blob) < size + 8 * count:
        raise TruncatedFile(f"{path}: codebook truncated")
    codebook = np.frombuffer(blob, dtype="<f8", count=count,
                             offset=size).reshape(h, w, dim).copy()
    return SOMState(codebook=codebook, lr0=lr0, decay=decay,
                    decay_every=decay_every, radius0=radius0,
                    iters_total=iters_total)
