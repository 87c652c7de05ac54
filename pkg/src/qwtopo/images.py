"""PPM (P6) image output for profiles and SOM memory renderings.

PPM is the one required image format: dependency-free and bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .learn.pca import pca
from .learn.som import SOMState
from .walk import DensityProfile, Domain

__all__ = ["write_ppm", "normalize_u8", "profile_images", "som_rgb"]


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"need (H, W, 3) uint8, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + rgb.tobytes())


def normalize_u8(plane: np.ndarray) -> np.ndarray:
    """Min-max normalize a 2D array to uint8 (flat images map to 0)."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    if hi - lo < 1e-300:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.round(255.0 * (plane - lo) / (hi - lo)).astype(np.uint8)


def _gray_rgb(plane: np.ndarray) -> np.ndarray:
    g = normalize_u8(plane)
    return np.stack([g, g, g], axis=-1)


def _hue_rgb(cos_phi: np.ndarray, sin_phi: np.ndarray) -> np.ndarray:
    """Map a phase phasor to hue (full saturation); undefined phase -> black."""
    angle = np.arctan2(sin_phi, cos_phi)  # (-pi, pi]
    h6 = (angle / (2.0 * np.pi) % 1.0) * 6.0
    x = 1.0 - np.abs(h6 % 2.0 - 1.0)
    zeros = np.zeros_like(x)
    ones = np.ones_like(x)
    sector = np.floor(h6).astype(int) % 6
    r = np.choose(sector, [ones, x, zeros, zeros, x, ones])
    g = np.choose(sector, [x, ones, ones, x, zeros, zeros])
    b = np.choose(sector, [zeros, zeros, x, ones, ones, x])
    defined = (cos_phi != 0) | (sin_phi != 0)
    rgb = np.stack([r, g, b], axis=-1) * defined[..., None]
    return np.round(255.0 * rgb).astype(np.uint8)


def profile_images(prof: DensityProfile) -> list[tuple[str, np.ndarray]]:
    """Renderings of a profile: one grayscale map for position, three images
    (amp-up, amp-down, phase hue) for momentum."""
    if prof.domain is Domain.POSITION:
        return [("", _gray_rgb(prof.data[0]))]
    data = prof.data.astype(np.float64)
    return [
        ("_ampup", _gray_rgb(data[0])),
        ("_ampdn", _gray_rgb(data[1])),
        ("_phase", _hue_rgb(data[2], data[3])),
    ]


def som_rgb(state: SOMState, k: int = 3) -> np.ndarray:
    """Project each codebook vector onto the top principal components and
    min-max the result into RGB channels."""
    rows = state.codebook.reshape(-1, state.dim)
    _, _, proj = pca(rows, k)
    img = np.zeros((rows.shape[0], 3))
    for c in range(min(3, k)):
        col = proj[:, c]
        lo, hi = col.min(), col.max()
        if hi - lo > 1e-300:
            img[:, c] = (col - lo) / (hi - lo)
    return np.round(255.0 * img.reshape(state.height, state.width, 3)).astype(np.uint8)
