"""Bloch Hamiltonian of the 2D spin-orbit lattice model.

The momentum-space Hamiltonian is a single 2x2 block h(k).sigma per momentum,
with

    h1 = 2 t1x cos kx
    h2 = 2 t1y cos ky
    h3 = m + 2 t2 cos(kx + ky) + (3/2) t3 (sin kx + sin ky) + eta cos(2 kx)

The eta term is a third-nearest-neighbour perturbation along x; eta = 0 is
the unperturbed model.  Band energy is E_k = |h| (hbar = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CouplingParams",
    "bloch_vector",
    "bloch_gradients",
    "band_energy",
    "analytic_gap_boundary",
    "DIRAC_MOMENTA",
]

# Gap closings can only occur where h1 = h2 = 0, i.e. cos kx = cos ky = 0.
DIRAC_MOMENTA = (
    (math.pi / 2, math.pi / 2),
    (math.pi / 2, -math.pi / 2),
    (-math.pi / 2, math.pi / 2),
    (-math.pi / 2, -math.pi / 2),
)


@dataclass(frozen=True)
class CouplingParams:
    """The five couplings of the lattice model plus perturbation strength."""

    m: float
    t1x: float = 1.0
    t1y: float = 1.0
    t2: float = 5.0
    t3: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        vals = (self.m, self.t1x, self.t1y, self.t2, self.t3, self.eta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"couplings must be finite, got {vals}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    def with_(self, **kw) -> "CouplingParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "t1x": self.t1x, "t1y": self.t1y,
            "t2": self.t2, "t3": self.t3, "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingParams":
        return cls(**{k: float(d[k]) for k in ("m", "t1x", "t1y", "t2", "t3", "eta")})


def bloch_vector(p: CouplingParams, kx, ky):
    """h(k) = (h1, h2, h3); accepts scalars or broadcastable arrays."""
    kx, ky = np.broadcast_arrays(np.asarray(kx, float), np.asarray(ky, float))
    h1 = 2.0 * p.t1x * np.cos(kx)
    h2 = 2.0 * p.t1y * np.cos(ky)
    h3 = (p.m + 2.0 * p.t2 * np.cos(kx + ky)
          + 1.5 * p.t3 * (np.sin(kx) + np.sin(ky))
          + p.eta * np.cos(2.0 * kx))
    return h1, h2, h3


def bloch_gradients(p: CouplingParams, kx, ky):
    """Closed-form (d h / d kx, d h / d ky), each a 3-tuple of arrays."""
    kx, ky = np.broadcast_arrays(np.asarray(kx, float), np.asarray(ky, float))
    zero = np.zeros(kx.shape)
    dxy = -2.0 * p.t2 * np.sin(kx + ky)
    dx = (-2.0 * p.t1x * np.sin(kx),
          zero,
          dxy + 1.5 * p.t3 * np.cos(kx) - 2.0 * p.eta * np.sin(2.0 * kx))
    dy = (zero,
          -2.0 * p.t1y * np.sin(ky),
          dxy + 1.5 * p.t3 * np.cos(ky))
    return dx, dy


def band_energy(h1, h2, h3):
    """E_k = sqrt(h1^2 + h2^2 + h3^2) >= 0."""
    return np.sqrt(np.asarray(h1) ** 2 + np.asarray(h2) ** 2 + np.asarray(h3) ** 2)


def analytic_gap_boundary(p: CouplingParams, tol: float = 1e-12) -> list[float]:
    """Critical t3 values at which the gap closes, for fixed (m, t2, eta).

    The gap can close only at the four Dirac momenta (cos kx = cos ky = 0,
    requires t1x, t1y != 0).  At each, h3 = 0 is linear in t3; momenta where
    the sin kx + sin ky factor vanishes give no t3-dependent condition and
    are skipped.  Returns deduplicated roots, ascending.
    """
    if p.t1x == 0.0 or p.t1y == 0.0:
        raise ValueError("Dirac momenta require t1x != 0 and t1y != 0")
    roots: list[float] = []
    for kx, ky in DIRAC_MOMENTA:
        slope = 1.5 * (math.sin(kx) + math.sin(ky))
        offset = p.m + 2.0 * p.t2 * math.cos(kx + ky) + p.eta * math.cos(2.0 * kx)
        if abs(slope) < tol:
            continue
        r = -offset / slope
        if not any(abs(r - q) < tol for q in roots):
            roots.append(r)
    return sorted(roots)
