"""Continuous-time quantum walk of a centre-localized spin-up particle.

The walker state is evolved mode-by-mode in momentum space with the closed
form (per momentum k, E = |h(k)|, hbar = 1):

    a_up   = -i h3 sin(E t) / E - cos(E t)
    a_down = -i (h1 + i h2) sin(E t) / E

which is the propagator exp(+i h.sigma t) applied to (1, 0) up to a global
phase; at E = 0 the limit is (a_up, a_down) = (-1, 0).  All observables
derived here (amplitudes, relative phases, position probabilities) are
independent of the global phase.  Position space is reached by the unitary
inverse DFT followed by a circular shift that puts the t = 0 delta on the
centre site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateDynamics, DomainMismatch
from .model import CouplingParams, band_energy, bloch_vector

__all__ = [
    "Lattice",
    "Domain",
    "SpinorField",
    "DensityProfile",
    "evolve_momentum",
    "to_position",
    "to_momentum",
    "momentum_profile",
    "position_profile",
    "choose_time",
    "max_group_velocity",
]

ENERGY_EPS = 1e-12      # below this, use the exact E -> 0 branch of the propagator
AMP_EPS = 1e-12         # phase channels are zeroed where an amplitude is this small
MASS_FRACTION = 0.99    # probability mass defining the occupied square


class Domain(str, Enum):
    MOMENTUM = "momentum"
    POSITION = "position"


@dataclass(frozen=True)
class Lattice:
    """Square lattice with an odd number of sites per axis (unique centre)."""

    l: int

    def __post_init__(self):
        if self.l % 2 == 0 or self.l < 9:
            raise ValueError(f"lattice side must be odd and >= 9, got {self.l}")

    @property
    def centre(self) -> int:
        return self.l // 2

    def k_axis(self) -> np.ndarray:
        """Lattice momenta 2 pi j / l wrapped into [-pi, pi), FFT ordering."""
        k = 2.0 * np.pi * np.arange(self.l) / self.l
        k[k >= np.pi] -= 2.0 * np.pi
        return k


@dataclass
class SpinorField:
    """Two-component complex amplitudes over the lattice (total norm 1).

    Momentum-domain grids are FFT-ordered along both axes (axis 0 = kx,
    axis 1 = ky); each mode carries a 1/l factor so the summed norm is 1.
    """

    domain: Domain
    up: np.ndarray
    down: np.ndarray
    time: float
    params: CouplingParams

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.up.shape[0])

    def norm(self) -> float:
        return float(np.sum(np.abs(self.up) ** 2 + np.abs(self.down) ** 2))


@dataclass
class DensityProfile:
    """Classifier-ready image: 4 momentum channels or 1 position channel.

    data is float32, channel-planar (channels, height, width).  Momentum
    channels: (|a_up|, |a_down|, cos dphi, sin dphi) per mode, fftshifted so
    k = 0 sits at the image centre.  Position channel: site probability.
    """

    domain: Domain
    width: int
    height: int
    channels: int
    data: np.ndarray
    label: int | None = None
    params: CouplingParams | None = None
    time: float = 0.0
    seed: int = 0


def evolve_momentum(p: CouplingParams, lat: Lattice, t: float) -> SpinorField:
    """Closed-form state at time t of the centre-localized spin-up walker."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    k = lat.k_axis()
    kx, ky = np.meshgrid(k, k, indexing="ij")
    h1, h2, h3 = bloch_vector(p, kx, ky)
    e = band_energy(h1, h2, h3)
    gapped = e > ENERGY_EPS
    e_safe = np.where(gapped, e, 1.0)
    sin_term = np.sin(e * t) / e_safe
    cos_term = np.cos(e * t)
    a_up = np.where(gapped, -1j * h3 * sin_term - cos_term, -1.0 + 0.0j)
    a_down = np.where(gapped, -1j * (h1 + 1j * h2) * sin_term, 0.0 + 0.0j)
    scale = 1.0 / lat.l
    return SpinorField(domain=Domain.MOMENTUM, up=a_up * scale,
                       down=a_down * scale, time=t, params=p)


def to_position(f: SpinorField) -> SpinorField:
    """Unitary inverse 2D DFT per spin component, centre-shifted.

    Supports any odd lattice side (mixed-radix transforms underneath); the
    total norm is preserved to machine precision.
    """
    if f.domain is not Domain.MOMENTUM:
        raise DomainMismatch("to_position expects a momentum-domain field")
    c = f.lattice.centre
    up = np.roll(np.fft.ifft2(f.up, norm="ortho"), (c, c), axis=(0, 1))
    down = np.roll(np.fft.ifft2(f.down, norm="ortho"), (c, c), axis=(0, 1))
    return SpinorField(domain=Domain.POSITION, up=up, down=down,
                       time=f.time, params=f.params)


def to_momentum(f: SpinorField) -> SpinorField:
    """Inverse of to_position."""
    if f.domain is not Domain.POSITION:
        raise DomainMismatch("to_momentum expects a position-domain field")
    c = f.lattice.centre
    up = np.fft.fft2(np.roll(f.up, (-c, -c), axis=(0, 1)), norm="ortho")
    down = np.fft.fft2(np.roll(f.down, (-c, -c), axis=(0, 1)), norm="ortho")
    return SpinorField(domain=Domain.MOMENTUM, up=up, down=down,
                       time=f.time, params=f.params)


def momentum_profile(f: SpinorField) -> DensityProfile:
    """Amplitude and relative-phase channels of the momentum-space state.

    Amplitudes are per-mode (unit-spinor) magnitudes, so they lie in [0, 1].
    The relative phase dphi = arg(a_down) - arg(a_up) enters as (cos, sin)
    to avoid the +-pi wrap; both channels are zero where either amplitude
    is numerically zero (e.g. a_down at Dirac points).
    """
    if f.domain is not Domain.MOMENTUM:
        raise DomainMismatch("momentum_profile expects a momentum-domain field")
    l = f.lattice.l
    amp_up = np.abs(f.up) * l
    amp_dn = np.abs(f.down) * l
    valid = (amp_up >= AMP_EPS) & (amp_dn >= AMP_EPS)
    phasor = np.where(valid, f.down * np.conj(f.up), 0.0)
    mag = np.abs(phasor)
    phasor = np.where(valid, phasor / np.where(valid, mag, 1.0), 0.0)
    chans = np.stack([amp_up, amp_dn, phasor.real, phasor.imag])
    chans = np.fft.fftshift(chans, axes=(1, 2))
    return DensityProfile(domain=Domain.MOMENTUM, width=l, height=l,
                          channels=4, data=chans.astype(np.float32),
                          params=f.params, time=f.time)


def position_profile(f: SpinorField) -> DensityProfile:
    """Site probability marginalized over spin; sums to 1."""
    if f.domain is not Domain.POSITION:
        raise DomainMismatch("position_profile expects a position-domain field")
    prob = np.abs(f.up) ** 2 + np.abs(f.down) ** 2
    l = f.lattice.l
    return DensityProfile(domain=Domain.POSITION, width=l, height=l,
                          channels=1, data=prob[None].astype(np.float32),
                          params=f.params, time=f.time)


def occupied_square_side(prob: np.ndarray, mass: float = MASS_FRACTION) -> int:
    """Side of the smallest centred square holding the given mass fraction."""
    l = prob.shape[0]
    c = l // 2
    idx = np.arange(l)
    radius = np.maximum(np.abs(idx[:, None] - c), np.abs(idx[None, :] - c))
    ring = np.bincount(radius.ravel(), weights=prob.ravel().astype(np.float64),
                       minlength=c + 1)
    cum = np.cumsum(ring)
    total = cum[-1]
    r = int(np.searchsorted(cum, mass * total))
    return 2 * min(r, c) + 1


def max_group_velocity(p: CouplingParams, n: int = 128) -> float:
    """max_k |grad_k E| by periodic central differences on an n x n grid."""
    k = -np.pi + 2.0 * np.pi * np.arange(n) / n
    kx, ky = np.meshgrid(k, k, indexing="ij")
    e = band_energy(*bloch_vector(p, kx, ky))
    dk = 2.0 * np.pi / n
    dex = (np.roll(e, -1, axis=0) - np.roll(e, 1, axis=0)) / (2 * dk)
    dey = (np.roll(e, -1, axis=1) - np.roll(e, 1, axis=1)) / (2 * dk)
    return float(np.sqrt(dex**2 + dey**2).max())


def choose_time(p: CouplingParams, lat: Lattice, fill: float = 0.8) -> float:
    """Smallest t (1% tolerance) at which the walker occupies `fill` of the
    lattice: the centred square holding 99% of the position probability must
    have side >= sqrt(fill) * l.  Capped at 10 l / v_max so the search always
    terminates; raises DegenerateDynamics for flat bands.
    """
    if not 0.0 < fill < 1.0:
        raise ValueError(f"fill must be in (0, 1), got {fill}")
    v = max_group_velocity(p)
    if v < 1e-9:
        raise DegenerateDynamics(f"max group velocity {v:.2e}: no spreading")
    target = math.sqrt(fill) * lat.l
    t_max = 10.0 * lat.l / v

    def side(t: float) -> int:
        pos = to_position(evolve_momentum(p, lat, t))
        return occupied_square_side(np.abs(pos.up) ** 2 + np.abs(pos.down) ** 2)

    # ballistic first guess, then doubling to bracket
    t_hi = min(max(target / (2.0 * v), 1e-3), t_max)
    t_lo = 0.0
    while side(t_hi) < target:
        if t_hi >= t_max:
            return t_max
        t_lo = t_hi
        t_hi = min(2.0 * t_hi, t_max)
    while t_hi - t_lo > 0.01 * t_hi:
        t_mid = 0.5 * (t_lo + t_hi)
        if side(t_mid) >= target:
            t_hi = t_mid
        else:
            t_lo = t_mid
    return t_hi
