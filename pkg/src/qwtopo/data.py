"""Dataset generation: parameter sampling, walk profiles, noise, splits, I/O.

Sample files are a small self-describing binary format (see SAMPLE_MAGIC
layout below); datasets are a directory of sample files plus a JSON manifest.
Every random choice is driven by a per-sample stream derived from
(global_seed, sample_index), so regeneration is byte-identical regardless of
scheduling.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagic, ClassUnreachable, DomainMismatch, GaplessSystem,
                     TooFewSamples, TruncatedFile, VersionMismatch)
from .model import CouplingParams, analytic_gap_boundary
from .topo import BZGrid, chern_link
from .walk import (DensityProfile, Domain, Lattice, SpinorField, choose_time,
                   evolve_momentum, momentum_profile, position_profile,
                   to_position)

__all__ = [
    "RegionSpec",
    "NoiseSpec",
    "Sample",
    "DatasetManifest",
    "sample_parameters",
    "generate_dataset",
    "add_momentum_noise",
    "add_position_noise",
    "split",
    "write_sample",
    "read_sample",
    "sample_seed",
]

SAMPLE_MAGIC = b"QWDPROF1"
SAMPLE_VERSION = 1
# magic, version, width, height, channels, domain, dtype, reserved, chern,
# m t1x t1y t2 t3 eta time, seed
_HEADER = struct.Struct("<8sIIIIBBHi7dQ")

MAX_DRAWS = 1_000_000
TRANSITION_BAND = 3.0  # |t3 - boundary root| defining the transition region


@dataclass(frozen=True)
class RegionSpec:
    """Rectangular (m, t3) sampling window with boundary-distance filters.

    kind "whole" accepts everything in the box; "transition" additionally
    requires |t3 - root| <= band for some analytic boundary root at that m;
    exclusion_margin rejects samples closer than the margin to any root.
    """

    kind: str = "whole"  # whole | transition | custom
    m_range: tuple[float, float] = (-20.0, 20.0)
    t3_range: tuple[float, float] = (-20.0, 20.0)
    t1y_sign: int = 1
    exclusion_margin: float = 0.0
    band: float = TRANSITION_BAND

    def __post_init__(self):
        if self.kind not in ("whole", "transition", "custom"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.m_range[0] >= self.m_range[1] or self.t3_range[0] >= self.t3_range[1]:
            raise ValueError("ranges must be nonempty")
        if self.exclusion_margin < 0:
            raise ValueError("exclusion_margin must be >= 0")
        if self.t1y_sign not in (-1, 1):
            raise ValueError("t1y_sign must be +-1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m_range": list(self.m_range),
                "t3_range": list(self.t3_range), "t1y_sign": self.t1y_sign,
                "exclusion_margin": self.exclusion_margin, "band": self.band}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionSpec":
        return cls(kind=d["kind"], m_range=tuple(d["m_range"]),
                   t3_range=tuple(d["t3_range"]), t1y_sign=int(d["t1y_sign"]),
                   exclusion_margin=float(d.get("exclusion_margin", 0.0)),
                   band=float(d.get("band", TRANSITION_BAND)))


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise: momentum Gaussian sigma, position PSF, shot counts.

    gaussian_sigma_per_channel optionally overrides the common sigma for the
    four momentum channels.
    """

    gaussian_sigma: float = 0.0
    psf_sigma: float = 0.0
    shots: int = 0
    gaussian_sigma_per_channel: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.psf_sigma < 0 or self.shots < 0:
            raise ValueError("noise fields must be nonnegative")

    @property
    def is_identity(self) -> bool:
        return (self.gaussian_sigma == 0 and self.psf_sigma == 0
                and self.shots == 0 and self.gaussian_sigma_per_channel is None)

    def to_dict(self) -> dict:
        d = {"gaussian_sigma": self.gaussian_sigma, "psf_sigma": self.psf_sigma,
             "shots": self.shots}
        if self.gaussian_sigma_per_channel is not None:
            d["gaussian_sigma_per_channel"] = list(self.gaussian_sigma_per_channel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        per = d.get("gaussian_sigma_per_channel")
        return cls(gaussian_sigma=float(d.get("gaussian_sigma", 0.0)),
                   psf_sigma=float(d.get("psf_sigma", 0.0)),
                   shots=int(d.get("shots", 0)),
                   gaussian_sigma_per_channel=tuple(per) if per else None)


@dataclass
class Sample:
    profile: DensityProfile
    chern: int
    params: CouplingParams
    time: float
    seed: int


@dataclass
class DatasetManifest:
    samples: list[dict]
    region: RegionSpec
    lattice_l: int
    noise: NoiseSpec
    global_seed: int
    split: dict[str, list[int]] | None = None

    def to_json(self) -> str:
        return json.dumps({
            "samples": self.samples,
            "region": self.region.to_dict(),
            "lattice_l": self.lattice_l,
            "noise": self.noise.to_dict(),
            "global_seed": self.global_seed,
            "split": self.split,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(samples=d["samples"],
                   region=RegionSpec.from_dict(d["region"]),
                   lattice_l=int(d["lattice_l"]),
                   noise=NoiseSpec.from_dict(d["noise"]),
                   global_seed=int(d["global_seed"]),
                   split=d.get("split"))

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def sample_seed(global_seed: int, index: int) -> int:
    """Counter-based per-sample seed; independent of generation order."""
    ss = np.random.SeedSequence([int(global_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _in_region(region: RegionSpec, m: float, t3: float, base: CouplingParams) -> bool:
    roots = analytic_gap_boundary(base.with_(m=m, t3=0.0))
    dists = [abs(t3 - r) for r in roots]
    if region.exclusion_margin > 0 and dists and min(dists) < region.exclusion_margin:
        return False
    if region.kind == "transition":
        return bool(dists) and min(dists) <= region.band
    return True


def sample_parameters(region: RegionSpec, count_per_class: dict[int, int],
                      base: CouplingParams, seed: int,
                      grid: BZGrid | None = None,
                      max_draws: int = MAX_DRAWS) -> list[tuple[CouplingParams, int]]:
    """Uniform rejection sampling of (m, t3) until every class quota is met.

    Labels come from chern_link (the labeling authority); samples labeled
    with the gapless sentinel or filtered by the region are rejected.  All
    draws use the region's t1y_sign; a class only reachable with the other
    sign (e.g. C = +2 under t1y = +1) raises ClassUnreachable.
    """
    if any(c <= 0 for c in count_per_class.values()):
        raise ValueError("counts must be positive")
    grid = grid or BZGrid()
    rng = np.random.default_rng(seed)
    base = base.with_(t1y=region.t1y_sign * abs(base.t1y))
    need = dict(count_per_class)
    out: list[tuple[CouplingParams, int]] = []
    draws = 0
    while any(v > 0 for v in need.values()):
        if draws >= max_draws:
            missing = sorted(k for k, v in need.items() if v > 0)
            raise ClassUnreachable(
                f"classes {missing} not reached after {draws} draws in {region.kind} region"
            )
        draws += 1
        m = rng.uniform(*region.m_range)
        t3 = rng.uniform(*region.t3_range)
        if not _in_region(region, m, t3, base):
            continue
        p = base.with_(m=m, t3=t3)
        try:
            label = chern_link(p, grid).value
        except GaplessSystem:
            continue
        if need.get(label, 0) > 0:
            need[label] -= 1
            out.append((p, label))
    return out


def generate_dataset(params_list: list[tuple[CouplingParams, int]], lat: Lattice,
                     domain: Domain, out_dir: str | Path, seed: int,
                     noise: NoiseSpec | None = None, fill: float = 0.8,
                     region: RegionSpec | None = None) -> DatasetManifest:
    """Evolve each parameter set, extract profiles, and write sample files.

    One file per sample named sample_{index:05d}.qwp plus manifest.json.
    Momentum noise is applied to the clean profile; position noise (PSF)
    needs the complex field and is applied before the marginal.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    domain = Domain(domain)
    noise = noise or NoiseSpec()
    entries = []
    for idx, (p, label) in enumerate(params_list):
        seed_i = sample_seed(seed, idx)
        t = choose_time(p, lat, fill)
        f = evolve_momentum(p, lat, t)
        if domain is Domain.MOMENTUM:
            prof = momentum_profile(f)
            if not noise.is_identity:
                prof = add_momentum_noise(prof, noise, seed_i)
        else:
            pos = to_position(f)
            if noise.psf_sigma > 0 or noise.shots > 0:
                prof = add_position_noise(pos, noise, seed_i)
            else:
                prof = position_profile(pos)
        prof.label = label
        prof.params = p
        prof.time = t
        prof.seed = seed_i
        name = f"sample_{idx:05d}.qwp"
        write_sample(Sample(prof, label, p, t, seed_i), out_dir / name)
        entries.append({"file": name, "label": int(label),
                        "params": p.to_dict(), "seed": seed_i})
    manifest = DatasetManifest(samples=entries,
                               region=region or RegionSpec(),
                               lattice_l=lat.l, noise=noise, global_seed=seed)
    manifest.save(out_dir / "manifest.json")
    return manifest


def add_momentum_noise(prof: DensityProfile, spec: NoiseSpec, seed: int) -> DensityProfile:
    """Shot noise on the amplitude channels, then Gaussian noise on all four.

    Amplitudes are resampled as sqrt(Poisson(shots p)/shots) with p the mode
    probability; Gaussian noise is i.i.d. per entry.  Amplitude channels are
    clamped to [0, 1.5], phase channels to [-1.5, 1.5].
    """
    if prof.domain is not Domain.MOMENTUM:
        raise DomainMismatch("momentum noise on a non-momentum profile")
    rng = np.random.default_rng(seed)
    data = prof.data.astype(np.float64)
    if spec.shots > 0:
        p = np.clip(data[:2], 0.0, None) ** 2
        data[:2] = np.sqrt(rng.poisson(spec.shots * p) / spec.shots)
    sigmas = spec.gaussian_sigma_per_channel or (spec.gaussian_sigma,) * 4
    for c, s in enumerate(sigmas):
        if s > 0:
            data[c] += rng.normal(0.0, s, size=data[c].shape)
    data[:2] = np.clip(data[:2], 0.0, 1.5)
    data[2:] = np.clip(data[2:], -1.5, 1.5)
    return DensityProfile(domain=prof.domain, width=prof.width, height=prof.height,
                          channels=prof.channels, data=data.astype(np.float32),
                          label=prof.label, params=prof.params, time=prof.time,
                          seed=seed)


def _psf_kernel(sigma: float, l: int) -> np.ndarray:
    """Normalized Gaussian kernel truncated at 4 sigma, embedded on the
    periodic l x l grid (offset 0 at index 0); wraps onto itself if wider
    than the lattice."""
    r = max(1, int(np.ceil(4.0 * sigma)))
    off = np.arange(-r, r + 1)
    g = np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2.0 * sigma**2))
    g /= g.sum()
    kern = np.zeros((l, l))
    np.add.at(kern, (off[:, None] % l, off[None, :] % l), g)
    return kern


def add_position_noise(f: SpinorField, spec: NoiseSpec, seed: int) -> DensityProfile:
    """PSF-blur the complex spin amplitudes, marginalize, apply shot noise.

    The point-spread function is a circular Gaussian applied by periodic
    convolution to each spin component (amplitude-level blur); the resulting
    probability map is renormalized to unit total mass.
    """
    if f.domain is not Domain.POSITION:
        raise DomainMismatch("position noise on a non-position field")
    l = f.lattice.l
    up, down = f.up, f.down
    if spec.psf_sigma > 0:
        kf = np.fft.fft2(_psf_kernel(spec.psf_sigma, l))
        up = np.fft.ifft2(np.fft.fft2(up) * kf)
        down = np.fft.ifft2(np.fft.fft2(down) * kf)
    prob = np.abs(up) ** 2 + np.abs(down) ** 2
    if spec.shots > 0:
        rng = np.random.default_rng(seed)
        prob = rng.poisson(spec.shots * prob) / spec.shots
    total = prob.sum()
    if total > 0:
        prob = prob / total
    return DensityProfile(domain=Domain.POSITION, width=l, height=l, channels=1,
                          data=prob[None].astype(np.float32), params=f.params,
                          time=f.time, seed=seed)


def split(manifest: DatasetManifest, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> DatasetManifest:
    """Stratified train/val/test split; each class honors the ratios within
    one sample.  Returns a new manifest with the split index lists."""
    n = len(manifest.samples)
    if n < 10:
        raise TooFewSamples(f"need >= 10 samples to split, got {n}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(manifest.samples):
        by_label.setdefault(int(s["label"]), []).append(i)
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        rng.shuffle(idx)
        k = len(idx)
        n_train = int(round(ratios[0] * k))
        n_val = int(round(ratios[1] * k))
        n_val = min(n_val, k - n_train)
        parts["train"] += [int(v) for v in idx[:n_train]]
        parts["val"] += [int(v) for v in idx[n_train:n_train + n_val]]
        parts["test"] += [int(v) for v in idx[n_train + n_val:]]
    return DatasetManifest(samples=manifest.samples, region=manifest.region,
                           lattice_l=manifest.lattice_l, noise=manifest.noise,
                           global_seed=manifest.global_seed, split=parts)


def load_arrays(manifest: DatasetManifest, dataset_dir: str | Path,
                indices: list[int] | None = None):
    """Read sample files into classifier arrays.

    Returns (x, y, params) with x NHWC float32, y integer labels.
    """
    dataset_dir = Path(dataset_dir)
    if indices is None:
        indices = list(range(len(manifest.samples)))
    xs, ys, ps = [], [], []
    for i in indices:
        entry = manifest.samples[i]
        s = read_sample(dataset_dir / entry["file"])
        xs.append(np.moveaxis(s.profile.data, 0, -1))
        ys.append(s.chern)
        ps.append(s.params)
    x = np.stack(xs) if xs else np.empty((0,), dtype=np.float32)
    return x, np.asarray(ys, dtype=int), ps


def write_sample(sample: Sample, path: str | Path) -> None:
    prof = sample.profile
    p = sample.params
    header = _HEADER.pack(
        SAMPLE_MAGIC, SAMPLE_VERSION, prof.width, prof.height, prof.channels,
        0 if prof.domain is Domain.MOMENTUM else 1, 0, 0, int(sample.chern),
        p.m, p.t1x, p.t1y, p.t2, p.t3, p.eta, sample.time, sample.seed,
    )
    payload = np.ascontiguousarray(prof.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_sample(path: str | Path) -> Sample:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        if blob[:8] != SAMPLE_MAGIC:
            raise BadMagic(f"{path}: not a sample file")
        raise TruncatedFile(f"{path}: header incomplete")
    (magic, version, width, height, channels, domain_tag, dtype_tag, _res,
     chern, m, t1x, t1y, t2, t3, eta, time, seed) = _HEADER.unpack_from(blob)
    if magic != SAMPLE_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != SAMPLE_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {SAMPLE_VERSION}")
    if dtype_tag != 0:
        raise VersionMismatch(f"{path}: unknown dtype tag {dtype_tag}")
    count = width * height * channels
    payload = blob[_HEADER.size:]
    if len(payload) < 4 * count:
        raise TruncatedFile(f"{path}: payload {len(payload)}B < declared {4 * count}B")
    data = np.frombuffer(payload[:4 * count], dtype="<f4").reshape(channels, height, width)
    params = CouplingParams(m=m, t1x=t1x, t1y=t1y, t2=t2, t3=t3, eta=eta)
    domain = Domain.MOMENTUM if domain_tag == 0 else Domain.POSITION
    prof = DensityProfile(domain=domain, width=width, height=height,
                          channels=channels, data=data.copy(), label=chern,
                          params=params, time=time, seed=seed)
    return Sample(profile=prof, chern=chern, params=params, time=time, seed=seed)
