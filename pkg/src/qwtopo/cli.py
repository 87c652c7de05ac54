"""Command-line pipeline: chern, phase-diagram, walk, gen-dataset, add-noise,
split, train, eval, boundary-shift, pca, export-image.

Exit codes: 0 success, 1 usage, 2 domain error (gapless system, bad file
contents, ...), 3 I/O failure.  Config files are JSON; command-line flags
override file values and the effective configuration is echoed into every
output directory for provenance.  QWALK_THREADS caps worker processes for
grid labeling (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, data, images, learn
from .errors import QwtopoError
from .model import (CouplingParams, analytic_gap_boundary, band_energy,
                    bloch_vector)
from .topo import BZGrid, chern_link, chern_quadrature, phase_diagram
from .walk import (DensityProfile, Domain, Lattice, choose_time,
                   evolve_momentum, momentum_profile, position_profile,
                   to_position)

USAGE_EXIT = 1
DOMAIN_EXIT = 2
IO_EXIT = 3

PRODUCTION_M_AXIS = tuple(-20.0 + (10.0 / 7.0) * j for j in range(7))
PRODUCTION_T3_AXIS = tuple(np.linspace(-20.0, 20.0, 28))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _add_param_flags(p: argparse.ArgumentParser):
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--t3", type=float, default=0.0)
    p.add_argument("--t1x", type=float, default=1.0)
    p.add_argument("--t1y", type=float, default=1.0)
    p.add_argument("--t2", type=float, default=5.0)
    p.add_argument("--eta", type=float, default=0.0)


def _params_from(args) -> CouplingParams:
    return CouplingParams(m=args.m, t1x=args.t1x, t1y=args.t1y,
                          t2=args.t2, t3=args.t3, eta=args.eta)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _echo_config(out_dir: Path, cfg: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(json.dumps(cfg, indent=2))


# --------------------------------------------------------------------------
# subcommands

def cmd_chern(args) -> int:
    p = _params_from(args)
    grid = BZGrid(args.n)
    link = chern_link(p, grid)
    quad = chern_quadrature(p, BZGrid(max(args.n, 400)))
    k = grid.axis()
    kx, ky = np.meshgrid(k, k, indexing="ij")
    gap = float(band_energy(*bloch_vector(p, kx, ky)).min())
    print(f"C={link.value}  link_raw={link.raw:.9f}  "
          f"quadrature_raw={quad.raw:.9f}  min_gap={gap:.6e}")
    return 0


def cmd_phase_diagram(args) -> int:
    base = _params_from(args)
    m_axis = np.linspace(args.m_range[0], args.m_range[1], args.m_points,
                         endpoint=not args.m_half_open)
    t3_axis = np.linspace(args.t3_range[0], args.t3_range[1], args.t3_points)
    pd = phase_diagram(base, m_axis, t3_axis, BZGrid(args.n))
    Path(args.out).write_text(pd.to_json())
    values, counts = np.unique(pd.labels, return_counts=True)
    summary = ", ".join(f"C={v}: {c}" for v, c in zip(values, counts))
    print(f"wrote {args.out} ({pd.labels.size} cells; {summary})")
    return 0


def cmd_walk(args) -> int:
    p = _params_from(args)
    lat = Lattice(args.l)
    t = args.time if args.time is not None else choose_time(p, lat, args.fill)
    f = evolve_momentum(p, lat, t)
    domain = Domain(args.domain)
    if domain is Domain.MOMENTUM:
        prof = momentum_profile(f)
    else:
        prof = position_profile(to_position(f))
    label = chern_link(p, BZGrid(args.n)).value
    prof.label = label
    data.write_sample(data.Sample(prof, label, p, t, seed=0), args.out)
    print(f"wrote {args.out} (l={lat.l}, t={t:.4f}, C={label}, domain={domain.value})")
    return 0


def _dataset_config(args) -> dict:
    cfg = {
        "lattice_l": 101, "bz_n": 256, "domain": "momentum", "fill": 0.8,
        "seed": 0, "counts": {"0": 120, "1": 120, "-1": 120},
        "region": data.RegionSpec().to_dict(), "noise": data.NoiseSpec().to_dict(),
        "base_params": CouplingParams(m=0.0).to_dict(),
    }
    cfg.update(_load_config(args.config))
    if args.l is not None:
        cfg["lattice_l"] = args.l
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.domain is not None:
        cfg["domain"] = args.domain
    if args.counts is not None:
        cfg["counts"] = {kv.split(":")[0]: int(kv.split(":")[1])
                         for kv in args.counts.split(",")}
    if args.region_kind is not None:
        cfg["region"]["kind"] = args.region_kind
    if args.margin is not None:
        cfg["region"]["exclusion_margin"] = args.margin
    if args.t1y_sign is not None:
        cfg["region"]["t1y_sign"] = args.t1y_sign
    if args.eta is not None:
        cfg["base_params"]["eta"] = args.eta
    return cfg


def cmd_gen_dataset(args) -> int:
    cfg = _dataset_config(args)
    out_dir = Path(args.out)
    region = data.RegionSpec.from_dict(cfg["region"])
    noise = data.NoiseSpec.from_dict(cfg["noise"])
    base = CouplingParams.from_dict(cfg["base_params"])
    counts = {int(k): int(v) for k, v in cfg["counts"].items()}
    params = data.sample_parameters(region, counts, base, seed=cfg["seed"],
                                    grid=BZGrid(cfg["bz_n"]))
    manifest = data.generate_dataset(
        params, Lattice(cfg["lattice_l"]), Domain(cfg["domain"]), out_dir,
        seed=cfg["seed"], noise=noise, fill=cfg["fill"], region=region)
    _echo_config(out_dir, cfg)
    by_label: dict[int, int] = {}
    for s in manifest.samples:
        by_label[s["label"]] = by_label.get(s["label"], 0) + 1
    for label in sorted(by_label):
        print(f"C={label:+d}: {by_label[label]} samples")
    print(f"wrote {len(manifest.samples)} samples to {out_dir}")
    return 0


def cmd_add_noise(args) -> int:
    spec = data.NoiseSpec(gaussian_sigma=args.sigma, psf_sigma=args.psf,
                          shots=args.shots)
    src = Path(args.input)
    sample = data.read_sample(src)
    if sample.profile.domain is Domain.MOMENTUM:
        noisy = data.add_momentum_noise(sample.profile, spec, args.seed)
    else:
        # PSF acts on the complex state: regenerate the field from metadata
        field = to_position(evolve_momentum(
            sample.params, Lattice(sample.profile.width), sample.time))
        noisy = data.add_position_noise(field, spec, args.seed)
        noisy.label = sample.chern
    data.write_sample(data.Sample(noisy, sample.chern, sample.params,
                                  sample.time, args.seed), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_split(args) -> int:
    dataset = Path(args.dataset)
    manifest = data.DatasetManifest.load(dataset / "manifest.json")
    out = data.split(manifest, ratios=tuple(args.ratios), seed=args.seed)
    out.save(dataset / "manifest.json")
    sizes = {k: len(v) for k, v in out.split.items()}
    print(f"split {dataset}: {sizes}")
    return 0


def _load_parts(dataset: Path):
    manifest = data.DatasetManifest.load(dataset / "manifest.json")
    if manifest.split is None:
        raise QwtopoError(f"{dataset}: manifest has no split; run `qwtopo split` first")
    parts = {}
    for name in ("train", "val", "test"):
        parts[name] = data.load_arrays(manifest, dataset, manifest.split[name])
    return manifest, parts


def cmd_train(args) -> int:
    dataset = Path(args.dataset)
    manifest, parts = _load_parts(dataset)
    x_train, y_train, _ = parts["train"]
    classes = sorted(set(int(v) for v in y_train))
    input_shape = x_train.shape[1:]
    model = learn.build_model(args.arch, input_shape, classes, seed=args.seed,
                              dtype=np.float32)
    cfg = learn.TrainConfig.from_dict({**_load_config(args.config),
                                       **({"iters": args.iters} if args.iters else {}),
                                       "seed": args.seed})
    model, curve, val_metrics = learn.train_supervised(
        model, cfg, parts["train"][:2], parts["val"][:2])
    learn.save_model(model, args.out)
    out_dir = Path(args.out).resolve().parent
    _echo_config(out_dir, {"arch": args.arch, "train": cfg.to_dict(),
                           "dataset": str(dataset), "classes": classes})
    if args.curve:
        Path(args.curve).write_text(json.dumps(curve, indent=2))
    if args.metrics:
        val_metrics.save(args.metrics)
    print(f"trained {args.arch} on {len(x_train)} samples; "
          f"val accuracy {val_metrics.overall:.3f}; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    dataset = Path(args.dataset)
    manifest, parts = _load_parts(dataset)
    model = learn.load_model(args.model)
    x, y, params = parts[args.part]
    if args.noise_sigma > 0:
        if x.shape[-1] != 4:
            raise QwtopoError("--noise-sigma applies to momentum datasets only; "
                              "regenerate position data with add-noise")
        spec = data.NoiseSpec(gaussian_sigma=args.noise_sigma)
        noisy = []
        for i in range(len(x)):
            prof = DensityProfile(
                domain=Domain.MOMENTUM, width=x.shape[2], height=x.shape[1],
                channels=x.shape[3], data=np.moveaxis(x[i], -1, 0))
            noisy.append(np.moveaxis(
                data.add_momentum_noise(prof, spec, seed=args.seed + i).data, 0, -1))
        x = np.stack(noisy)
    metrics = learn.evaluate(model, x, y)
    if args.metrics:
        metrics.save(args.metrics)
    domain = "momentum" if x.shape[-1] == 4 else "position"
    entry = {"region": manifest.region.kind, "domain": domain, "metrics": metrics}
    print(analysis.accuracy_table([entry], exclude_abs2=args.exclude_abs2))
    outliers = analysis.misclassification_map(model.predict(
        np.asarray(x, dtype=np.float64)), y, params)
    print(f"misclassified: {len(outliers.points)} / {len(y)}")
    if args.outliers:
        outliers.save(args.outliers)
    return 0


def label_grid_with_model(model, m_axis, t3_axis, base, l, fill):
    lat = Lattice(l)
    labels = np.zeros((len(m_axis), len(t3_axis)), dtype=int)
    for i, m in enumerate(m_axis):
        for j, t3 in enumerate(t3_axis):
            p = base.with_(m=float(m), t3=float(t3))
            t = choose_time(p, lat, fill)
            prof = momentum_profile(evolve_momentum(p, lat, t))
            x = np.moveaxis(prof.data, 0, -1)[None].astype(np.float64)
            labels[i, j] = int(model.predict(x)[0])
    return labels


def cmd_boundary_shift(args) -> int:
    base = CouplingParams(m=0.0, eta=0.0)
    m_axis = np.asarray(PRODUCTION_M_AXIS) if args.m_axis is None else np.asarray(args.m_axis)
    t3_axis = np.asarray(PRODUCTION_T3_AXIS) if args.t3_axis is None else np.asarray(args.t3_axis)
    resolution = float(t3_axis[1] - t3_axis[0])
    model = learn.load_model(args.model) if args.model else None

    def analytic_ref(m, side):
        roots = analytic_gap_boundary(base.with_(m=float(m)))
        cands = [r for r in roots if np.sign(r) == side]
        if not cands:
            raise QwtopoError(f"no analytic boundary on side {side} at m={m}")
        return cands[0]

    def labels_for(eta, use_model):
        b = base.with_(eta=eta)
        if use_model:
            return label_grid_with_model(model, m_axis, t3_axis, b,
                                          args.l, args.fill)
        return phase_diagram(b, m_axis, t3_axis, BZGrid(args.n)).labels

    report = {"resolution": resolution,
              "half_resolution_uncertainty": resolution / 2.0, "etas": {}}
    for use_model, tag in (((False, "oracle"),) if model is None
                           else ((False, "oracle"), (True, "model"))):
        reference = analytic_ref
        if args.reference == "estimated":
            cross0, _ = analysis.boundary_midpoints(
                m_axis, t3_axis, labels_for(0.0, use_model))
            reference = {(c.m, c.side): c.midpoint for c in cross0}
        for eta in args.eta:
            cross, skipped = analysis.boundary_midpoints(
                m_axis, t3_axis, labels_for(eta, use_model))
            est = analysis.boundary_shift(cross, reference, resolution, skipped)
            report["etas"].setdefault(str(eta), {})[tag] = json.loads(est.to_json())
            print(f"[{tag}] eta={eta}: shift={est.shift:+.4f} "
                  f"(+- {est.half_resolution_uncertainty:.4f}, "
                  f"{len(cross)} crossings, {len(skipped)} rows skipped)")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
        print(f"wrote {args.out}")
    return 0


def cmd_pca(args) -> int:
    state = learn.load_som(args.som)
    rows = state.codebook.reshape(-1, state.dim)
    _, ratios, _ = learn.pca(rows, args.k)
    payload = {"explained_variance_ratio": [float(r) for r in ratios],
               "cumulative": float(np.sum(ratios))}
    print(json.dumps(payload, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2))
    if args.image:
        images.write_ppm(args.image, images.som_rgb(state, max(args.k, 3)))
        print(f"wrote {args.image}")
    return 0


def cmd_export_image(args) -> int:
    src = Path(args.input)
    magic = src.open("rb").read(8)
    out = Path(args.out)
    if magic == data.SAMPLE_MAGIC:
        sample = data.read_sample(src)
        for suffix, rgb in images.profile_images(sample.profile):
            path = out if not suffix else out.with_stem(out.stem + suffix)
            images.write_ppm(path, rgb)
            print(f"wrote {path}")
    elif magic == learn.som.SOM_MAGIC:
        images.write_ppm(out, images.som_rgb(learn.load_som(src)))
        print(f"wrote {out}")
    else:
        raise QwtopoError(f"{src}: unrecognized magic {magic!r}")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="qwtopo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chern", help="Chern number of one parameter point")
    _add_param_flags(p)
    p.add_argument("--n", type=int, default=256)
    p.set_defaults(func=cmd_chern)

    p = sub.add_parser("phase-diagram", help="label an (m, t3) grid")
    _add_param_flags(p)
    p.add_argument("--m-range", type=float, nargs=2, default=[-20.0, 20.0])
    p.add_argument("--m-points", type=int, default=21)
    p.add_argument("--m-half-open", action="store_true")
    p.add_argument("--t3-range", type=float, nargs=2, default=[-20.0, 20.0])
    p.add_argument("--t3-points", type=int, default=21)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("walk", help="run one quantum walk, write a sample file")
    _add_param_flags(p)
    p.add_argument("--l", type=int, default=101)
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--fill", type=float, default=0.8)
    p.add_argument("--domain", choices=["momentum", "position"], default="momentum")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("gen-dataset", help="sample parameters and write a dataset")
    p.add_argument("--config", default=None, help="JSON config (flags override)")
    p.add_argument("--out", required=True)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--domain", choices=["momentum", "position"], default=None)
    p.add_argument("--counts", default=None, help="label:count[,label:count...]")
    p.add_argument("--region-kind", choices=["whole", "transition", "custom"],
                   default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--t1y-sign", type=int, choices=[-1, 1], default=None)
    p.add_argument("--eta", type=float, default=None)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("add-noise", help="apply measurement noise to a sample")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--psf", type=float, default=2.0)
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a classifier on a split dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", choices=["mlp", "cnn", "dnn6"], default="mlp")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="TrainConfig JSON")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics", default=None)
    p.add_argument("--curve", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset part")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--part", choices=["train", "val", "test"], default="test")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics", default=None)
    p.add_argument("--outliers", default=None)
    p.add_argument("--exclude-abs2", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("boundary-shift", help="phase-boundary shift vs eta")
    p.add_argument("--eta", type=float, nargs="+", default=[3.0, 6.0, 9.0])
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--model", default=None, help="also label with this checkpoint")
    p.add_argument("--l", type=int, default=101)
    p.add_argument("--fill", type=float, default=0.8)
    p.add_argument("--reference", choices=["analytic", "estimated"],
                   default="analytic")
    p.add_argument("--m-axis", type=float, nargs="+", default=None)
    p.add_argument("--t3-axis", type=float, nargs="+", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_boundary_shift)

    p = sub.add_parser("pca", help="explained variance of a SOM codebook")
    p.add_argument("--som", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", default=None)
    p.add_argument("--image", default=None)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("export-image", help="render a sample or SOM as PPM")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_image)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QwtopoError as e:
        print(f"error: {e}", file=sys.stderr)
        return DOMAIN_EXIT
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
