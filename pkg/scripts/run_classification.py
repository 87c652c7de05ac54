#!/usr/bin/env python3
"""Desk-scale classification experiment: dataset -> MLP -> accuracy table.

Generates a 3-class momentum dataset (C in {0, +1, -1}, l=101 by default),
trains the MLP baseline over three independent split seeds, and reports the
clean and noisy (sigma = 0.02) test accuracies in the per-class table
layout, plus the misclassified-sample geometry (distance to the nearest
analytic phase boundary) that mirrors the outlier maps.

Run from the repository root:
    python3 scripts/run_classification.py --out runs/classify --l 101
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from qwtopo.analysis import accuracy_table, misclassification_map
from qwtopo.data import (DatasetManifest, NoiseSpec, RegionSpec,
                         add_momentum_noise, generate_dataset, load_arrays,
                         sample_parameters, split)
from qwtopo.learn import (TrainConfig, build_model, evaluate, save_model,
                          train_supervised)
from qwtopo.model import CouplingParams, analytic_gap_boundary
from qwtopo.topo import BZGrid
from qwtopo.walk import DensityProfile, Domain, Lattice


def boundary_distance(p) -> float:
    return min(abs(p.t3 - r) for r in analytic_gap_boundary(p))


def noisy_copy(x: np.ndarray, sigma: float, seed0: int) -> np.ndarray:
    spec = NoiseSpec(gaussian_sigma=sigma)
    out = []
    for i in range(len(x)):
        prof = DensityProfile(domain=Domain.MOMENTUM, width=x.shape[2],
                              height=x.shape[1], channels=x.shape[3],
                              data=np.moveaxis(x[i], -1, 0))
        out.append(np.moveaxis(add_momentum_noise(prof, spec, seed0 + i).data,
                               0, -1))
    return np.stack(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/classify")
    ap.add_argument("--l", type=int, default=101)
    ap.add_argument("--per-class", type=int, default=120)
    ap.add_argument("--region", choices=["whole", "transition"], default="whole")
    ap.add_argument("--arch", choices=["mlp", "cnn"], default="mlp")
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--sigma", type=float, default=0.02)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds_dir = out / "dataset"

    t0 = time.perf_counter()
    if (ds_dir / "manifest.json").exists():
        manifest = DatasetManifest.load(ds_dir / "manifest.json")
        print(f"reusing dataset in {ds_dir} ({len(manifest.samples)} samples)")
    else:
        region = RegionSpec(kind=args.region)
        counts = {0: args.per_class, 1: args.per_class, -1: args.per_class}
        params = sample_parameters(region, counts, CouplingParams(m=0.0),
                                   seed=args.seed, grid=BZGrid(256))
        manifest = generate_dataset(params, Lattice(args.l), Domain.MOMENTUM,
                                    ds_dir, seed=args.seed, region=region)
        print(f"dataset: {len(manifest.samples)} samples "
              f"in {time.perf_counter() - t0:.0f} s")

    clean_metrics, noisy_metrics = [], []
    for seed in (0, 1, 2):
        sp = split(manifest, seed=seed)
        parts = {k: load_arrays(sp, ds_dir, sp.split[k])
                 for k in ("train", "val", "test")}
        classes = sorted(set(int(v) for v in parts["train"][1]))
        model = build_model(args.arch, parts["train"][0].shape[1:], classes,
                            seed=seed, dtype=np.float32)
        cfg = TrainConfig(iters=args.iters, seed=seed)
        t1 = time.perf_counter()
        model, curve, _ = train_supervised(model, cfg, parts["train"][:2],
                                           parts["val"][:2])
        save_model(model, out / f"{args.arch}_seed{seed}.ckpt")
        (out / f"curve_seed{seed}.json").write_text(json.dumps(curve))

        x_test, y_test, test_params = parts["test"]
        m_clean = evaluate(model, x_test, y_test)
        m_noisy = evaluate(model, noisy_copy(x_test, args.sigma, 10_000 * seed),
                           y_test)
        clean_metrics.append(m_clean)
        noisy_metrics.append(m_noisy)
        print(f"seed {seed}: test {m_clean.overall:.3f} "
              f"noisy {m_noisy.overall:.3f} "
              f"({(time.perf_counter() - t1) / 60:.1f} min)")

        outliers = misclassification_map(model.predict(x_test.astype(np.float64)),
                                         y_test, test_params)
        outliers.save(out / f"outliers_seed{seed}.json")
        if outliers.points:
            d_out = np.median([boundary_distance(CouplingParams(
                m=pt["m"], t3=pt["t3"])) for pt in outliers.points])
            wrong = {(pt["m"], pt["t3"]) for pt in outliers.points}
            d_ok = np.median([boundary_distance(p) for p in test_params
                              if (p.m, p.t3) not in wrong])
            print(f"  median |t3 - boundary|: outliers {d_out:.2f} "
                  f"vs correct {d_ok:.2f}")

    table = accuracy_table([
        {"region": args.region, "domain": "momentum (clean)",
         "metrics": clean_metrics},
        {"region": args.region, "domain": f"momentum (sigma={args.sigma})",
         "metrics": noisy_metrics},
    ])
    print(table)
    (out / "accuracy.txt").write_text(table + "\n")
    print(f"artifacts in {out}/")


if __name__ == "__main__":
    main()
