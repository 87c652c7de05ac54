#!/usr/bin/env python3
"""Unsupervised memory demo: CNN features -> SOM -> PCA colour map.

Trains the vanilla CNN briefly on a small momentum dataset, pools the last
convolutional feature map into per-sample vectors, fits the self-organizing
memory on them, and exports the PCA-to-RGB rendering of the codebook plus
the explained-variance ratios and the BMU coordinates of a few samples per
class (the cluster-probe readout).
"""

import argparse
import json
from pathlib import Path

import numpy as np

from qwtopo.data import (DatasetManifest, RegionSpec, generate_dataset,
                         load_arrays, sample_parameters, split)
from qwtopo.images import som_rgb, write_ppm
from qwtopo.learn import (TrainConfig, build_vanilla_cnn, feature_vectors,
                          pca, save_som, som_assign, som_fit, som_init,
                          train_supervised)
from qwtopo.model import CouplingParams
from qwtopo.topo import BZGrid
from qwtopo.walk import Domain, Lattice


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/memory")
    ap.add_argument("--l", type=int, default=61)
    ap.add_argument("--per-class", type=int, default=40)
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--som-side", type=int, default=32)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds_dir = out / "dataset"
    if (ds_dir / "manifest.json").exists():
        manifest = DatasetManifest.load(ds_dir / "manifest.json")
    else:
        region = RegionSpec(kind="whole")
        counts = {0: args.per_class, 1: args.per_class, -1: args.per_class}
        params = sample_parameters(region, counts, CouplingParams(m=0.0),
                                   seed=args.seed, grid=BZGrid(128))
        manifest = generate_dataset(params, Lattice(args.l), Domain.MOMENTUM,
                                    ds_dir, seed=args.seed, region=region)
    manifest = split(manifest, seed=0)

    parts = {k: load_arrays(manifest, ds_dir, manifest.split[k])
             for k in ("train", "val")}
    classes = sorted(set(int(v) for v in parts["train"][1]))
    model = build_vanilla_cnn(parts["train"][0].shape[1:], classes,
                              seed=args.seed, dtype=np.float32)
    cfg = TrainConfig(batch=32, iters=args.iters, lr=1e-4, seed=args.seed)
    model, _, val_metrics = train_supervised(model, cfg, parts["train"][:2],
                                             parts["val"][:2])
    print(f"CNN val accuracy: {val_metrics.overall:.3f}")

    x_train, y_train, _ = parts["train"]
    feats = feature_vectors(model, x_train.astype(np.float32))
    state = som_init(args.som_side, args.som_side, feats.shape[1],
                     seed=args.seed, radius0=args.som_side / 2.0,
                     iters_total=1000)
    fitted = som_fit(feats, state, seed=args.seed)
    save_som(fitted, out / "som.ckpt")
    write_ppm(out / "memory_rgb.ppm", som_rgb(fitted))

    _, ratios, _ = pca(fitted.codebook.reshape(-1, fitted.dim), 3)
    probes = {}
    for c in classes:
        idx = np.nonzero(y_train == c)[0][:5]
        probes[str(c)] = [som_assign(fitted, feats[i]) for i in idx]
    (out / "memory.json").write_text(json.dumps({
        "explained_variance_ratio_top3": [float(r) for r in ratios],
        "cumulative_top3": float(sum(ratios)),
        "class_probe_bmus": probes,
    }, indent=2))
    print(f"top-3 PCA variance: {sum(ratios):.3f}; probes: {probes}")
    print(f"artifacts in {out}/")


if __name__ == "__main__":
    main()
