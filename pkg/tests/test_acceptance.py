"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run pytest with -rA to see them all).

The heavyweight criteria (Chern scan, boundary shifts, desk-scale
classification) run at the production settings stated in their docstrings;
expect the full module to take roughly 20-25 minutes on two cores.
"""

import time

import numpy as np
import pytest

from gradcheck import layer_gradient_errors, softmax_cross_entropy_errors
from oracles import position_density_realspace
from qwtopo import analysis, data, learn
from qwtopo.errors import GaplessSystem
from qwtopo.model import CouplingParams, analytic_gap_boundary, band_energy, \
    bloch_vector
from qwtopo.topo import BZGrid, chern_link, chern_quadrature, phase_diagram
from qwtopo.walk import (Domain, Lattice, evolve_momentum, momentum_profile,
                         position_profile, to_position)


def report(criterion: int, name: str, detail: str = ""):
    print(f"ACCEPTANCE {criterion} ({name}): PASS {detail}")


# -------------------------------------------------------------------- 1


def test_criterion_1_chern_oracle_correctness():
    """21x21 (m, t3) grid over [-20, 20]^2: values in {0, +-1, -2}, exact
    t1y sign flip, |quadrature raw - link value| <= 0.01 at n=400."""
    t0 = time.perf_counter()
    axis = np.linspace(-20.0, 20.0, 21)
    grid = BZGrid(400)
    seen = set()
    gapless = 0
    worst = 0.0
    for m in axis:
        for t3 in axis:
            p = CouplingParams(m=float(m), t3=float(t3))
            try:
                link = chern_link(p, grid)
            except GaplessSystem:
                gapless += 1
                continue
            seen.add(link.value)
            flipped = chern_link(p.with_(t1y=-1.0), grid)
            assert flipped.value == -link.value
            quad = chern_quadrature(p, grid)
            worst = max(worst, abs(quad.raw - link.value))
            assert abs(quad.raw - link.value) <= 0.01
    assert seen <= {0, 1, -1, -2}
    assert {0, 1, -1, -2} <= seen  # the window exhibits all four phases
    elapsed = time.perf_counter() - t0
    assert elapsed <= 300.0
    report(1, "chern oracle", f"values={sorted(seen)} gapless_cells={gapless} "
                              f"worst_quad_dev={worst:.2e} {elapsed:.0f}s")


# -------------------------------------------------------------------- 2


def test_criterion_2_walk_vs_brute_force():
    """l in {9, 11, 15} x 5 random gapped parameter sets: closed-form
    position profiles match dense real-space evolution within 1e-6."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for l in (9, 11, 15):
        lat = Lattice(l)
        k = lat.k_axis()
        kx, ky = np.meshgrid(k, k, indexing="ij")
        made = 0
        while made < 5:
            p = CouplingParams(
                m=float(rng.uniform(-20, 20)),
                t1x=float(rng.choice([-1, 1]) * rng.uniform(0.5, 1.5)),
                t1y=float(rng.choice([-1, 1]) * rng.uniform(0.5, 1.5)),
                t2=float(rng.uniform(1.0, 6.0)),
                t3=float(rng.uniform(-10.0, 10.0)),
                eta=float(rng.uniform(0.0, 3.0)),
            )
            if band_energy(*bloch_vector(p, kx, ky)).min() < 0.5:
                continue
            made += 1
            t = float(rng.uniform(0.2, 1.5))
            prof = position_profile(to_position(evolve_momentum(p, lat, t)))
            oracle = position_density_realspace(p, l, t)
            dev = float(np.abs(prof.data[0].astype(np.float64) - oracle).max())
            worst = max(worst, dev)
            assert dev <= 1e-6
    elapsed = time.perf_counter() - t0
    assert elapsed <= 120.0
    report(2, "walk vs brute force", f"worst_dev={worst:.2e} {elapsed:.0f}s")


# -------------------------------------------------------------------- 3


def test_criterion_3_conservation_suite():
    """Per-mode norm identity (1e-12), transform norm (1e-9), profile sum
    (1e-6), t=0 delta at the centre."""
    lat = Lattice(101)
    p = CouplingParams(m=-15.0, t3=5.0, eta=1.0)
    f = evolve_momentum(p, lat, 2.7)
    per_mode = (np.abs(f.up) ** 2 + np.abs(f.down) ** 2) * lat.l**2
    assert np.abs(per_mode - 1.0).max() <= 1e-12

    pos = to_position(f)
    assert abs(pos.norm() - f.norm()) <= 1e-9
    assert abs(f.norm() - 1.0) <= 1e-9

    prof = position_profile(pos)
    assert abs(float(prof.data[0].astype(np.float64).sum()) - 1.0) <= 1e-6
    assert prof.data.min() >= 0.0

    pos0 = to_position(evolve_momentum(p, lat, 0.0))
    prob0 = np.abs(pos0.up) ** 2 + np.abs(pos0.down) ** 2
    assert prob0[lat.centre, lat.centre] == pytest.approx(1.0, abs=1e-9)
    report(3, "conservation suite")


# -------------------------------------------------------------------- 4


def test_criterion_4_boundary_shift_reproduction():
    """Oracle labels on the production grid (7 m-points in [-20,-10),
    28 t3-points in [-20,20], resolution 1.4815): averaged shifts within
    half-resolution (0.7407) of {1, 2, 3} for eta = {3, 6, 9}."""
    t0 = time.perf_counter()
    m_axis = -20.0 + (10.0 / 7.0) * np.arange(7)
    t3_axis = np.linspace(-20.0, 20.0, 28)
    res = float(t3_axis[1] - t3_axis[0])
    assert res == pytest.approx(1.4815, abs=1e-4)
    base = CouplingParams(m=0.0)

    def analytic_ref(m, side):
        return [r for r in analytic_gap_boundary(base.with_(m=float(m)))
                if np.sign(r) == side][0]

    shifts = {}
    for eta in (3.0, 6.0, 9.0):
        pd = phase_diagram(base.with_(eta=eta), m_axis, t3_axis, BZGrid(256))
        crossings, skipped = analysis.boundary_midpoints(m_axis, t3_axis,
                                                         pd.labels)
        est = analysis.boundary_shift(crossings, analytic_ref, res, skipped)
        shifts[eta] = est.shift
        assert abs(est.shift - eta / 3.0) <= res / 2.0
        assert est.half_resolution_uncertainty == pytest.approx(0.7407, abs=1e-4)

    # eta = 0 against its own estimated midpoints vanishes identically
    pd0 = phase_diagram(base, m_axis, t3_axis, BZGrid(256))
    cross0, skip0 = analysis.boundary_midpoints(m_axis, t3_axis, pd0.labels)
    ref0 = {(c.m, c.side): c.midpoint for c in cross0}
    assert analysis.boundary_shift(cross0, ref0, res, skip0).shift == 0.0

    elapsed = time.perf_counter() - t0
    assert elapsed <= 600.0
    report(4, "boundary shift", f"shifts={ {k: round(v, 3) for k, v in shifts.items()} } "
                                f"expected ~{{1, 2, 3}} {elapsed:.0f}s")


# -------------------------------------------------------------------- 5


def _random_layer_cases(rng):
    """>= 20 randomized (constructor, input shape) draws per layer kind."""
    cases = {k: [] for k in ("dense", "conv2d", "separable_conv2d", "avgpool",
                             "elu", "softmax_ce")}
    for _ in range(20):
        n = int(rng.integers(1, 4))
        di = int(rng.integers(2, 12))
        do = int(rng.integers(2, 7))
        cases["dense"].append(
            (lambda r, di=di, do=do: learn.Dense(di, do, r), (n, di)))
        h = int(rng.integers(5, 9))
        w = int(rng.integers(5, 9))
        c = int(rng.integers(1, 4))
        k = int(rng.choice([3, 5]))
        pad = str(rng.choice(["valid", "same"]))
        co = int(rng.integers(1, 4))
        cases["conv2d"].append(
            (lambda r, c=c, co=co, k=k, pad=pad: learn.Conv2D(c, co, k, pad, r),
             (n, h, w, c)))
        cases["separable_conv2d"].append(
            (lambda r, c=c, co=co, k=k, pad=pad:
                learn.SeparableConv2D(c, co, k, pad, r),
             (n, h, w, c)))
        cases["avgpool"].append(
            (lambda r, pad=pad: learn.AvgPool2D(2, pad), (n, h, w, c)))
        cases["elu"].append((lambda r: learn.ELU(), (n, int(rng.integers(2, 10)))))
        cases["softmax_ce"].append((None, (max(n, 2), int(rng.integers(2, 6)))))
    return cases


def test_criterion_5_gradient_suite():
    """Every layer kind passes 64-bit central finite differences
    (< 1e-4 max relative error) on >= 20 random shapes."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    worst = {}
    for kind, case_list in _random_layer_cases(rng).items():
        kind_worst = 0.0
        assert len(case_list) >= 20
        for make, shape in case_list:
            if kind == "softmax_ce":
                logits = rng.standard_normal(shape) * 2.0
                targets = rng.integers(0, shape[1], shape[0])
                err = softmax_cross_entropy_errors(logits, targets)
                kind_worst = max(kind_worst, err)
                assert err < 1e-4
                continue
            layer = make(rng)
            x = rng.standard_normal(shape)
            in_err, par_err = layer_gradient_errors(layer, x, rng)
            kind_worst = max(kind_worst, in_err, par_err)
            assert in_err < 1e-4 and par_err < 1e-4
        worst[kind] = kind_worst
    elapsed = time.perf_counter() - t0
    report(5, "gradient suite",
           f"worst={ {k: f'{v:.1e}' for k, v in worst.items()} } {elapsed:.0f}s")


# -------------------------------------------------------------------- 6


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    """3-class momentum dataset: C in {0, +1, -1}, l=101, 120 per class."""
    out = tmp_path_factory.mktemp("desk_ds")
    region = data.RegionSpec(kind="whole")
    params = data.sample_parameters(region, {0: 120, 1: 120, -1: 120},
                                    CouplingParams(m=0.0), seed=42,
                                    grid=BZGrid(256))
    manifest = data.generate_dataset(params, Lattice(101), Domain.MOMENTUM,
                                     out, seed=42, region=region)
    return out, manifest


def _noisy_test_inputs(x, sigma, seed0):
    spec = data.NoiseSpec(gaussian_sigma=sigma)
    out = []
    for i in range(len(x)):
        prof = data.DensityProfile(
            domain=Domain.MOMENTUM, width=x.shape[2], height=x.shape[1],
            channels=x.shape[3], data=np.moveaxis(x[i], -1, 0))
        out.append(np.moveaxis(
            data.add_momentum_noise(prof, spec, seed0 + i).data, 0, -1))
    return np.stack(out)


def test_criterion_6_desk_scale_classification(desk_dataset):
    """Table-S1 MLP at TrainConfig defaults on the desk-scale dataset:
    mean test accuracy >= 0.85 over 3 split seeds, and the accuracy drop
    under sigma = 0.02 Gaussian noise is <= 0.05."""
    t0 = time.perf_counter()
    ds_dir, manifest = desk_dataset
    clean, noisy = [], []
    for seed in (0, 1, 2):
        sp = data.split(manifest, seed=seed)
        parts = {k: data.load_arrays(sp, ds_dir, sp.split[k])
                 for k in ("train", "val", "test")}
        classes = sorted(set(int(v) for v in parts["train"][1]))
        assert classes == [-1, 0, 1]
        model = learn.build_mlp(parts["train"][0].shape[1:], classes,
                                seed=seed, dtype=np.float32)
        cfg = learn.TrainConfig(seed=seed)  # batch 64, 1000 iters, lr 1e-4
        model, curve, _ = learn.train_supervised(model, cfg,
                                                 parts["train"][:2],
                                                 parts["val"][:2])
        assert curve["train_loss"][-1] < curve["train_loss"][0]
        x_test, y_test, test_params = parts["test"]
        m_clean = learn.evaluate(model, x_test, y_test)
        m_noisy = learn.evaluate(
            model, _noisy_test_inputs(x_test, 0.02, 10_000 * (seed + 1)), y_test)
        clean.append(m_clean.overall)
        noisy.append(m_noisy.overall)

        outliers = analysis.misclassification_map(
            model.predict(x_test.astype(np.float64)), y_test, test_params)
        if outliers.points:  # informational: outliers hug the boundaries
            dist = np.median([min(abs(pt["t3"] - r) for r in
                                  analytic_gap_boundary(CouplingParams(
                                      m=pt["m"], t3=pt["t3"])))
                              for pt in outliers.points])
            print(f"  seed {seed}: {len(outliers.points)} outliers, "
                  f"median boundary distance {dist:.2f}")

    mean_clean = float(np.mean(clean))
    mean_noisy = float(np.mean(noisy))
    assert mean_clean >= 0.85
    assert mean_clean - mean_noisy <= 0.05
    elapsed = time.perf_counter() - t0
    assert elapsed <= 1800.0
    report(6, "desk-scale classification",
           f"clean={mean_clean:.3f} noisy={mean_noisy:.3f} "
           f"drop={mean_clean - mean_noisy:+.3f} {elapsed / 60:.1f}min")


# -------------------------------------------------------------------- 7


def test_criterion_7_som_suite():
    """Time-constant formula, three-Gaussian purity >= 0.9, lr=0 identity,
    radius -> 0+ BMU-only updates."""
    tau = learn.som_time_constant(1000, 128.0)
    assert tau == 1000.0 / np.log(128.0)
    assert round(tau, 1) == 206.1

    rng = np.random.default_rng(77)
    centres = np.zeros((3, 32))
    centres[0, 0] = centres[1, 1] = centres[2, 2] = 8.0
    feats = np.concatenate([c + rng.normal(0, 0.4, size=(60, 32))
                            for c in centres])
    labels = np.repeat([0, 1, 2], 60)
    order = rng.permutation(len(feats))
    feats, labels = feats[order], labels[order]
    fitted = learn.som_fit(feats, learn.som_init(12, 12, 32, seed=1,
                                                 radius0=6.0,
                                                 iters_total=1000), seed=2)
    cells = [learn.som_assign(fitted, f) for f in feats]
    votes = {}
    for cell, lab in zip(cells, labels):
        votes.setdefault(cell, {}).setdefault(int(lab), 0)
        votes[cell][int(lab)] += 1
    majority = {cell: max(v, key=v.get) for cell, v in votes.items()}
    purity = float(np.mean([majority[c] == l for c, l in zip(cells, labels)]))
    assert purity >= 0.9

    state = learn.som_init(6, 6, 4, seed=3)
    before = state.codebook.copy()
    learn.som_step(state.codebook, np.ones(4), lr=0.0, radius=2.0)
    assert np.array_equal(state.codebook, before)
    r, c = learn.som_step(state.codebook, np.ones(4), lr=0.5, radius=1e-9)
    changed = np.any(state.codebook != before, axis=2)
    assert changed[r, c] and changed.sum() == 1
    report(7, "SOM suite", f"tau={tau:.3f} purity={purity:.3f}")


# -------------------------------------------------------------------- 8


def test_criterion_8_pca_suite():
    """Rank-1 ratio = 1; ratios match a direct covariance
    eigendecomposition to 1e-8 on random 200x32 matrices."""
    rng = np.random.default_rng(88)
    rows = np.outer(rng.standard_normal(40), rng.standard_normal(12))
    _, ratios, _ = learn.pca(rows, 1)
    assert ratios[0] == pytest.approx(1.0, abs=1e-9)

    worst = 0.0
    for _ in range(5):
        rows = rng.standard_normal((200, 32)) @ np.diag(rng.uniform(0.1, 3, 32))
        _, ratios, _ = learn.pca(rows, 8)
        x = rows - rows.mean(axis=0)
        evals = np.linalg.eigvalsh(x.T @ x / 199)[::-1]
        dev = float(np.abs(ratios - evals[:8] / evals.sum()).max())
        worst = max(worst, dev)
        assert dev <= 1e-8
    report(8, "PCA suite", f"worst_ratio_dev={worst:.1e}")


# -------------------------------------------------------------------- 9


def test_criterion_9_format_round_trips(tmp_path):
    """Sample files, manifests, and both checkpoint formats round-trip
    bitwise; corrupted headers raise the typed errors."""
    from qwtopo.errors import BadMagic, TruncatedFile, VersionMismatch

    # sample file
    prof = momentum_profile(evolve_momentum(CouplingParams(m=-15.0, t3=3.0),
                                            Lattice(21), 1.1))
    prof.label = 0
    sample = data.Sample(prof, 0, prof.params, 1.1, seed=77)
    p1 = tmp_path / "a.qwp"
    data.write_sample(sample, p1)
    back = data.read_sample(p1)
    p2 = tmp_path / "b.qwp"
    data.write_sample(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    blob = p1.read_bytes()
    (tmp_path / "m.qwp").write_bytes(b"WRONGMAG" + blob[8:])
    with pytest.raises(BadMagic):
        data.read_sample(tmp_path / "m.qwp")
    (tmp_path / "t.qwp").write_bytes(blob[:64])
    with pytest.raises(TruncatedFile):
        data.read_sample(tmp_path / "t.qwp")
    (tmp_path / "v.qwp").write_bytes(blob[:8] + (9).to_bytes(4, "little")
                                     + blob[12:])
    with pytest.raises(VersionMismatch):
        data.read_sample(tmp_path / "v.qwp")

    # manifest
    manifest = data.DatasetManifest(
        samples=[{"file": "a.qwp", "label": 0,
                  "params": prof.params.to_dict(), "seed": 77}],
        region=data.RegionSpec(), lattice_l=21, noise=data.NoiseSpec(),
        global_seed=1)
    mpath = tmp_path / "manifest.json"
    manifest.save(mpath)
    assert data.DatasetManifest.load(mpath).to_json() == manifest.to_json()

    # model checkpoint
    model = learn.build_vanilla_cnn((21, 21, 4), [0, 1, -1], seed=5)
    c1 = tmp_path / "model.ckpt"
    learn.save_model(model, c1)
    loaded = learn.load_model(c1)
    c2 = tmp_path / "model2.ckpt"
    learn.save_model(loaded, c2)
    assert c1.read_bytes() == c2.read_bytes()
    for a, b in zip(model.params(), loaded.params(), strict=True):
        assert np.array_equal(a, b)

    # SOM checkpoint
    som = learn.som_init(8, 9, 16, seed=6)
    s1 = tmp_path / "som.ckpt"
    learn.save_som(som, s1)
    loaded = learn.load_som(s1)
    s2 = tmp_path / "som2.ckpt"
    learn.save_som(loaded, s2)
    assert s1.read_bytes() == s2.read_bytes()
    sblob = s1.read_bytes()
    (tmp_path / "sm.ckpt").write_bytes(b"XXXXXXXX" + sblob[8:])
    with pytest.raises(BadMagic):
        learn.load_som(tmp_path / "sm.ckpt")
    report(9, "format round-trips")
