import numpy as np
import pytest

from qwtopo.errors import NonFiniteLoss, ShapeMismatch
from qwtopo.learn import (Metrics, TrainConfig, build_dnn6, build_mlp,
                          build_model, build_vanilla_cnn, evaluate,
                          feature_vectors, load_model, save_model,
                          train_supervised)


def _separable_toy(n_per_class=40, seed=0):
    """Two classes of 12x12x1 images with disjoint bright quadrants."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, (r, c) in ((0, (0, 0)), (1, (6, 6))):
        for _ in range(n_per_class):
            img = rng.uniform(0, 0.1, size=(12, 12, 1))
            img[r:r + 6, c:c + 6, 0] += 1.0
            xs.append(img)
            ys.append(label)
    idx = rng.permutation(len(xs))
    x = np.stack(xs)[idx]
    y = np.asarray(ys)[idx]
    return x, y


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    cfg = TrainConfig()
    assert (cfg.batch, cfg.iters, cfg.lr, cfg.lr_decay, cfg.decay_every) == \
        (64, 1000, 1e-4, 0.9, 100)
    assert cfg.lr_at(0) == 1e-4
    assert cfg.lr_at(99) == 1e-4
    assert cfg.lr_at(100) == pytest.approx(9e-5)
    assert cfg.lr_at(250) == pytest.approx(1e-4 * 0.81)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_linearly_separable_toy_reaches_high_accuracy():
    x, y = _separable_toy()
    model = build_mlp((12, 12, 1), [0, 1], seed=0)
    cfg = TrainConfig(batch=16, iters=120, lr=1e-3, seed=0, val_every=20)
    model, curve, val = train_supervised(model, cfg, (x[:60], y[:60]),
                                         (x[60:], y[60:]))
    assert val.overall >= 0.99
    assert curve["train_loss"][-1] < curve["train_loss"][0]


def test_training_deterministic():
    x, y = _separable_toy(20, seed=3)
    results = []
    for _ in range(2):
        model = build_mlp((12, 12, 1), [0, 1], seed=7)
        cfg = TrainConfig(batch=8, iters=30, lr=1e-3, seed=7, val_every=10)
        _, curve, _ = train_supervised(model, cfg, (x[:30], y[:30]),
                                       (x[30:], y[30:]))
        results.append(curve["train_loss"])
    assert results[0] == results[1]


def test_non_finite_loss_aborts_with_iteration():
    # a corrupt (NaN) sample must stop training with the iteration index
    x, y = _separable_toy(10, seed=1)
    x[3, 0, 0, 0] = np.nan
    model = build_mlp((12, 12, 1), [0, 1], seed=0)
    cfg = TrainConfig(batch=20, iters=50, lr=1e-3, seed=0, val_every=50)
    with pytest.raises(NonFiniteLoss) as info:
        train_supervised(model, cfg, (x, y), (x, y))
    assert info.value.iteration >= 1


def test_metrics_perfect_and_constant():
    y = np.array([-2, -1, 0, 1, 2] * 4)
    perfect = Metrics.from_predictions(y, y, [-2, -1, 0, 1, 2])
    assert perfect.overall == 1.0
    assert all(v == 1.0 for v in perfect.per_class_accuracy.values())

    constant = Metrics.from_predictions(y, np.zeros_like(y), [-2, -1, 0, 1, 2])
    assert constant.overall == pytest.approx(0.2)
    assert constant.per_class_accuracy[0] == 1.0
    assert constant.per_class_accuracy[1] == 0.0
    # confusion rows sum to per-class test counts
    assert constant.confusion.sum(axis=1).tolist() == [4, 4, 4, 4, 4]


def test_metrics_overall_excluding():
    y_true = np.array([-2, -2, 2, 2, 0, 0, 1, 1])
    y_pred = np.array([0, -2, 0, 0, 0, 0, 1, 0])
    m = Metrics.from_predictions(y_true, y_pred, [-2, 0, 1, 2])
    kept_correct = 3  # 0: both right, 1: one right
    assert m.overall_excluding({-2, 2}) == pytest.approx(kept_correct / 4)
    assert m.overall == pytest.approx(4 / 8)


def test_evaluate_matches_predict():
    x, y = _separable_toy(10, seed=2)
    model = build_mlp((12, 12, 1), [0, 1], seed=1)
    metrics = evaluate(model, x, y)
    pred = model.predict(x.astype(np.float64))
    assert metrics.overall == pytest.approx(np.mean(pred == y))


def test_model_checkpoint_round_trip(tmp_path):
    x, _ = _separable_toy(4, seed=4)
    for arch, build in (("mlp", build_mlp), ("cnn", build_vanilla_cnn)):
        model = build((12, 12, 1), [0, 1, 5], seed=3)
        path = tmp_path / f"{arch}.ckpt"
        save_model(model, path)
        back = load_model(path)
        assert back.arch == model.arch
        assert back.classes == [0, 1, 5]
        assert back.input_shape == (12, 12, 1)
        for a, b in zip(model.params(), back.params(), strict=True):
            assert np.array_equal(a, b)
        assert np.array_equal(model.forward(x), back.forward(x))
        # write -> read -> write is byte-identical
        path2 = tmp_path / f"{arch}2.ckpt"
        save_model(back, path2)
        assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_error_paths(tmp_path):
    from qwtopo.errors import BadMagic, TruncatedFile, VersionMismatch
    model = build_mlp((12, 12, 1), [0, 1], seed=0)
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    blob = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(BadMagic):
        load_model(bad)
    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(blob[:100])
    with pytest.raises(TruncatedFile):
        load_model(trunc)
    ver = tmp_path / "ver.ckpt"
    ver.write_bytes(blob[:8] + (7).to_bytes(4, "little") + blob[12:])
    with pytest.raises(VersionMismatch):
        load_model(ver)


def test_vanilla_cnn_shapes():
    model = build_vanilla_cnn((101, 101, 4), [0, 1, -1], seed=0)
    x = np.random.default_rng(0).standard_normal((2, 101, 101, 4))
    probs = model.forward(x)
    assert probs.shape == (2, 3)
    assert np.abs(probs.sum(axis=1) - 1).max() <= 1e-9


def test_dnn6_constructible_and_composes():
    model = build_dnn6((599, 599, 4), [0, 1, -1, 2, -2], seed=0)
    kinds = [l.kind for l in model.layers]
    assert kinds.count("separable_conv2d") == 6
    assert kinds.count("conv2d") == 6
    x = np.random.default_rng(1).standard_normal((1, 599, 599, 4))
    probs = model.forward(x)
    assert probs.shape == (1, 5)
    with pytest.raises(ShapeMismatch):
        build_dnn6((101, 101, 4), [0, 1], seed=0)


def test_build_model_dispatch():
    assert build_model("mlp", (12, 12, 1), [0, 1]).arch == "mlp"
    with pytest.raises(ValueError):
        build_model("vgg", (12, 12, 1), [0, 1])


def test_feature_vectors_from_last_conv():
    model = build_vanilla_cnn((24, 24, 2), [0, 1], seed=0)
    x = np.random.default_rng(2).standard_normal((5, 24, 24, 2))
    feats = feature_vectors(model, x)
    assert feats.shape == (5, 64)  # last conv has 64 filters
    mlp = build_mlp((12, 12, 1), [0, 1], seed=0)
    with pytest.raises(ValueError):
        feature_vectors(mlp, np.zeros((1, 12, 12, 1)))
