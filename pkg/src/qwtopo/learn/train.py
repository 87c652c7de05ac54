"""Supervised training loop, Adam optimizer, and evaluation metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NonFiniteLoss
from .network import NetworkModel

__all__ = [
    "TrainConfig", "Adam", "Metrics", "cross_entropy",
    "train_supervised", "evaluate",
]


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 64
    iters: int = 1000
    lr: float = 1e-4
    lr_decay: float = 0.9
    decay_every: int = 100
    seed: int = 0
    val_every: int = 50

    def __post_init__(self):
        if min(self.batch, self.iters, self.decay_every, self.val_every) <= 0:
            raise ValueError("batch/iters/decay_every/val_every must be positive")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("lr must be > 0 and lr_decay in (0, 1]")

    def lr_at(self, iteration: int) -> float:
        return self.lr * self.lr_decay ** (iteration // self.decay_every)

    def to_dict(self) -> dict:
        return {"batch": self.batch, "iters": self.iters, "lr": self.lr,
                "lr_decay": self.lr_decay, "decay_every": self.decay_every,
                "seed": self.seed, "val_every": self.val_every}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        base = cls()
        return cls(batch=int(d.get("batch", base.batch)),
                   iters=int(d.get("iters", base.iters)),
                   lr=float(d.get("lr", base.lr)),
                   lr_decay=float(d.get("lr_decay", base.lr_decay)),
                   decay_every=int(d.get("decay_every", base.decay_every)),
                   seed=int(d.get("seed", base.seed)),
                   val_every=int(d.get("val_every", base.val_every)))


class Adam:
    """Adam update with in-place moment buffers and a reused scratch array
    per parameter (the first dense layer holds ~20M weights, so per-step
    temporaries would dominate the iteration time)."""

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.scratch = [np.empty_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = lr * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for p, g, m, v, s in zip(self.params, grads, self.m, self.v,
                                 self.scratch, strict=True):
            m *= b1
            np.multiply(g, 1.0 - b1, out=s)
            m += s
            v *= b2
            np.multiply(g, g, out=s)
            s *= 1.0 - b2
            v += s
            np.sqrt(v, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= corr
            p -= s


def cross_entropy(logits: np.ndarray, target_idx: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. logits ((p - onehot)/B)."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    n = logits.shape[0]
    loss = -float(logp[np.arange(n), target_idx].mean())
    grad = np.exp(logp)
    grad[np.arange(n), target_idx] -= 1.0
    return loss, grad / n


@dataclass
class Metrics:
    """Per-class and overall accuracy with the confusion matrix behind them."""

    classes: list[int]
    confusion: np.ndarray  # rows = true class, cols = predicted
    per_class_accuracy: dict[int, float]
    overall: float

    @classmethod
    def from_predictions(cls, y_true, y_pred, classes) -> "Metrics":
        classes = list(classes)
        index = {c: i for i, c in enumerate(classes)}
        conf = np.zeros((len(classes), len(classes)), dtype=int)
        for t, p in zip(np.asarray(y_true), np.asarray(y_pred), strict=True):
            conf[index[int(t)], index[int(p)]] += 1
        per = {}
        for c in classes:
            row = conf[index[c]]
            per[c] = float(row[index[c]] / row.sum()) if row.sum() else float("nan")
        total = conf.sum()
        overall = float(np.trace(conf) / total) if total else float("nan")
        return cls(classes=classes, confusion=conf,
                   per_class_accuracy=per, overall=overall)

    def overall_excluding(self, drop: set[int]) -> float:
        """Overall accuracy with some true classes removed (Table-style dagger)."""
        keep = [i for i, c in enumerate(self.classes) if c not in drop]
        sub = self.confusion[keep]
        total = sub.sum()
        correct = sum(self.confusion[i, i] for i in keep)
        return float(correct / total) if total else float("nan")

    def to_dict(self) -> dict:
        return {"classes": self.classes,
                "confusion": self.confusion.tolist(),
                "per_class_accuracy": {str(k): v for k, v in
                                       self.per_class_accuracy.items()},
                "overall": self.overall}

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _label_indices(y, classes) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.asarray([index[int(v)] for v in y])
    except KeyError as e:  # pragma: no cover - config error
        raise ValueError(f"label {e} not among model classes {classes}") from None


def train_supervised(model: NetworkModel, cfg: TrainConfig,
                     train: tuple[np.ndarray, np.ndarray],
                     val: tuple[np.ndarray, np.ndarray]):
    """Minibatch cross-entropy training with periodic validation.

    Validation runs every cfg.val_every iterations; the parameters with the
    best validation accuracy (ties: earliest) are restored at the end.
    Returns (model, curve, Metrics of the returned model on the val set).
    """
    x_train, y_train = train
    x_val, y_val = val
    # compute in the model's parameter dtype (float32 models train ~2x faster)
    params = model.params()
    dtype = params[0].dtype if params else np.float64
    x_train = np.asarray(x_train, dtype=dtype)
    x_val = np.asarray(x_val, dtype=dtype)
    yt = _label_indices(y_train, model.classes)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params())
    n = len(x_train)
    curve = {"iters": [], "train_loss": [], "lr": [],
             "val_iters": [], "val_loss": [], "val_accuracy": []}
    best = (-1.0, None)

    def run_validation(it):
        logits = []
        for i in range(0, len(x_val), cfg.batch):
            logits.append(model.forward_logits(x_val[i:i + cfg.batch]))
        logits = np.concatenate(logits, axis=0)
        vloss, _ = cross_entropy(logits, _label_indices(y_val, model.classes))
        pred = np.asarray(model.classes)[np.argmax(logits, axis=1)]
        acc = float(np.mean(pred == np.asarray(y_val)))
        curve["val_iters"].append(it)
        curve["val_loss"].append(vloss)
        curve["val_accuracy"].append(acc)
        return acc

    for it in range(1, cfg.iters + 1):
        idx = rng.choice(n, size=cfg.batch, replace=n < cfg.batch)
        logits = model.forward_logits(x_train[idx])
        loss, dlogits = cross_entropy(logits, yt[idx])
        if not np.isfinite(loss):
            raise NonFiniteLoss(it)
        model.zero_grad()
        model.backward_from_logits(dlogits)
        lr = cfg.lr_at(it - 1)
        opt.step(model.grads(), lr)
        curve["iters"].append(it)
        curve["train_loss"].append(loss)
        curve["lr"].append(lr)
        if it % cfg.val_every == 0 or it == cfg.iters:
            acc = run_validation(it)
            if acc > best[0]:
                best = (acc, model.copy_params())

    if best[1] is not None:
        model.load_params(best[1])
    metrics = evaluate(model, x_val, y_val)
    return model, curve, metrics


def evaluate(model: NetworkModel, x: np.ndarray, y) -> Metrics:
    """Argmax-prediction metrics of a model on a labeled set."""
    from ..errors import EmptyInput
    if len(x) == 0:
        raise EmptyInput("evaluation set is empty")
    pred = model.predict(np.asarray(x, dtype=np.float64))
    return Metrics.from_predictions(np.asarray(y), pred, model.classes)
