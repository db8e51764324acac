"""Deterministic mini-batch training of deferral models.

All randomness (initialisation and shuffling) flows from ``TrainConfig.seed``
through one ``numpy.random.Generator``; with the fixed reduction order of the
batch computations the same dataset and config give bit-identical weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CostSpec, DeferralError, is_binary
from .data import DeferralDataset
from .losses import LossSpec
from .metrics import evaluate_scores
from .models import LinearDeferralModel, MLPDeferralModel


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SGD:
    lr: float = 0.01
    momentum: float = 0.0
    name = "sgd"

    def state(self, size):
        return {"v": np.zeros(size)}

    def step(self, params, grad, st, t):
        st["v"] = self.momentum * st["v"] + grad
        return params - self.lr * st["v"]


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    name = "adam"

    def state(self, size):
        return {"m": np.zeros(size), "v": np.zeros(size)}

    def step(self, params, grad, st, t):
        st["m"] = self.beta1 * st["m"] + (1.0 - self.beta1) * grad
        st["v"] = self.beta2 * st["v"] + (1.0 - self.beta2) * grad * grad
        mhat = st["m"] / (1.0 - self.beta1**t)
        vhat = st["v"] / (1.0 - self.beta2**t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec = LossSpec()
    cost: CostSpec | None = None
    optimizer: SGD | Adam = Adam()
    epochs: int = 50
    batch_size: int = 128
    seed: int = 0
    init_std: float = 0.01
    hidden: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise DeferralError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DeferralError("batch_size must be >= 1")
        if not self.optimizer.lr > 0:
            raise DeferralError("learning rate must be > 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_system_acc: float
    val_coverage: float


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_system_acc", "val_coverage"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.17g}", f"{r.val_system_acc:.17g}",
                            f"{r.val_coverage:.17g}"])


def batch_loss_and_grad(model, X, y, c, loss: LossSpec):
    """Mean surrogate loss over a batch and its gradient in parameter space."""
    scores = model.scores(X)
    values = loss.value(scores, y, c)
    g_scores = loss.gradient(scores, y, c) / len(y)
    return float(np.mean(values)), model.backward(X, g_scores)


def _new_model(dataset, config, rng):
    if config.hidden:
        return MLPDeferralModel.init(dataset.n, dataset.d, config.hidden, rng, config.init_std)
    return LinearDeferralModel.init(dataset.n, dataset.d, rng, config.init_std)


def train(dataset: DeferralDataset, config: TrainConfig):
    """Train on the ``train`` split; keep the epoch with best validation system accuracy.

    Ties go to the later epoch.  Returns ``(model, history)``.
    """
    for name in ("train", "val"):
        if name not in dataset.splits or len(dataset.splits[name]) == 0:
            raise DeferralError(f"{name} split is empty")
    Xtr, ytr, ctr = dataset.part("train", config.cost)
    Xva, yva, cva = dataset.part("val", config.cost)
    if config.loss.binary_only and not (is_binary(ctr) and is_binary(cva)):
        raise DeferralError(f"{config.loss.name} needs expert-error (binary) costs")

    rng = np.random.default_rng(config.seed)
    model = _new_model(dataset, config, rng)
    params = model.get_params()
    opt = config.optimizer
    state = opt.state(params.size)
    history = History()
    best_acc, best_params = -np.inf, params.copy()
    m, t = len(ytr), 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(m)
        total = 0.0
        for start in range(0, m, config.batch_size):
            idx = order[start : start + config.batch_size]
            model.set_params(params)
            value, grad = batch_loss_and_grad(model, Xtr[idx], ytr[idx], ctr[idx], config.loss)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}; "
                    f"train rows {idx.tolist()}"
                )
            t += 1
            params = opt.step(params, grad, state, t)
            total += value * len(idx)
        model.set_params(params)
        rep = evaluate_scores(model.scores(Xva), yva, cva)
        history.records.append(EpochRecord(epoch, total / m, rep.system_accuracy, rep.coverage))
        if rep.system_accuracy >= best_acc:
            best_acc, best_params = rep.system_accuracy, params.copy()
            history.best_epoch = epoch
    model.set_params(best_params)
    return model, history


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    coords_checked: int
    tolerance: float
    passed: bool
    worst_coord: int


def relative_error(analytic, numeric, floor: float = 1e-3) -> float:
    """``max|a - f| / max(max|a|, max|f|, floor)`` over the whole vector."""
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(numeric, dtype=float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(f))), floor)
    return float(np.max(np.abs(a - f))) / scale


def grad_check(
    model,
    X,
    y,
    c,
    loss: LossSpec,
    tolerance: float = 1e-5,
    step: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare the analytic batch gradient with central finite differences.

    Checks every parameter when there are at most ``max_coords`` of them, else
    a random subset of ``max_coords``.  Passes when the worst relative error
    is strictly below ``tolerance``.
    """
    if len(y) == 0:
        raise DeferralError("grad_check needs a non-empty sample")
    base = model.get_params()
    _, analytic = batch_loss_and_grad(model, X, y, c, loss)
    if base.size <= max_coords:
        coords = np.arange(base.size)
    else:
        coords = np.sort(np.random.default_rng(seed).choice(base.size, max_coords, replace=False))
    probe = model.copy()
    numeric = np.empty(coords.size)
    for k, j in enumerate(coords):
        up, down = base.copy(), base.copy()
        up[j] += step
        down[j] -= step
        probe.set_params(up)
        f_up = float(np.mean(loss.value(probe.scores(X), y, c)))
        probe.set_params(down)
        f_down = float(np.mean(loss.value(probe.scores(X), y, c)))
        numeric[k] = (f_up - f_down) / (2 * step)
    max_err = relative_error(analytic[coords], numeric)
    worst = int(coords[np.argmax(np.abs(analytic[coords] - numeric))])
    return GradCheckReport(max_err, int(coords.size), tolerance, max_err < tolerance, worst)
