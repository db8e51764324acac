"""System accuracy, coverage and accepted accuracy of a deferral model."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import CostSpec, DeferralError
from .losses import deferral_loss


@dataclass
class MetricsReport:
    """Evaluation summary.

    ``accepted_accuracy`` is the accuracy among non-deferred predictions and
    is ``None`` when every example is deferred.
    """

    system_accuracy: float
    accepted_accuracy: float | None
    coverage: float
    mean_deferral_loss: float
    total: int
    deferred: int
    accepted: int
    accepted_correct: int
    deferred_cost: float
    seed: int | None = None
    loss: str | None = None
    split: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def reconstructed_loss(self) -> float:
        """Mean deferral loss rebuilt from accepted errors plus deferred cost mass."""
        acc = 0.0 if self.accepted_accuracy is None else self.accepted_accuracy
        return ((1.0 - acc) * self.accepted + self.deferred_cost) / self.total


def evaluate_scores(scores, y, c, **labels) -> MetricsReport:
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y)
    c = np.asarray(c, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != y.shape[0] or c.shape != y.shape:
        raise DeferralError("scores, labels and costs disagree in shape")
    total = y.shape[0]
    if total == 0:
        raise DeferralError("cannot evaluate an empty split")
    n = scores.shape[1] - 1
    losses = deferral_loss(scores, y, c)
    pred = np.argmax(scores, axis=1) + 1
    accepted_mask = pred <= n
    accepted = int(accepted_mask.sum())
    accepted_correct = int(np.sum(accepted_mask & (pred == y)))
    mean_loss = float(np.mean(losses))
    return MetricsReport(
        system_accuracy=1.0 - mean_loss,
        accepted_accuracy=accepted_correct / accepted if accepted else None,
        coverage=accepted / total,
        mean_deferral_loss=mean_loss,
        total=total,
        deferred=total - accepted,
        accepted=accepted,
        accepted_correct=accepted_correct,
        deferred_cost=float(np.sum(c[~accepted_mask])),
        **labels,
    )


def cmd_evaluate(model, dataset, split: str = "test", cost: CostSpec | None = None, **labels):
    """Evaluate ``model`` on one split of ``dataset``."""
    if model.d != dataset.d or model.n != dataset.n:
        raise DeferralError(
            f"model is (n={model.n}, d={model.d}) but data is (n={dataset.n}, d={dataset.d})"
        )
    X, y, c = dataset.part(split, cost)
    return evaluate_scores(model.scores(X), y, c, split=split, **labels)
