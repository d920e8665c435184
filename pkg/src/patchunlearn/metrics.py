"""Accuracy deltas and the loss-threshold membership-inference audit.

All deltas follow the before-minus-after sign convention: a large drop on
the unlearned data is a large positive delta, a healthy model keeps the
test/retained deltas near zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .patching import logits_of


@dataclass
class MetricsDelta:
    """Before/after accuracies (percent) and their before-minus-after deltas."""

    a_tes_before: float
    a_tes_after: float
    a_res_before: float
    a_res_after: float
    a_u_before: float
    a_u_after: float
    # class-mode extras; None outside class mode
    a_tes_u_before: float | None = None
    a_tes_u_after: float | None = None
    a_tes_r_before: float | None = None
    a_tes_r_after: float | None = None
    a_r_before: float | None = None
    a_r_after: float | None = None

    @property
    def delta_a_tes(self) -> float:
        return self.a_tes_before - self.a_tes_after

    @property
    def delta_a_res(self) -> float:
        return self.a_res_before - self.a_res_after

    @property
    def delta_a_u(self) -> float:
        return self.a_u_before - self.a_u_after

    def rows(self) -> list[tuple[str, float, float, float]]:
        out = [
            ("A_tes", self.a_tes_before, self.a_tes_after, self.delta_a_tes),
            ("A_res", self.a_res_before, self.a_res_after, self.delta_a_res),
            ("A_u", self.a_u_before, self.a_u_after, self.delta_a_u),
        ]
        extras = [
            ("A_tes_u", self.a_tes_u_before, self.a_tes_u_after),
            ("A_tes_r", self.a_tes_r_before, self.a_tes_r_after),
            ("A_r", self.a_r_before, self.a_r_after),
        ]
        for name, before, after in extras:
            if before is not None:
                out.append((name, before, after, before - after))
        return out


def accuracy(model, dataset: Dataset) -> float:
    """Percent of correct predictions."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    preds = np.argmax(logits_of(model, dataset.features), axis=-1)
    return 100.0 * float(np.mean(preds == dataset.labels))


def unlearn_metrics(before, after, d_u: Dataset, d_r: Dataset,
                    test: Dataset, y_unlearn: int | None = None,
                    class_split: bool = False) -> MetricsDelta:
    """All table metrics for an unlearning run; class mode additionally
    splits the test and retained sets by the unlearned label."""
    delta = MetricsDelta(
        a_tes_before=accuracy(before, test),
        a_tes_after=accuracy(after, test),
        a_res_before=accuracy(before, d_r),
        a_res_after=accuracy(after, d_r),
        a_u_before=accuracy(before, d_u),
        a_u_after=accuracy(after, d_u),
    )
    if class_split:
        if y_unlearn is None:
            raise ValueError("class split requested without y_unlearn")
        tes_u = test.subset(np.nonzero(test.labels == y_unlearn)[0])
        tes_r = test.subset(np.nonzero(test.labels != y_unlearn)[0])
        delta.a_tes_u_before = accuracy(before, tes_u)
        delta.a_tes_u_after = accuracy(after, tes_u)
        delta.a_tes_r_before = accuracy(before, tes_r)
        delta.a_tes_r_after = accuracy(after, tes_r)
        delta.a_r_before = accuracy(before, d_r)
        delta.a_r_after = accuracy(after, d_r)
    return delta


def cross_entropy_losses(model, dataset: Dataset) -> np.ndarray:
    """Per-sample softmax cross-entropy of the true label, from logits."""
    logits = logits_of(model, dataset.features)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -log_probs[np.arange(len(dataset)), dataset.labels]


def mean_training_loss(model, training_set: Dataset) -> float:
    """The attack threshold tau: mean training cross-entropy loss."""
    return float(cross_entropy_losses(model, training_set).mean())


def mia_recall(model, d_u: Dataset, tau: float) -> float:
    """Percent of D_U flagged as training members by the loss-threshold
    attack (per-sample loss <= tau).  Lower after unlearning is better."""
    losses = cross_entropy_losses(model, d_u)
    return 100.0 * float(np.mean(losses <= tau))
