"""Collapse, recovery and approximation-quality probes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .objectives import ObjectiveBreakdown, _xlogy, entropy

TIE_ATOL = 1e-12


def prior_entropy(priors) -> float:
    return entropy(priors)


def effective_clusters(priors) -> float:
    """Perplexity ``exp(H(priors))`` of the cluster occupancy."""
    return math.exp(prior_entropy(priors))


def nmi(labels_true, labels_pred) -> float:
    """Normalized mutual information with arithmetic-mean normalization.

    Two constant labelings score 1; a single constant labeling scores 0.
    """
    a = np.asarray(labels_true)
    b = np.asarray(labels_pred)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("label vectors must be 1-d and equally long")
    if a.size == 0:
        raise InvalidInputError("empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    if ka == 1 and kb == 1:
        return 1.0
    if ka == 1 or kb == 1:
        return 0.0
    joint = np.zeros((ka, kb))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= a.size
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    h_a = float(-_xlogy(pa, pa).sum())
    h_b = float(-_xlogy(pb, pb).sum())
    outer = pa[:, None] * pb[None, :]
    mi = float(_xlogy(joint, np.where(joint > 0, joint, 1.0) / np.where(outer > 0, outer, 1.0)).sum())
    return float(min(1.0, max(0.0, mi / (0.5 * (h_a + h_b)))))


def tie_argmax(p, atol: float = TIE_ATOL) -> np.ndarray:
    """Row argmax where entries within ``atol`` of the maximum count as tied;
    ties resolve to the lowest index."""
    p = np.asarray(p, dtype=np.float64)
    return (p >= p.max(axis=1, keepdims=True) - atol).argmax(axis=1)


def strategy_agreement(p_a, p_b) -> float:
    """Fraction of rows whose (tie-tolerant) argmax cluster agrees."""
    p_a = np.asarray(p_a)
    p_b = np.asarray(p_b)
    if p_a.shape != p_b.shape:
        raise ShapeError(f"{p_a.shape} vs {p_b.shape}")
    return float((tie_argmax(p_a) == tie_argmax(p_b)).mean())


def mean_row_kl(p_a, p_b) -> float:
    """Average per-row ``KL(p_a || p_b)``; the companion of :func:`strategy_agreement`."""
    p_a = np.asarray(p_a, dtype=np.float64)
    p_b = np.asarray(p_b, dtype=np.float64)
    if p_a.shape != p_b.shape:
        raise ShapeError(f"{p_a.shape} vs {p_b.shape}")
    safe_b = np.maximum(p_b, np.finfo(float).tiny)
    return float((_xlogy(p_a, p_a) - _xlogy(p_a, safe_b)).sum(axis=1).mean())


METRICS_COLUMNS = (
    "epoch",
    "prior_entropy",
    "effective_clusters",
    "nmi",
    "kl_teacher_student",
    "jensen_gap_mean",
    "objective_kl",
    "objective_cross_entropy",
    "objective_entropy_regularizer",
    "objective_sum_to_one_penalty",
    "objective_total",
    "strategy_agreement",
    "train_loss",
)


@dataclass(frozen=True)
class EpochMetrics:
    """Per-epoch probes. ``prior_entropy`` is computed on the student's
    occupancy over the clean dataset; ``jensen_gap_mean`` is the mean log-ratio
    of the teacher softmax normalizer to its Jensen bound.
    """

    epoch: int
    prior_entropy: float
    effective_clusters: float
    nmi: float
    kl_teacher_student: float
    jensen_gap_mean: float
    objective: ObjectiveBreakdown
    strategy_agreement: float
    train_loss: float = float("nan")

    def row(self) -> list:
        o = self.objective
        return [
            self.epoch,
            self.prior_entropy,
            self.effective_clusters,
            self.nmi,
            self.kl_teacher_student,
            self.jensen_gap_mean,
            o.kl_term,
            o.cross_entropy_term,
            o.entropy_regularizer_term,
            o.sum_to_one_penalty,
            o.total,
            self.strategy_agreement,
            self.train_loss,
        ]

    def to_dict(self) -> dict:
        return asdict(self)
