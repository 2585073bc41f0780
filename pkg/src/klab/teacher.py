"""Teacher-side machinery: priors, normalization strategies, EMA and temperature."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import CalibrationError, InvalidInputError, InvalidParameterError, NormalizationError, ShapeError
from .model import ClusterHead, EncoderParams, encode, student_posterior
from .numerics import _check_tau, l2_normalize

PRIOR_FLOOR = 1e-8


class Strategy(str, enum.Enum):
    """How the teacher posterior is normalized before supervising the student."""

    NONE = "none"
    INVERSE_PRIOR = "inverse_prior"
    CENTERING = "centering"


@dataclass(frozen=True)
class TemperatureConfig:
    tau_teacher: float = 0.05
    tau_student: float = 0.1
    cos_threshold: float = 0.4
    boundary_prob: float = 0.5

    def __post_init__(self):
        _check_tau(self.tau_teacher)
        _check_tau(self.tau_student)
        if not 0.0 < self.cos_threshold < 1.0:
            raise InvalidParameterError("cos_threshold must lie in (0, 1)")
        if not 0.0 < self.boundary_prob < 1.0:
            raise InvalidParameterError("boundary_prob must lie in (0, 1)")


@dataclass(frozen=True)
class TeacherState:
    params: EncoderParams
    head: ClusterHead
    priors: np.ndarray
    center: np.ndarray
    tau_teacher: float

    @classmethod
    def from_student(cls, params: EncoderParams, head: ClusterHead, tau_teacher: float) -> "TeacherState":
        k, d = head.weights.shape
        return cls(params.copy(), head.copy(), np.full(k, 1.0 / k), np.zeros(d), tau_teacher)


def estimate_priors(q_or_p) -> np.ndarray:
    """Column means of a posterior matrix: the dataset-average cluster mass."""
    a = np.asarray(q_or_p, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidInputError("need a non-empty (N, K) posterior matrix")
    priors = a.mean(axis=0)
    return priors / priors.sum()


def inverse_prior_normalize(p, priors, floor: float = PRIOR_FLOOR) -> np.ndarray:
    """Divide each column by its (floored) prior and renormalize rows."""
    if not floor > 0:
        raise InvalidParameterError("floor must be positive")
    p = np.asarray(p, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (p.shape[-1],):
        raise ShapeError("priors length must equal the number of clusters")
    scaled = p / np.maximum(priors, floor)
    totals = scaled.sum(axis=-1, keepdims=True)
    if (totals <= 0).any():
        raise NormalizationError("row has no mass after prior scaling")
    return scaled / totals


def centering_normalize(head: ClusterHead, z, center, tau_t: float) -> np.ndarray:
    """Softmax over ``(z - center) . w_y / tau_t``."""
    z = np.asarray(z, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (head.embed_dim,):
        raise ShapeError(f"center {center.shape} vs embed dim {head.embed_dim}")
    return student_posterior(head, z - center, tau_t)


def update_center(z_all, old_center, momentum: float) -> np.ndarray:
    if not 0.0 <= momentum <= 1.0:
        raise InvalidParameterError("momentum must lie in [0, 1]")
    z_all = np.asarray(z_all, dtype=np.float64)
    return momentum * np.asarray(old_center, dtype=np.float64) + (1.0 - momentum) * z_all.mean(axis=0)


def ema_update(teacher: TeacherState, params: EncoderParams, head: ClusterHead, momentum: float) -> TeacherState:
    """``teacher <- m * teacher + (1 - m) * student`` for every parameter.

    Head rows are re-projected to the sphere afterwards. ``m = 0`` is an exact
    copy of the student.
    """
    if not 0.0 <= momentum <= 1.0:
        raise InvalidParameterError("momentum must lie in [0, 1]")
    if params.dims != teacher.params.dims or head.weights.shape != teacher.head.weights.shape:
        raise ShapeError("student and teacher shapes differ")
    if momentum == 0.0:
        return replace(teacher, params=params.copy(), head=head.copy())
    m = momentum
    new_params = EncoderParams(
        [m * tw + (1 - m) * sw for tw, sw in zip(teacher.params.weights, params.weights)],
        [m * tb + (1 - m) * sb for tb, sb in zip(teacher.params.biases, params.biases)],
    )
    if momentum == 1.0:
        new_head = teacher.head.copy()
    else:
        new_head = ClusterHead(l2_normalize(m * teacher.head.weights + (1 - m) * head.weights))
    return replace(teacher, params=new_params, head=new_head)


def calibrate_teacher_temperature(cfg: TemperatureConfig, k: int) -> float:
    """Temperature at which a sample with cosine ``s`` to its cluster, and
    orthogonal to the other ``k - 1``, gets probability ``boundary_prob``.

    Solves ``exp(s/tau) / (exp(s/tau) + k - 1) = p`` in closed form:
    ``tau = s / ln((k - 1) p / (1 - p))``.
    """
    s, p = cfg.cos_threshold, cfg.boundary_prob
    ratio = (k - 1) * p / (1.0 - p)
    if k <= 2 and p == 0.5:
        raise CalibrationError(f"k={k} gives ln(k-1)=0: no finite temperature")
    if ratio <= 1.0:
        raise CalibrationError(f"(k-1)p/(1-p) = {ratio} <= 1: no positive temperature")
    return s / math.log(ratio)


class JensenGap(NamedTuple):
    lhs: float
    bound: float
    standard_bound: float


def jensen_gap_weights(head: ClusterHead, z, tau: float) -> JensenGap:
    """Softmax normalizer ``sum_i exp(z.w_i/tau)`` against its Jensen lower bounds.

    ``standard_bound`` is ``K exp(z.w_bar/tau)``. ``bound`` is the form
    ``exp(K z.w_bar/tau)``, which is not a lower bound in general and is kept
    only for comparison.
    """
    _check_tau(tau)
    z = np.asarray(z, dtype=np.float64)
    logits = head.weights @ z / tau
    zw = float(z @ head.mean) / tau
    return JensenGap(float(np.exp(logits).sum()), math.exp(head.k * zw), head.k * math.exp(zw))


def jensen_gap_samples(z_all, w_y, tau: float) -> tuple[float, float]:
    """``mean_j exp(z_j.w/tau)`` and its Jensen bound ``exp(z_bar.w/tau)``."""
    _check_tau(tau)
    z_all = np.asarray(z_all, dtype=np.float64)
    w_y = np.asarray(w_y, dtype=np.float64)
    lhs = float(np.exp(z_all @ w_y / tau).mean())
    return lhs, float(math.exp(float(z_all.mean(axis=0) @ w_y) / tau))


def normalize_teacher(head: ClusterHead, z, state: TeacherState, strategy: Strategy) -> np.ndarray:
    """Apply ``strategy`` to teacher embeddings ``z``."""
    strategy = Strategy(strategy)
    if strategy is Strategy.NONE:
        return student_posterior(head, z, state.tau_teacher)
    if strategy is Strategy.INVERSE_PRIOR:
        return inverse_prior_normalize(student_posterior(head, z, state.tau_teacher), state.priors)
    return centering_normalize(head, z, state.center, state.tau_teacher)


def teacher_distribution(state: TeacherState, strategy: Strategy, x_batch) -> np.ndarray:
    """Encode ``x_batch`` with the teacher encoder and normalize per ``strategy``."""
    z = encode(state.params, x_batch)
    return normalize_teacher(state.head, z, state, strategy)
