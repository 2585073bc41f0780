"""KL / cross-entropy objectives and exact gradients through the encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfiniteDivergenceError, InvalidDistributionError, ShapeError
from .model import ClusterHead, EncoderParams, encode_with_cache, student_posterior
from .numerics import _check_tau


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x * log(y)`` with ``0 * log(anything) = 0``."""
    out = np.zeros(np.broadcast(x, y).shape)
    mask = np.broadcast_to(x != 0, out.shape)
    xb = np.broadcast_to(x, out.shape)
    yb = np.broadcast_to(y, out.shape)
    out[mask] = xb[mask] * np.log(yb[mask])
    return out


def _pair(q, p) -> tuple[np.ndarray, np.ndarray]:
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if q.shape != p.shape:
        raise ShapeError(f"q {q.shape} and p {p.shape} differ")
    if ((q > 0) & (p <= 0)).any():
        raise InfiniteDivergenceError("q > 0 where p = 0")
    return q, p


def entropy(dist) -> float:
    """Shannon entropy in nats of a probability vector."""
    d = np.asarray(dist, dtype=np.float64)
    if (d < 0).any():
        raise InvalidDistributionError("negative probability")
    if abs(d.sum() - 1.0) > 1e-6:
        raise InvalidDistributionError(f"probabilities sum to {d.sum()}, not 1")
    return float(-_xlogy(d, d).sum())


def entropy_rows(q) -> float:
    """Sum over rows of the row entropies."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return float(-_xlogy(q, q).sum())


def kl_divergence(q, p) -> float:
    """``sum_i sum_y q_iy log(q_iy / p_iy)`` summed over all rows."""
    q, p = _pair(q, p)
    return float(_xlogy(q, q).sum() - _xlogy(q, p).sum())


def cross_entropy(q, p) -> float:
    """``-sum_i sum_y q_iy log p_iy``."""
    q, p = _pair(q, p)
    return float(-_xlogy(q, p).sum())


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """The four summands of the regularized objective.

    ``entropy_regularizer_normalized`` is the same prior-entropy term with the
    inner sum replaced by a mean over samples; it is reported alongside but is
    not part of ``total``.
    """

    kl_term: float
    cross_entropy_term: float
    entropy_regularizer_term: float
    sum_to_one_penalty: float
    total: float
    entropy_regularizer_normalized: float = 0.0


def regularized_objective(q, p) -> ObjectiveBreakdown:
    q, p = _pair(q, p)
    neg_entropy = float(_xlogy(q, q).sum())
    ce = float(-_xlogy(q, p).sum())
    col = q.sum(axis=0)
    reg = float(_xlogy(col, col).sum())
    reg_norm = float(_xlogy(col, col / q.shape[0]).sum())
    penalty = float(0.5 * ((q.sum(axis=1) - 1.0) ** 2).sum())
    total = neg_entropy + ce + reg + penalty
    return ObjectiveBreakdown(neg_entropy, ce, reg, penalty, total, reg_norm)


@dataclass
class GradientSet:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_cluster_weights: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.d_weights, self.d_biases):
            out += [w, b]
        return out + [self.d_cluster_weights]

    def norm(self) -> float:
        return float(np.sqrt(sum((a**2).sum() for a in self.arrays())))


def cross_entropy_and_grad(params: EncoderParams, head: ClusterHead, x_batch, q, tau_s: float):
    """Summed cross-entropy of the student posterior against ``q`` and its exact gradient."""
    _check_tau(tau_s)
    z, (inputs, u, norms) = encode_with_cache(params, x_batch)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (z.shape[0], head.k):
        raise ShapeError(f"q {q.shape} does not match (N={z.shape[0]}, K={head.k})")
    p = student_posterior(head, z, tau_s)
    loss = cross_entropy(q, p)

    # dL/dlogit for logit = z.w / tau; rows of q need not sum to one here
    g = p * q.sum(axis=1, keepdims=True) - q
    d_head = g.T @ z / tau_s
    dz = g @ head.weights / tau_s
    # through z = u / ||u||
    du = (dz - z * (dz * z).sum(axis=1, keepdims=True)) / norms

    n_layers = len(params.weights)
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    delta = du
    for l in range(n_layers - 1, -1, -1):
        d_weights[l] = delta.T @ inputs[l]
        d_biases[l] = delta.sum(axis=0)
        if l:
            h = inputs[l]
            delta = (delta @ params.weights[l]) * (1.0 - h * h)
    return loss, GradientSet(d_weights, d_biases, d_head)


def cross_entropy_backprop(params: EncoderParams, head: ClusterHead, x_batch, q, tau_s: float) -> GradientSet:
    """Gradient of ``-sum q log P`` w.r.t. every encoder parameter and cluster weight.

    For the cluster weights this is ``-(1/tau) sum_i (q_iy - p_iy) z_i`` before any
    re-projection onto the sphere.
    """
    return cross_entropy_and_grad(params, head, x_batch, q, tau_s)[1]


def diagonal_gradient(q_row, p_row, z, head: ClusterHead, tau: float) -> np.ndarray:
    """Single-sample diagonal-term expression ``(1/tau) q_y (1 - p_y) (z - w_y)``.

    Diagnostic only: it ignores the softmax coupling across clusters and is
    stated up to proportionality, so it is not the gradient of anything we
    optimize.
    """
    _check_tau(tau)
    q_row = np.asarray(q_row, dtype=np.float64)
    p_row = np.asarray(p_row, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return (q_row * (1.0 - p_row))[:, None] * (z[None, :] - head.weights) / tau
