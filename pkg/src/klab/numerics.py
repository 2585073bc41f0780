"""Shared numerical kernels: stable softmax, log-sum-exp, normalization, RNG.

Everything runs in float64. Matrices are row-major ``(N, K)`` arrays with one
sample per row.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, InvalidInputError, InvalidParameterError

NORM_EPS = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed``.

    Philox is counter-based and its output stream is specified independently
    of platform, so identical seeds reproduce identical draws everywhere.
    Independent sub-streams come from :func:`split_rng`.
    """
    if seed < 0 or seed >= 2**64:
        raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent Philox generators derived from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _check_tau(tau: float) -> None:
    if not tau > 0 or not np.isfinite(tau):
        raise InvalidParameterError(f"temperature must be positive and finite, got {tau}")


def softmax_with_temperature(logits, tau: float) -> np.ndarray:
    """Softmax of ``logits / tau`` along the last axis.

    Accepts a vector or an ``(N, K)`` matrix. ``-inf`` logits get zero mass;
    NaN logits raise.
    """
    _check_tau(tau)
    a = np.asarray(logits, dtype=np.float64)
    if a.size == 0:
        raise InvalidInputError("softmax of an empty vector")
    if np.isnan(a).any() or np.isposinf(a).any():
        raise InvalidInputError("logits must not contain NaN or +inf")
    scaled = a / tau
    m = scaled.max(axis=-1, keepdims=True)
    if not np.isfinite(m).all():
        raise InvalidInputError("every row needs at least one finite logit")
    e = np.exp(scaled - m)
    return e / e.sum(axis=-1, keepdims=True)


def log_sum_exp(values) -> float:
    """Overflow-safe ``log(sum(exp(values)))`` for a non-empty finite vector."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidInputError("log_sum_exp of an empty vector")
    if not np.isfinite(v).all():
        raise InvalidInputError("log_sum_exp requires finite values")
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def l2_normalize(v, eps: float = NORM_EPS) -> np.ndarray:
    """Scale ``v`` (or each row of a matrix) to unit Euclidean norm."""
    a = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if (norms <= eps).any():
        raise DegenerateVectorError("cannot normalize a (near-)zero vector")
    return a / norms
