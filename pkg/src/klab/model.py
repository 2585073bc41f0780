"""Encoder MLP, cluster head and the assignment posteriors."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NormalizationError, ShapeError
from .numerics import _check_tau, l2_normalize, softmax_with_temperature


@dataclass
class EncoderParams:
    """Dense tanh MLP; the last layer is linear and its output is l2-normalized.

    ``weights[l]`` has shape ``(out, in)`` and ``biases[l]`` shape ``(out,)``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {l}: weight {w.shape} / bias {b.shape} mismatch")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise ShapeError(f"layer {l} input {w.shape[1]} != previous output")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


@dataclass
class ClusterHead:
    """``K`` unit-norm cluster weight vectors stored as rows."""

    weights: np.ndarray

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def mean(self) -> np.ndarray:
        """Average cluster weight vector."""
        return self.weights.mean(axis=0)

    def copy(self) -> "ClusterHead":
        return ClusterHead(self.weights.copy())


def init_encoder(dims, rng: np.random.Generator) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases)


def init_head(k: int, embed_dim: int, rng: np.random.Generator) -> ClusterHead:
    return ClusterHead(l2_normalize(rng.standard_normal((k, embed_dim))))


def center_head(head: ClusterHead, iters: int = 100, tol: float = 1e-12) -> ClusterHead:
    """Alternate mean removal and row normalization until the rows average to ~0."""
    w = head.weights
    for _ in range(iters):
        w = l2_normalize(w - w.mean(axis=0))
        if np.linalg.norm(w.mean(axis=0)) < tol:
            break
    return ClusterHead(w)


def encode_with_cache(params: EncoderParams, batch):
    """Forward pass returning embeddings and the activations backprop needs.

    The cache holds the layer inputs, the hidden tanh outputs and the
    pre-normalization output ``u`` with its row norms.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match encoder input dim {params.input_dim}")
    inputs = []
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        a = h @ w.T + b
        h = a if l == last else np.tanh(a)
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    z = l2_normalize(h)
    return z, (inputs, h, norms)


def encode(params: EncoderParams, batch) -> np.ndarray:
    return encode_with_cache(params, batch)[0]


def _check_embed(head: ClusterHead, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != head.embed_dim:
        raise ShapeError(f"embeddings {z.shape} vs head embed dim {head.embed_dim}")
    return z


def student_posterior(head: ClusterHead, z, tau: float) -> np.ndarray:
    """Row-wise softmax of ``z @ W.T / tau`` (priors ignored)."""
    _check_tau(tau)
    z = _check_embed(head, z)
    return softmax_with_temperature(z @ head.weights.T, tau)


def gaussian_posterior_with_priors(head: ClusterHead, priors, z, tau: float) -> np.ndarray:
    """Posterior ``∝ exp(-||z - w_y||^2 / tau) * prior_y`` (no 1/2 in the exponent).

    Kept for diagnostics; training uses :func:`student_posterior`.
    """
    _check_tau(tau)
    z = _check_embed(head, z)
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (head.k,) or (priors < 0).any() or abs(priors.sum() - 1.0) > 1e-9:
        raise InvalidInputError("priors must be a length-K probability vector")
    sq = ((z[:, None, :] - head.weights[None, :, :]) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore"):
        logits = -sq / tau + np.log(priors)
    m = logits.max(axis=1, keepdims=True)
    if not np.isfinite(m).all():
        raise NormalizationError("a row has zero total mass")
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


# Checkpoint layout (all little-endian):
#   8 bytes  magic b"KLABCKPT"
#   u32      format version (1)
#   u32      number of encoder layers L
#   u32 * (L+1)  encoder dims [in, h1, ..., embed]
#   u32, u32 head K, embed_dim
#   f64 ...  for each layer: weight (out x in, row-major) then bias (out)
#   f64 ...  head weights (K x embed_dim, row-major)
CHECKPOINT_MAGIC = b"KLABCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: EncoderParams, head: ClusterHead) -> None:
    dims = params.dims
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(params.weights)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<II", head.k, head.embed_dim),
    ]
    for a in params.arrays() + [head.weights]:
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[EncoderParams, ClusterHead]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise InvalidInputError("not a klab checkpoint")
    version, n_layers = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {version}")
    off = 16
    dims = struct.unpack_from(f"<{n_layers + 1}I", data, off)
    off += 4 * (n_layers + 1)
    k, d = struct.unpack_from("<II", data, off)
    off += 8

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        a = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
        return a

    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(take((fan_out, fan_in)))
        biases.append(take((fan_out,)))
    head = ClusterHead(take((k, d)))
    if off != len(data):
        raise InvalidInputError("trailing bytes in checkpoint")
    return EncoderParams(weights, biases), head
