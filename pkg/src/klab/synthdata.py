"""Labeled Gaussian-mixture data and view augmentation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientSamplesError, InvalidInputError, InvalidParameterError
from .numerics import l2_normalize


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture with unit-norm component means."""

    means: np.ndarray
    sigma: float
    weights: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 2 or weights.shape != (means.shape[0],):
            raise InvalidInputError("means must be (k, dim) and weights (k,)")
        if self.sigma < 0:
            raise InvalidParameterError(f"sigma must be >= 0, got {self.sigma}")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidParameterError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)

    @property
    def k_true(self) -> int:
        return self.means.shape[0]

    @property
    def input_dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def random(
        cls,
        k_true: int,
        input_dim: int,
        sigma: float,
        rng: np.random.Generator,
        weights=None,
        min_angle_deg: float = 30.0,
        max_tries: int = 10_000,
    ) -> "MixtureSpec":
        """Draw means uniformly on the unit sphere, rejecting close pairs."""
        cos_max = math.cos(math.radians(min_angle_deg))
        means: list[np.ndarray] = []
        for _ in range(max_tries):
            cand = l2_normalize(rng.standard_normal(input_dim))
            if all(float(cand @ m) < cos_max for m in means):
                means.append(cand)
                if len(means) == k_true:
                    break
        else:
            raise InvalidParameterError(
                f"could not place {k_true} means {min_angle_deg} degrees apart in {input_dim}-d"
            )
        if weights is None:
            weights = np.full(k_true, 1.0 / k_true)
        return cls(np.array(means), float(sigma), np.asarray(weights, dtype=np.float64))


@dataclass(frozen=True)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    spec: MixtureSpec | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class AugmentationSpec:
    """Random rotation in a random 2-plane followed by additive Gaussian jitter."""

    noise_sigma: float = 0.0
    rotation_angle_max: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")
        if not 0.0 <= self.rotation_angle_max <= math.pi / 8:
            raise InvalidParameterError("rotation_angle_max must lie in [0, pi/8]")


def sample_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator, seed: int | None = None) -> LabeledDataset:
    if n < spec.k_true:
        raise InsufficientSamplesError(f"n={n} is smaller than k_true={spec.k_true}")
    labels = rng.choice(spec.k_true, size=n, p=spec.weights)
    noise = rng.standard_normal((n, spec.input_dim))
    samples = spec.means[labels] + spec.sigma * noise
    return LabeledDataset(samples, labels.astype(np.int64), spec, seed)


def _random_rotation(dim: int, angle_max: float, rng: np.random.Generator, size: int):
    """Per-row plane bases ``u, v`` and angles for rotations in random 2-planes."""
    g = rng.standard_normal((size, 2, dim))
    angles = rng.uniform(-angle_max, angle_max, size=size)
    u = g[:, 0]
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    v = g[:, 1] - (g[:, 1] * u).sum(axis=1, keepdims=True) * u
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return u, v, angles


def rotate(x: np.ndarray, u: np.ndarray, v: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotate each row of ``x`` by ``angles`` in the plane spanned by ``u, v``."""
    xu = (x * u).sum(axis=1, keepdims=True)
    xv = (x * v).sum(axis=1, keepdims=True)
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    # in-plane component (xu, xv) -> (c xu - s xv, s xu + c xv)
    return x + ((c - 1.0) * xu - s * xv) * u + (s * xu + (c - 1.0) * xv) * v


def augment_batch(x: np.ndarray, aug: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Augment every row of ``x`` independently."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise InvalidInputError("augment requires finite input")
    n, dim = x.shape
    out = x.copy()
    if aug.rotation_angle_max > 0 and dim >= 2:
        u, v, angles = _random_rotation(dim, aug.rotation_angle_max, rng, n)
        out = rotate(out, u, v, angles)
    if aug.noise_sigma > 0:
        out = out + aug.noise_sigma * rng.standard_normal((n, dim))
    return out


def augment(x, aug: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Augmented view of a single input vector."""
    return augment_batch(np.asarray(x, dtype=np.float64)[None, :], aug, rng)[0]


def write_csv(dataset: LabeledDataset, path) -> None:
    """Write ``x0..x{d-1},label`` rows; floats use ``repr`` so reload is bit-exact."""
    dim = dataset.samples.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(dim)] + ["label"])
        for row, label in zip(dataset.samples, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_csv(path) -> LabeledDataset:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise InvalidInputError("CSV header must end with 'label'")
        rows = [r for r in reader if r]
    if not rows:
        raise InvalidInputError("dataset CSV has no rows")
    samples = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return LabeledDataset(samples, labels)
