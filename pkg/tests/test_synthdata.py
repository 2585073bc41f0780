import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klab.errors import InsufficientSamplesError, InvalidParameterError
from klab.numerics import make_rng
from klab.synthdata import (
    AugmentationSpec,
    MixtureSpec,
    augment,
    augment_batch,
    read_csv,
    sample_mixture,
    write_csv,
)


def two_cluster_spec(weights=(0.5, 0.5), sigma=0.1):
    return MixtureSpec(np.array([[1.0, 0.0], [0.0, 1.0]]), sigma, np.array(weights))


def test_degenerate_prior_gives_single_label(rng):
    ds = sample_mixture(two_cluster_spec((1.0, 0.0)), 100, rng)
    assert (ds.labels == 0).all()


def test_zero_sigma_samples_equal_means(rng):
    spec = MixtureSpec.random(3, 5, 0.0, rng)
    ds = sample_mixture(spec, 50, rng)
    assert np.array_equal(ds.samples, spec.means[ds.labels])


def test_label_histogram_binomial_bounds():
    rng = make_rng(7)
    spec = MixtureSpec.random(4, 6, 0.1, rng)
    ds = sample_mixture(spec, 10_000, rng)
    counts = np.bincount(ds.labels, minlength=4)
    # mean 2500, sd sqrt(10^4 * 0.25 * 0.75) ~ 43.3: 3 sd ~ 130
    assert ((counts >= 2300) & (counts <= 2700)).all()


def test_cluster_means_converge(rng):
    spec = MixtureSpec.random(4, 6, 0.3, rng)
    n = 8000
    ds = sample_mixture(spec, n, rng)
    for y in range(4):
        emp = ds.samples[ds.labels == y].mean(axis=0)
        assert np.linalg.norm(emp - spec.means[y]) <= 3 * spec.sigma * math.sqrt(6) / math.sqrt(n / 4)


def test_random_means_respect_min_angle(rng):
    spec = MixtureSpec.random(6, 4, 0.1, rng, min_angle_deg=30)
    cos = spec.means @ spec.means.T
    np.fill_diagonal(cos, -1)
    assert cos.max() < math.cos(math.radians(30))
    np.testing.assert_allclose(np.linalg.norm(spec.means, axis=1), 1.0, atol=1e-12)


def test_insufficient_samples(rng):
    with pytest.raises(InsufficientSamplesError):
        sample_mixture(two_cluster_spec(), 1, rng)


def test_bad_specs():
    with pytest.raises(InvalidParameterError):
        two_cluster_spec((0.6, 0.6))
    with pytest.raises(InvalidParameterError):
        AugmentationSpec(rotation_angle_max=1.0)
    with pytest.raises(InvalidParameterError):
        AugmentationSpec(noise_sigma=-0.1)


def test_determinism():
    spec = MixtureSpec.random(3, 4, 0.2, make_rng(1))
    a = sample_mixture(spec, 200, make_rng(5))
    b = sample_mixture(spec, 200, make_rng(5))
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.labels, b.labels)


def test_identity_augmentation(rng):
    x = rng.normal(size=7)
    assert np.array_equal(augment(x, AugmentationSpec(), rng), x)


def test_noise_only_augmentation_tail_bound():
    rng = make_rng(3)
    x = np.tile([1.0, 0.0], (10_000, 1))
    out = augment_batch(x, AugmentationSpec(noise_sigma=0.1), rng)
    within = np.linalg.norm(out - x, axis=1) <= 0.3 * math.sqrt(2)
    assert within.mean() >= 0.99


@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
@settings(max_examples=50)
def test_rotation_preserves_norm(seed, dim):
    rng = make_rng(seed)
    x = rng.normal(size=dim)
    out = augment(x, AugmentationSpec(rotation_angle_max=math.pi / 16), rng)
    assert abs(np.linalg.norm(out) - np.linalg.norm(x)) < 1e-9


def test_rotation_pi_16_on_unit_vector(rng):
    out = augment([1.0, 0.0], AugmentationSpec(rotation_angle_max=math.pi / 16), rng)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-9
    # angle moved by at most pi/16
    assert out[0] >= math.cos(math.pi / 16) - 1e-12


def test_augmentation_preserves_membership():
    rng = make_rng(11)
    sigma = 0.05
    spec = MixtureSpec.random(4, 8, sigma, rng, min_angle_deg=30)
    # 30 degree chord ~ 0.52 > 6 sigma
    d = np.linalg.norm(spec.means[:, None] - spec.means[None], axis=-1)
    assert d[~np.eye(4, dtype=bool)].min() >= 6 * sigma
    ds = sample_mixture(spec, 4000, rng)
    out = augment_batch(ds.samples, AugmentationSpec(noise_sigma=0.02, rotation_angle_max=0.05), rng)
    nearest = np.linalg.norm(out[:, None] - spec.means[None], axis=-1).argmin(axis=1)
    assert (nearest == ds.labels).mean() >= 0.95


def test_csv_round_trip_is_bit_exact(tmp_path, rng):
    spec = MixtureSpec.random(3, 4, 0.3, rng)
    ds = sample_mixture(spec, 60, rng)
    path = tmp_path / "data.csv"
    write_csv(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "x0,x1,x2,x3,label"
    back = read_csv(path)
    assert np.array_equal(back.samples, ds.samples)
    assert np.array_equal(back.labels, ds.labels)
