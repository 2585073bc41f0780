import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klab.errors import CalibrationError, NormalizationError
from klab.model import ClusterHead, encode, init_encoder, init_head, student_posterior
from klab.numerics import l2_normalize, make_rng
from klab.teacher import (
    Strategy,
    TeacherState,
    TemperatureConfig,
    calibrate_teacher_temperature,
    centering_normalize,
    ema_update,
    estimate_priors,
    inverse_prior_normalize,
    jensen_gap_samples,
    jensen_gap_weights,
    teacher_distribution,
    update_center,
)
from oracles import bisect_temperature

GOLDEN = __import__("pathlib").Path(__file__).parent / "golden"


def make_state(seed=0, k=8, dims=(4, 16, 6), tau=0.2):
    rng = make_rng(seed)
    params = init_encoder(list(dims), rng)
    head = init_head(k, dims[-1], rng)
    return TeacherState(params, head, rng.dirichlet(np.ones(k)), 0.2 * rng.normal(size=dims[-1]), tau), rng


def test_estimate_priors_examples():
    np.testing.assert_allclose(estimate_priors(np.full((5, 4), 0.25)), 0.25, atol=1e-15)
    np.testing.assert_allclose(estimate_priors([[1, 0], [1, 0], [0, 1]]), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(estimate_priors([[0.2, 0.8]]), [0.2, 0.8], atol=1e-15)
    with pytest.raises(Exception):
        estimate_priors(np.zeros((0, 3)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 20), st.integers(2, 8))
@settings(max_examples=50)
def test_estimate_priors_permutation_invariant(seed, n, k):
    rng = make_rng(seed)
    p = rng.dirichlet(np.ones(k), size=n)
    pri = estimate_priors(p)
    assert abs(pri.sum() - 1) < 1e-9
    np.testing.assert_allclose(estimate_priors(p[rng.permutation(n)]), pri, atol=1e-15)


def test_inverse_prior_examples():
    p = make_rng(1).dirichlet(np.ones(4), size=6)
    np.testing.assert_allclose(inverse_prior_normalize(p, np.full(4, 0.25)), p, atol=1e-15)
    np.testing.assert_allclose(inverse_prior_normalize([[0.8, 0.2]], [0.8, 0.2]), [[0.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(inverse_prior_normalize([[0.5, 0.5]], [0.9, 0.1]), [[0.1, 0.9]], atol=1e-15)


def test_inverse_prior_floor_and_zero_rows():
    out = inverse_prior_normalize([[0.5, 0.5]], [1.0, 0.0])
    assert out[0, 1] > 0.999
    with pytest.raises(NormalizationError):
        inverse_prior_normalize([[0.0, 0.0]], [0.5, 0.5])


def ratio(pri):
    return pri.max() / pri.min()


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(2, 6))
@settings(max_examples=200)
def test_inverse_prior_flattens(seed, n, k):
    rng = make_rng(seed)
    p = rng.dirichlet(np.ones(k), size=n)
    p0 = estimate_priors(p)
    if ratio(p0) < 1 + 1e-6:
        return
    q1 = inverse_prior_normalize(p, p0)
    p1 = estimate_priors(q1)
    q2 = inverse_prior_normalize(q1, p1)
    p2 = estimate_priors(q2)
    assert ratio(p1) < ratio(p0)
    assert ratio(p2) < ratio(p1) or ratio(p1) < 1 + 1e-9


def test_centering_examples(rng):
    head = init_head(5, 3, rng)
    z = l2_normalize(rng.normal(size=(4, 3)))
    np.testing.assert_allclose(centering_normalize(head, z, np.zeros(3), 0.3), student_posterior(head, z, 0.3), atol=0)
    np.testing.assert_allclose(centering_normalize(head, z[:1], z[0], 0.3), np.full((1, 5), 0.2), atol=1e-15)
    head2 = ClusterHead(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    out = centering_normalize(head2, np.array([[1.0, 0.0]]), np.array([0.5, 0.0]), 0.5)
    np.testing.assert_allclose(out, [[0.88080, 0.11920]], atol=1e-5)
    np.testing.assert_allclose(out, [[1 / (1 + math.exp(-2)), 1 / (1 + math.exp(2))]], atol=1e-15)


def test_update_center_examples(rng):
    z = rng.normal(size=(6, 3))
    old = rng.normal(size=3)
    np.testing.assert_array_equal(update_center(z, old, 0.0), z.mean(axis=0))
    np.testing.assert_array_equal(update_center(z, old, 1.0), old)
    np.testing.assert_allclose(update_center(np.array([[1.0], [1.0]]), np.array([0.0]), 0.9), [0.1], atol=1e-15)


def test_ema_examples():
    state, rng = make_state()
    s_params = init_encoder([4, 16, 6], rng)
    s_head = init_head(8, 6, rng)
    copy = ema_update(state, s_params, s_head, 0.0)
    for a, b in zip(copy.params.arrays() + [copy.head.weights], s_params.arrays() + [s_head.weights]):
        assert np.array_equal(a, b)
    same = ema_update(state, s_params, s_head, 1.0)
    for a, b in zip(same.params.arrays() + [same.head.weights], state.params.arrays() + [state.head.weights]):
        assert np.array_equal(a, b)
    mixed = ema_update(state, s_params, s_head, 0.9)
    np.testing.assert_allclose(np.linalg.norm(mixed.head.weights, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(mixed.params.weights[0], 0.9 * state.params.weights[0] + 0.1 * s_params.weights[0])


def test_ema_scalar_parameter():
    from klab.model import EncoderParams

    t = TeacherState(EncoderParams([np.zeros((1, 1))], [np.zeros(1)]), ClusterHead(np.eye(2)), np.full(2, 0.5), np.zeros(2), 0.1)
    s = EncoderParams([np.ones((1, 1))], [np.zeros(1)])
    out = ema_update(t, s, ClusterHead(np.eye(2)), 0.9)
    assert out.params.weights[0][0, 0] == pytest.approx(0.1, abs=1e-15)


def test_ema_copy_reproduces_student_posterior():
    state, rng = make_state(tau=0.1)
    s_params = init_encoder([4, 16, 6], rng)
    s_head = init_head(8, 6, rng)
    x = rng.normal(size=(10, 4))
    t = ema_update(state, s_params, s_head, 0.0)
    assert np.array_equal(teacher_distribution(t, Strategy.NONE, x), student_posterior(s_head, encode(s_params, x), 0.1))


@pytest.mark.parametrize("k, expected", [(10, 0.18205), (4000, 0.04823)])
def test_calibration_matches_bisection(k, expected):
    cfg = TemperatureConfig()
    tau = calibrate_teacher_temperature(cfg, k)
    assert tau == pytest.approx(bisect_temperature(0.4, 0.5, k), abs=1e-12)
    assert round(tau, 5) == expected


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_teacher_temperature(TemperatureConfig(), 2)
    with pytest.raises(CalibrationError):
        calibrate_teacher_temperature(TemperatureConfig(boundary_prob=0.1), 5)


@given(st.integers(3, 100_000), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_calibration_round_trip(k, s, p):
    cfg = TemperatureConfig(cos_threshold=s, boundary_prob=p)
    if (k - 1) * p / (1 - p) <= 1 + 1e-6:
        with pytest.raises(CalibrationError):
            calibrate_teacher_temperature(cfg, k)
        return
    tau = calibrate_teacher_temperature(cfg, k)
    e = math.exp(s / tau)
    assert e / (e + k - 1) == pytest.approx(p, abs=1e-12)


def test_jensen_weights_examples():
    w = l2_normalize(np.ones((5, 3)))
    z = l2_normalize(np.array([0.3, -0.2, 0.9]))
    gap = jensen_gap_weights(ClusterHead(w), z, 0.4)
    assert gap.lhs == pytest.approx(gap.standard_bound, rel=1e-12)
    centred = ClusterHead(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]]))
    gap = jensen_gap_weights(centred, z, 0.4)
    assert gap.standard_bound == pytest.approx(4.0, abs=1e-15)
    assert gap.bound == pytest.approx(1.0, abs=1e-15)
    assert gap.lhs >= 4.0


def test_jensen_weights_golden():
    rng = make_rng(3)
    z = l2_normalize(rng.normal(size=8))
    head = ClusterHead(l2_normalize(rng.normal(size=(16, 8))))
    gap = jensen_gap_weights(head, z, 0.5)
    assert gap.lhs >= gap.standard_bound
    golden = np.load(GOLDEN / "jensen_weights_seed3.npy")
    np.testing.assert_allclose([gap.lhs, gap.standard_bound, gap.bound], golden, rtol=1e-12)


def test_jensen_samples_examples():
    z = np.tile([0.6, 0.8], (4, 1))
    lhs, bound = jensen_gap_samples(z, np.array([1.0, 0.0]), 0.3)
    assert lhs == pytest.approx(bound, rel=1e-12)
    lhs, bound = jensen_gap_samples(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.0, 1.0]), 0.3)
    assert lhs == 1.0 and bound == 1.0
    lhs, bound = jensen_gap_samples(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 0.0]), 1.0)
    assert lhs == pytest.approx(math.cosh(1.0), abs=1e-15)
    assert bound == 1.0


def test_teacher_distribution_reductions():
    state, rng = make_state()
    x = rng.normal(size=(12, 4))
    zero_center = TeacherState(state.params, state.head, state.priors, np.zeros(6), state.tau_teacher)
    np.testing.assert_allclose(
        teacher_distribution(zero_center, Strategy.CENTERING, x), teacher_distribution(state, Strategy.NONE, x), atol=1e-12
    )
    uniform = TeacherState(state.params, state.head, np.full(8, 1 / 8), state.center, state.tau_teacher)
    np.testing.assert_allclose(
        teacher_distribution(uniform, Strategy.INVERSE_PRIOR, x), teacher_distribution(state, Strategy.NONE, x), atol=1e-12
    )


def test_teacher_distribution_golden():
    rng = make_rng(0)
    params = init_encoder([4, 16, 6], rng)
    head = init_head(8, 6, rng)
    x = rng.normal(size=(32, 4))
    p_raw = student_posterior(head, encode(params, x), 0.2)
    z = encode(params, x)
    state = TeacherState(params, head, estimate_priors(p_raw), z.mean(axis=0), 0.2)
    golden = np.load(GOLDEN / "teacher_seed0.npz")
    for s in Strategy:
        out = teacher_distribution(state, s, x)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out, golden[s.value], rtol=0, atol=1e-12)


def test_strategy_parse():
    assert Strategy("inverse_prior") is Strategy.INVERSE_PRIOR
    with pytest.raises(ValueError):
        Strategy("sinkhorn")
