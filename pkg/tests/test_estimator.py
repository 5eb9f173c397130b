import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_gosc.errors import DegenerateSystemError
from isac_gosc.estimator import Estimate, differential_entropy, entropy, fuse, kalman_gain, predict


def spd(seed_vals):
    a, b, c = seed_vals
    L = np.array([[a, 0.0], [b, c]])
    return L @ L.T + 1e-6 * np.eye(2)


spd_strategy = st.tuples(st.floats(0.01, 3), st.floats(-3, 3), st.floats(0.01, 3)).map(spd)


def test_predict_from_zero():
    e = predict(Estimate(np.array([1.0, 2.0])), 0.005, 0.005)
    np.testing.assert_array_equal(e.mean, [1.0, 2.0])
    np.testing.assert_array_equal(e.cov, 0.005 * np.eye(2))


def test_predict_moves_mean():
    e = predict(Estimate(np.zeros(2), last_vel=np.array([1.0, 0.0])), 0.005, 0.0)
    assert e.mean[0] == 0.005


def test_predict_accumulates():
    e = Estimate(np.zeros(2))
    for _ in range(10):
        e = predict(e, 0.005, 0.005)
    np.testing.assert_allclose(e.cov, 10 * 0.005 * np.eye(2), rtol=1e-14)


def test_double_predict_equals_single_of_twice_dt():
    e = Estimate(np.array([0.3, 0.1]), 0.2 * np.eye(2), np.array([2.0, -1.0]))
    two = predict(predict(e, 0.005, 0.0), 0.005, 0.0)
    one = predict(e, 0.01, 0.0)
    np.testing.assert_allclose(two.mean, one.mean, atol=1e-16)
    a = predict(predict(e, 0.005, 0.003), 0.005, 0.004)
    np.testing.assert_array_equal(a.cov, e.cov + 0.007 * np.eye(2))


def test_fuse_equal_trust():
    e = fuse(Estimate(np.zeros(2), np.eye(2)), np.array([2.0, 4.0]), np.eye(2))
    np.testing.assert_allclose(kalman_gain(np.eye(2), np.eye(2)), 0.5 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(e.mean, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(e.cov, 0.5 * np.eye(2), atol=1e-12)


def test_fuse_perfect_measurement():
    e = fuse(Estimate(np.zeros(2), 0.3 * np.eye(2)), np.array([1.0, -1.0]), np.zeros((2, 2)))
    np.testing.assert_allclose(e.mean, [1.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(e.cov, np.zeros((2, 2)), atol=1e-12)


def test_fuse_diagonal_example():
    prior, meas = np.diag([1.0, 4.0]), np.eye(2)
    np.testing.assert_allclose(kalman_gain(prior, meas), np.diag([0.5, 0.8]), atol=1e-12)
    e = fuse(Estimate(np.zeros(2), prior), np.zeros(2), meas)
    np.testing.assert_allclose(e.cov, np.diag([0.5, 0.8]), atol=1e-12)


def test_fuse_singular_innovation():
    with pytest.raises(DegenerateSystemError):
        fuse(Estimate(np.zeros(2)), np.ones(2), np.zeros((2, 2)))


@settings(max_examples=300)
@given(spd_strategy, spd_strategy)
def test_fuse_shrinks_and_stays_psd(prior, meas):
    e = fuse(Estimate(np.zeros(2), prior), np.ones(2), meas)
    assert np.linalg.det(e.cov) <= np.linalg.det(prior) + 1e-12
    np.testing.assert_array_equal(e.cov, e.cov.T)
    assert np.linalg.eigvalsh(e.cov).min() >= -1e-12


def test_fuse_psd_thousand_trials():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        prior, meas = spd(rng.uniform(0.01, 2, 3)), spd(rng.uniform(0.01, 2, 3))
        e = fuse(Estimate(rng.standard_normal(2), prior), rng.standard_normal(2), meas)
        assert np.linalg.eigvalsh(e.cov).min() >= -1e-12


def test_entropy_values():
    assert entropy(math.e * np.eye(2)) == pytest.approx(1.0)
    assert entropy(np.eye(2)) == 0.0
    c = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert entropy(c) - entropy(c / 2) == pytest.approx(math.log(2))
    assert entropy(np.zeros((2, 2))) == -math.inf


def test_differential_entropy_constant():
    assert differential_entropy(np.eye(2)) == pytest.approx(math.log(2 * math.pi * math.e))


def test_filter_converges_with_noiseless_sensing():
    truth = np.array([3.0, 1.0])
    est = Estimate(np.array([2.0, 2.0]), np.eye(2))
    for _ in range(20):
        est = fuse(est, truth, 1e-6 * np.eye(2))
        est = predict(est, 0.005, 0.0)
    assert np.linalg.norm(est.mean - truth) < 1e-4
