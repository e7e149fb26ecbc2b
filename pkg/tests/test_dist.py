import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize
from scipy.special import log_ndtr as scipy_log_ndtr

from headerbid.dist import LognormalParams, cdf, expected_revenue, log_ndtr, optimal_bid


def normal_cdf_by_quadrature(z):
    dens = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    return 0.5 + integrate.quad(dens, 0.0, z, epsabs=1e-14, epsrel=1e-14)[0]


def grid_argmax(theta, p, n=10**6):
    q = np.linspace(0.0, p, n + 1)
    with np.errstate(divide="ignore"):
        z = (np.log(q) - theta.mu) / theta.sigma
    from scipy.special import ndtr
    v = (p - q) * ndtr(z)
    k = int(np.argmax(v))
    return q[k], v[k]


def true_max(theta, p):
    """Grid search, then a bounded Brent refinement around the best cell."""
    q0, _ = grid_argmax(theta, p, 20_000)
    h = p / 20_000
    res = optimize.minimize_scalar(lambda q: -expected_revenue(theta, q, p),
                                   bounds=(max(q0 - h, 0.0), min(q0 + h, p)), method="bounded",
                                   options={"xatol": 1e-14 * max(p, 1.0)})
    return max(-res.fun, expected_revenue(theta, q0, p))


def test_cdf_examples():
    assert cdf(LognormalParams(1.0, 0.0), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert cdf(LognormalParams(0.5, 2.0), math.exp(2.0)) == pytest.approx(0.5, abs=1e-15)
    assert cdf(LognormalParams(1.0, 0.0), math.e) == pytest.approx(normal_cdf_by_quadrature(1.0), abs=1e-12)
    assert normal_cdf_by_quadrature(1.0) == pytest.approx(0.841345, abs=1e-6)


def test_cdf_nonpositive_values():
    th = LognormalParams(1.0, 0.0)
    assert cdf(th, 0.0) == 0.0 and cdf(th, -3.0) == 0.0


@given(st.floats(0.01, 5), st.floats(-5, 5))
def test_cdf_limits(sigma, mu):
    th = LognormalParams(sigma, mu)
    assert cdf(th, 1e-12) < 1e-3
    assert cdf(th, 1e12) > 1 - 1e-3


@given(st.floats(0.01, 5), st.floats(-5, 5), st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_cdf_monotone(sigma, mu, a, b):
    th = LognormalParams(sigma, mu)
    lo, hi = sorted((a, b))
    assert 0.0 <= cdf(th, lo) <= cdf(th, hi) <= 1.0


@pytest.mark.parametrize("z", [-1e4, -200.0, -40.0, -30.0, -29.9, -5.0, -1.0, 0.0, 0.5, 3.0, 8.0, 40.0])
def test_log_ndtr_matches_scipy(z):
    assert log_ndtr(z) == pytest.approx(scipy_log_ndtr(z), rel=1e-9, abs=1e-15)


def test_expected_revenue_examples():
    th = LognormalParams(1.0, 0.0)
    assert expected_revenue(th, 0.0, 10.0) == 0.0
    assert expected_revenue(th, 10.0, 10.0) == 0.0
    assert expected_revenue(th, 1.0, 10.0) == pytest.approx(4.5, abs=1e-14)


def test_optimal_bid_point_mass():
    th = LognormalParams(1e-6, 0.0)
    q = optimal_bid(th, 10.0)
    assert q == pytest.approx(1.0, abs=1e-4)
    assert expected_revenue(th, q, 10.0) == pytest.approx(9.0, abs=1e-4)


def test_optimal_bid_matches_grid():
    th = LognormalParams(1.0, 0.0)
    q_grid, v_grid = grid_argmax(th, 10.0)
    q = optimal_bid(th, 10.0)
    assert abs(q - q_grid) <= 1e-4
    assert expected_revenue(th, q, 10.0) >= v_grid - 1e-12


def test_optimal_bid_zero_price():
    assert optimal_bid(LognormalParams(0.7, 1.3), 0.0) == 0.0


@pytest.mark.parametrize("p", [5e-324, 1e-310, 2.2250738585072014e-308])
def test_optimal_bid_subnormal_price_terminates(p):
    q = optimal_bid(LognormalParams(1.0, 0.0), p)
    assert 0.0 <= q <= p


def test_optimal_bid_rejects_bad_params():
    bogus = object.__new__(LognormalParams)
    object.__setattr__(bogus, "sigma", float("nan"))
    object.__setattr__(bogus, "mu", 0.0)
    with pytest.raises(ValueError, match="invalid parameters"):
        optimal_bid(bogus, 3.0)
    with pytest.raises(ValueError, match="invalid parameters"):
        LognormalParams(-1.0, 0.0)


theta_p = st.tuples(st.floats(math.log(0.02), math.log(6)), st.floats(-4, 5), st.floats(-4, 6))


@given(theta_p)
def test_optimal_bid_in_range_and_beats_random_bids(args):
    log_sigma, mu, log_p = args
    th, p = LognormalParams(math.exp(log_sigma), mu), math.exp(log_p)
    q = optimal_bid(th, p)
    assert 0.0 <= q <= p
    best = expected_revenue(th, q, p)
    qs = np.random.default_rng(abs(hash(args)) % 2**32).uniform(0, p, 1000)
    assert all(expected_revenue(th, float(r), p) <= best + 1e-12 * p for r in qs)


@given(theta_p)
def test_optimal_value_close_to_true_max(args):
    log_sigma, mu, log_p = args
    th, p = LognormalParams(math.exp(log_sigma), mu), math.exp(log_p)
    assert expected_revenue(th, optimal_bid(th, p), p) >= true_max(th, p) - 1e-9 * p


@given(theta_p, st.floats(-5, 5))
def test_scale_equivariance(args, log_s):
    log_sigma, mu, log_p = args
    s = math.exp(log_s)
    sigma = math.exp(log_sigma)
    q1 = optimal_bid(LognormalParams(sigma, mu), math.exp(log_p))
    q2 = optimal_bid(LognormalParams(sigma, mu + log_s), math.exp(log_p) * s)
    assert q2 == pytest.approx(q1 * s, rel=1e-6, abs=1e-9 * math.exp(log_p) * s)
