"""Lognormal model of the highest competing bid and the per-parameter bid solver.

The expected revenue of bidding ``q`` with internal price ``p`` when the
competing bid has CDF ``F`` is ``(p - q) * F(q)``. For the lognormal family
``log F`` is concave in ``q``, so the objective is log-concave on ``(0, p)``
and has a single maximizer. The solver runs golden-section search on the
log of the objective, which stays finite (and strictly concave) even where
``F`` underflows to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import ndtr

_SQRT2 = math.sqrt(2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# Bracket width of the bid search, relative to the internal price.
BID_TOL = 1e-12
# shrink steps to reach BID_TOL; also a hard stop when p is subnormal and tol underflows
_MAX_STEPS = math.ceil(math.log(BID_TOL) / math.log(_INV_PHI)) + 2


@dataclass(frozen=True)
class LognormalParams:
    """``ln x ~ Normal(mu, sigma**2)``."""

    sigma: float
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0 and math.isfinite(self.mu)):
            raise ValueError("invalid parameters")


def log_ndtr(z: float) -> float:
    """``log Phi(z)`` for a scalar, accurate far into the lower tail."""
    if z > 0.0:
        return math.log1p(-0.5 * math.erfc(z / _SQRT2))
    if z > -30.0:
        return math.log(0.5 * math.erfc(-z / _SQRT2))
    # Mills-ratio expansion; its truncation error is below 2e-10 at z = -30.
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
    return -0.5 * z2 - math.log(-z) - _HALF_LOG_2PI + math.log(series)


class BidDistribution(Protocol):
    """What the filter and the policy need from a competing-bid family."""

    def cdf(self, params, value: float) -> float: ...

    def cdf_particles(self, mu: np.ndarray, sigma: np.ndarray, value: float) -> np.ndarray: ...

    def optimal_bid(self, params, internal_price: float) -> float: ...


class Lognormal:
    name = "lognormal"

    @staticmethod
    def cdf(params: LognormalParams, value: float) -> float:
        if value <= 0.0:
            return 0.0
        z = (math.log(value) - params.mu) / params.sigma
        return 0.5 * math.erfc(-z / _SQRT2)

    @staticmethod
    def log_cdf(params: LognormalParams, value: float) -> float:
        if value <= 0.0:
            return -math.inf
        return log_ndtr((math.log(value) - params.mu) / params.sigma)

    @staticmethod
    def cdf_particles(mu: np.ndarray, sigma: np.ndarray, value: float) -> np.ndarray:
        """CDF at ``value`` for every particle at once."""
        if value <= 0.0:
            return np.zeros_like(mu)
        return ndtr((math.log(value) - mu) / sigma)

    @staticmethod
    def sf_particles(mu: np.ndarray, sigma: np.ndarray, value: float) -> np.ndarray:
        """``1 - CDF`` without cancellation in the upper tail."""
        if value <= 0.0:
            return np.ones_like(mu)
        return ndtr((mu - math.log(value)) / sigma)

    def optimal_bid(self, params: LognormalParams, internal_price: float) -> float:
        return optimal_bid(params, internal_price)


LOGNORMAL = Lognormal()


def cdf(params: LognormalParams, value: float) -> float:
    return Lognormal.cdf(params, value)


def expected_revenue(params: LognormalParams, bid: float, internal_price: float) -> float:
    return (internal_price - bid) * Lognormal.cdf(params, bid)


def optimal_bid(params: LognormalParams, internal_price: float) -> float:
    """Bid in ``[0, internal_price]`` maximizing ``(p - q) * F(q)``.

    Golden-section search on ``log(p - q) + log F(q)`` down to a bracket of
    ``BID_TOL * p``. Returns 0 when ``p == 0``.
    """
    mu, sigma = params.mu, params.sigma
    if not (math.isfinite(mu) and math.isfinite(sigma) and sigma > 0):
        raise ValueError("invalid parameters")
    p = float(internal_price)
    if not p > 0.0:
        return 0.0

    inv_sigma = 1.0 / sigma
    log = math.log

    def score(q):
        if q <= 0.0 or q >= p:
            return -math.inf
        return log(p - q) + log_ndtr((log(q) - mu) * inv_sigma)

    lo, hi = 0.0, p
    tol = BID_TOL * p
    a = hi - _INV_PHI * (hi - lo)
    b = lo + _INV_PHI * (hi - lo)
    fa, fb = score(a), score(b)
    for _ in range(_MAX_STEPS):
        if hi - lo <= tol:
            break
        # ">=" keeps the lower half on ties: smallest maximizer wins.
        if fa >= fb:
            hi, b, fb = b, a, fa
            a = hi - _INV_PHI * (hi - lo)
            fa = score(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + _INV_PHI * (hi - lo)
            fb = score(b)
    q = a if fa >= fb else b
    return min(max(q, 0.0), p)
