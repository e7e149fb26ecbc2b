"""Particle approximation of one context's posterior over lognormal parameters.

Each update moves every particle one step of a Gaussian random walk (on
``mu`` and on ``log sigma``), reweights it by the censored likelihood of the
observed win or loss, and resamples multinomially when the effective sample
size drops below the threshold. The proposal equals the transition kernel,
so no extra importance correction appears in the weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import LOGNORMAL, LognormalParams

UNDERFLOW = 1e-300


@dataclass
class FilterConfig:
    num_particles: int = 100
    epsilon: float = 0.005
    # None means num_particles / 2 (at least 1)
    ess_threshold: Optional[float] = None
    prior_mu_range: tuple[float, float] = (math.log(0.01), math.log(1000.0))
    prior_log_sigma_range: tuple[float, float] = (math.log(0.05), math.log(5.0))

    def __post_init__(self):
        if self.ess_threshold is None:
            self.ess_threshold = max(1.0, self.num_particles / 2)
        self.prior_mu_range = tuple(float(v) for v in self.prior_mu_range)
        self.prior_log_sigma_range = tuple(float(v) for v in self.prior_log_sigma_range)
        self.validate()

    def validate(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not 1 <= self.ess_threshold <= self.num_particles:
            raise ValueError("ess_threshold must lie in [1, num_particles]")
        for name in ("prior_mu_range", "prior_log_sigma_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must satisfy lo < hi")

    def to_dict(self) -> dict:
        return {
            "num_particles": self.num_particles,
            "epsilon": self.epsilon,
            "ess_threshold": self.ess_threshold,
            "prior_mu_range": list(self.prior_mu_range),
            "prior_log_sigma_range": list(self.prior_log_sigma_range),
        }


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, stream)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def rng_to_hex(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state, sort_keys=True).encode().hex()


def rng_from_hex(text: str) -> np.random.Generator:
    state = json.loads(bytes.fromhex(text).decode())
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)


@dataclass
class ParticleSet:
    """``K`` weighted particles ``(mu_k, sigma_k)``; weights always sum to 1."""

    mu: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    rng: np.random.Generator
    config: FilterConfig
    family: object = field(default=LOGNORMAL, repr=False)
    rescues: int = 0
    resamples: int = 0

    @classmethod
    def initial(cls, config: FilterConfig, seed: int, stream: int = 0) -> "ParticleSet":
        """Draw ``K`` particles from the uniform prior; equal weights."""
        config.validate()
        rng = make_rng(seed, stream)
        k = config.num_particles
        mu = rng.uniform(*config.prior_mu_range, size=k)
        sigma = np.exp(rng.uniform(*config.prior_log_sigma_range, size=k))
        return cls(mu, sigma, np.full(k, 1.0 / k), rng, config)

    def __len__(self):
        return self.weights.size

    def copy(self) -> "ParticleSet":
        bitgen = type(self.rng.bit_generator)()
        bitgen.state = self.rng.bit_generator.state
        return ParticleSet(self.mu.copy(), self.sigma.copy(), self.weights.copy(),
                           np.random.Generator(bitgen), self.config, self.family,
                           self.rescues, self.resamples)

    def drift(self):
        eps = self.config.epsilon
        if eps == 0.0:
            return
        z = self.rng.standard_normal((2, self.weights.size))
        # multiplying by exp(.) is a random walk on log sigma; sigma stays > 0
        self.sigma *= np.exp(eps * z[0])
        self.mu += eps * z[1]

    def reweight(self, bid: float, won: bool):
        """Multiply weights by the censored likelihood and renormalize.

        No drift and no resampling; :meth:`update` chains all three.
        """
        if won:
            lik = self.family.cdf_particles(self.mu, self.sigma, bid)
        else:
            lik = self.family.sf_particles(self.mu, self.sigma, bid)
        w = self.weights * lik
        total = w.sum()
        if not total > UNDERFLOW:
            # every particle says the observation was (numerically) impossible
            self.weights = np.full(w.size, 1.0 / w.size)
            self.rescues += 1
        else:
            self.weights = w / total

    def update(self, bid: float, won: bool):
        self.drift()
        self.reweight(bid, won)
        self.resample_if_needed()

    def effective_sample_size(self) -> float:
        return 1.0 / float(np.dot(self.weights, self.weights))

    def _draw_indices(self, n: int) -> np.ndarray:
        cum = np.cumsum(self.weights)
        # side="right" never lands on a zero-weight particle
        idx = np.searchsorted(cum, self.rng.random(n) * cum[-1], side="right")
        return np.minimum(idx, cum.size - 1)

    def resample_if_needed(self) -> bool:
        if self.effective_sample_size() >= self.config.ess_threshold:
            return False
        k = self.weights.size
        idx = self._draw_indices(k)
        self.mu = self.mu[idx]
        self.sigma = self.sigma[idx]
        self.weights = np.full(k, 1.0 / k)
        self.resamples += 1
        return True

    def sample_index(self) -> int:
        return int(self._draw_indices(1)[0])

    def sample_theta(self) -> LognormalParams:
        k = self.sample_index()
        return LognormalParams(sigma=float(self.sigma[k]), mu=float(self.mu[k]))

    def posterior_mean(self) -> tuple[float, float]:
        """Weighted means of ``mu`` and ``sigma``."""
        return float(self.weights @ self.mu), float(self.weights @ self.sigma)

    def to_record(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "particles": [{"mu": m, "sigma": s} for m, s in zip(self.mu.tolist(), self.sigma.tolist())],
            "rng": rng_to_hex(self.rng),
            "rescues": self.rescues,
            "resamples": self.resamples,
        }

    @classmethod
    def from_record(cls, rec: dict, config: FilterConfig) -> "ParticleSet":
        parts = rec["particles"]
        mu = np.array([p["mu"] for p in parts], dtype=float)
        sigma = np.array([p["sigma"] for p in parts], dtype=float)
        weights = np.array(rec["weights"], dtype=float)
        if not (mu.size == sigma.size == weights.size == config.num_particles):
            raise ValueError("particle count does not match the filter config")
        if not (np.all(sigma > 0) and np.all(np.isfinite(mu)) and np.all(weights >= 0)):
            raise ValueError("invalid particle record")
        return cls(mu, sigma, weights, rng_from_hex(rec["rng"]), config,
                   rescues=int(rec.get("rescues", 0)), resamples=int(rec.get("resamples", 0)))
