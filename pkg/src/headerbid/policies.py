"""Bidding policies.

Every policy implements the same two calls::

    decision = policy.decide(context, internal_price)
    policy.feedback(context, decision, won, revenue)

Feedback carries only the win indicator and the realized revenue; the
competing bid never crosses this interface.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .dist import LognormalParams, optimal_bid
from .particles import FilterConfig, ParticleSet, make_rng, rng_from_hex, rng_to_hex

log = logging.getLogger(__name__)

DEFAULT_ARMS = 100
DEFAULT_GAMMA = 0.05


@dataclass(frozen=True)
class PolicyDecision:
    bid: float
    arm: Optional[int] = None
    sampled_theta: Optional[LognormalParams] = None


class Policy(Protocol):
    name: str

    def decide(self, context: int, internal_price: float) -> PolicyDecision: ...

    def feedback(self, context: int, decision: PolicyDecision, won: bool, revenue: float) -> None: ...


# -- Thompson sampling ----------------------------------------------------------


def ts_decide(filt: ParticleSet, internal_price: float) -> PolicyDecision:
    theta = filt.sample_theta()
    return PolicyDecision(bid=optimal_bid(theta, internal_price), sampled_theta=theta)


def ts_feedback(filt: ParticleSet, bid: float, won: bool) -> ParticleSet:
    filt.update(bid, won)
    return filt


class ThompsonPolicy:
    """One particle filter per context, created on first use.

    Filter ``c`` draws from the random stream ``(seed, c)``, so contexts
    stay independent of each other and of the order they first appear in.
    """

    name = "ts"

    def __init__(self, config: FilterConfig | None = None, seed: int = 0):
        self.config = config or FilterConfig()
        self.seed = seed
        self.filters: dict[int, ParticleSet] = {}

    def filter(self, context: int) -> ParticleSet:
        f = self.filters.get(context)
        if f is None:
            f = self.filters[context] = ParticleSet.initial(self.config, self.seed, context)
        return f

    def decide(self, context, internal_price):
        return ts_decide(self.filter(context), internal_price)

    def feedback(self, context, decision, won, revenue):
        ts_feedback(self.filter(context), decision.bid, won)

    def state_records(self) -> list[dict]:
        return [{"context": c, **self.filters[c].to_record()} for c in sorted(self.filters)]

    def load_records(self, records: list[dict]):
        self.filters = {int(r["context"]): ParticleSet.from_record(r, self.config) for r in records}


# -- multiplicative-shading bandits ---------------------------------------------


@dataclass
class BanditState:
    """Per-context state shared by UCB1 and Exp3.

    Arms are numbered ``1..J`` and arm ``j`` bids ``j / J`` of the internal
    price. Arrays are indexed by ``j - 1``. Rewards are divided by
    ``reward_bound`` before use, so the algorithms see values in ``[0, 1]``.
    """

    num_arms: int = DEFAULT_ARMS
    reward_bound: float = 1.0
    gamma: float = DEFAULT_GAMMA
    t: int = 0
    counts: np.ndarray = None
    sums: np.ndarray = None
    log_weights: np.ndarray = None
    rng: np.random.Generator = None
    clamped: int = 0

    def __post_init__(self):
        if self.num_arms < 1:
            raise ValueError("num_arms must be >= 1")
        if not self.reward_bound > 0:
            raise ValueError("reward_bound must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.counts is None:
            self.counts = np.zeros(self.num_arms, dtype=np.int64)
        if self.sums is None:
            self.sums = np.zeros(self.num_arms)
        if self.log_weights is None:
            self.log_weights = np.zeros(self.num_arms)
        if self.rng is None:
            self.rng = make_rng(0)

    def scaled(self, reward: float) -> float:
        r = reward / self.reward_bound
        if r < 0.0 or r > 1.0:
            self.clamped += 1
            # once per state; a streaming bound can be exceeded many times
            if self.clamped == 1:
                log.warning("reward %r outside [0, %r]; clamped", reward, self.reward_bound)
            r = min(max(r, 0.0), 1.0)
        return r

    def shading(self, arm: int) -> float:
        return arm / self.num_arms

    def exp3_probabilities(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return (1.0 - self.gamma) * w / w.sum() + self.gamma / self.num_arms

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "counts": self.counts.tolist(),
            "sums": self.sums.tolist(),
            "log_weights": self.log_weights.tolist(),
            "rng": rng_to_hex(self.rng),
        }

    def load(self, rec: dict):
        counts = np.array(rec["counts"], dtype=np.int64)
        sums = np.array(rec["sums"], dtype=float)
        lw = np.array(rec["log_weights"], dtype=float)
        if not (counts.size == sums.size == lw.size == self.num_arms):
            raise ValueError("arm count does not match the bandit config")
        self.t, self.counts, self.sums, self.log_weights = int(rec["t"]), counts, sums, lw
        self.rng = rng_from_hex(rec["rng"])


def ucb_indices(state: BanditState) -> np.ndarray:
    """UCB1 index per arm; unplayed arms get ``+inf``."""
    n = state.counts
    idx = np.full(state.num_arms, np.inf)
    played = n > 0
    if played.any():
        bonus = np.sqrt(2.0 * math.log(max(state.t, 1)) / n[played])
        idx[played] = state.sums[played] / n[played] + bonus
    return idx


def ucb_decide(state: BanditState, internal_price: float) -> PolicyDecision:
    # np.argmax returns the first maximizer, i.e. the lowest arm on ties
    arm = int(np.argmax(ucb_indices(state))) + 1
    return PolicyDecision(bid=state.shading(arm) * internal_price, arm=arm)


def ucb_feedback(state: BanditState, arm: int, reward: float) -> BanditState:
    state.t += 1
    state.counts[arm - 1] += 1
    state.sums[arm - 1] += state.scaled(reward)
    return state


def exp3_decide(state: BanditState, internal_price: float = 1.0) -> PolicyDecision:
    probs = state.exp3_probabilities()
    cum = np.cumsum(probs)
    arm = min(int(np.searchsorted(cum, state.rng.random() * cum[-1], side="right")), state.num_arms - 1) + 1
    return PolicyDecision(bid=state.shading(arm) * internal_price, arm=arm)


def exp3_feedback(state: BanditState, arm: int, reward: float) -> BanditState:
    """Importance-weighted exponential update of the played arm."""
    p_arm = state.exp3_probabilities()[arm - 1]
    state.t += 1
    state.counts[arm - 1] += 1
    state.sums[arm - 1] += state.scaled(reward)
    state.log_weights[arm - 1] += state.gamma * (state.scaled(reward) / p_arm) / state.num_arms
    return state


def exp3_theory_gamma(num_arms: int, horizon: int) -> float:
    """``min(1, sqrt(J ln J / ((e - 1) n)))``."""
    if num_arms < 2:
        return 1.0
    return min(1.0, math.sqrt(num_arms * math.log(num_arms) / ((math.e - 1.0) * horizon)))


class _BanditPolicy:
    """Shared plumbing: one :class:`BanditState` per context, or one overall."""

    name = "bandit"

    def __init__(self, num_arms: int = DEFAULT_ARMS, reward_bound: float = 1.0,
                 gamma: float = DEFAULT_GAMMA, seed: int = 0, contextual: bool = True):
        self.num_arms = num_arms
        self.reward_bound = reward_bound
        self.gamma = gamma
        self.seed = seed
        self.contextual = contextual
        self.states: dict[int, BanditState] = {}

    def state(self, context: int) -> BanditState:
        key = context if self.contextual else 0
        s = self.states.get(key)
        if s is None:
            s = self.states[key] = BanditState(self.num_arms, self.reward_bound, self.gamma,
                                               rng=make_rng(self.seed, key))
        return s

    def state_records(self) -> list[dict]:
        return [{"context": c, **self.states[c].to_record()} for c in sorted(self.states)]

    def load_records(self, records: list[dict]):
        self.states = {}
        for r in records:
            s = self.state(int(r["context"]))
            s.load(r)


class UCBPolicy(_BanditPolicy):
    name = "ucb"

    def decide(self, context, internal_price):
        return ucb_decide(self.state(context), internal_price)

    def feedback(self, context, decision, won, revenue):
        ucb_feedback(self.state(context), decision.arm, revenue)


class Exp3Policy(_BanditPolicy):
    name = "exp3"

    def decide(self, context, internal_price):
        return exp3_decide(self.state(context), internal_price)

    def feedback(self, context, decision, won, revenue):
        exp3_feedback(self.state(context), decision.arm, revenue)


# -- fixed shading --------------------------------------------------------------


def fixed_decide(alpha: float, internal_price: float) -> PolicyDecision:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return PolicyDecision(bid=alpha * internal_price)


@dataclass
class FixedShadingPolicy:
    alpha: float = 1.0
    name: str = field(default="fixed", init=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def decide(self, context, internal_price):
        return fixed_decide(self.alpha, internal_price)

    def feedback(self, context, decision, won, revenue):
        pass

    def state_records(self) -> list[dict]:
        return []

    def load_records(self, records):
        pass
