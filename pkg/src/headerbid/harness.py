"""Replay auction logs through a bidding policy and record performance.

The harness is the only place that sees the competing bid ``x``: it decides
the auction outcome and hands the policy nothing but the win flag and the
revenue. The oracle is evaluated here too, because by definition it needs
``x``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .auction import oracle_bid
from .contexts import DEFAULT_WARMUP, ContextBinner
from .data import AuctionLog, DataError
from .particles import FilterConfig, make_rng
from .policies import (DEFAULT_ARMS, DEFAULT_GAMMA, Exp3Policy, FixedShadingPolicy,
                       ThompsonPolicy, UCBPolicy)

SNAPSHOT_FORMAT = "headerbid-snapshot"
SNAPSHOT_VERSION = 1
METRIC_COLUMNS = ("policy", "n", "avg_reward", "success_rate", "oracle_avg_reward", "regret")
POLICY_KINDS = ("ts", "ucb", "exp3", "fixed", "oracle")


class SnapshotError(RuntimeError):
    pass


@dataclass
class PolicyConfig:
    kind: str = "ts"
    label: Optional[str] = None
    seed: int = 0
    filter: FilterConfig = field(default_factory=FilterConfig)
    num_arms: int = DEFAULT_ARMS
    gamma: float = DEFAULT_GAMMA
    # None: the largest internal price the harness has seen before replay
    reward_bound: Optional[float] = None
    contextual: bool = True
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {', '.join(POLICY_KINDS)}")
        if self.label is None:
            self.label = f"fixed:{self.alpha:g}" if self.kind == "fixed" else self.kind

    @classmethod
    def parse(cls, text: str, **overrides) -> "PolicyConfig":
        """``"ts"``, ``"ucb"``, ``"exp3"``, ``"oracle"``, ``"fixed"`` or ``"fixed:0.8"``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "fixed" and arg:
            overrides.setdefault("alpha", float(arg))
        elif arg:
            raise ValueError(f"policy {kind!r} takes no argument")
        return cls(kind=kind, **overrides)

    def build(self, reward_bound: float):
        bound = self.reward_bound if self.reward_bound is not None else reward_bound
        if self.kind == "ts":
            return ThompsonPolicy(self.filter, self.seed)
        if self.kind == "ucb":
            return UCBPolicy(self.num_arms, bound, self.gamma, self.seed, self.contextual)
        if self.kind == "exp3":
            return Exp3Policy(self.num_arms, bound, self.gamma, self.seed, self.contextual)
        if self.kind == "fixed":
            return FixedShadingPolicy(self.alpha)
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter"] = self.filter.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        d = dict(d)
        d["filter"] = FilterConfig(**d.get("filter", {}))
        return cls(**d)


@dataclass
class RunConfig:
    order: str = "shuffled"
    # seeds the shuffle only; policies carry their own seeds
    order_seed: int = 0
    num_contexts: int = 100
    checkpoint_every: int = 1000
    binning: str = "offline"
    warmup: int = DEFAULT_WARMUP
    time_decisions: bool = True

    def __post_init__(self):
        if self.order not in ("shuffled", "chronological"):
            raise ValueError("order must be 'shuffled' or 'chronological'")
        if self.binning not in ("offline", "streaming"):
            raise ValueError("binning must be 'offline' or 'streaming'")
        if self.checkpoint_every < 1 or self.num_contexts < 1:
            raise ValueError("checkpoint_every and num_contexts must be >= 1")


@dataclass(frozen=True)
class Checkpoint:
    n: int
    cum_revenue: float
    avg_reward: float
    success_rate: float
    oracle_avg_reward: float
    regret: float


@dataclass
class RunMetrics:
    policy: str
    checkpoints: list[Checkpoint]
    latency_ns: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def convergence_n(self, tol: float = 0.01) -> Optional[int]:
        """First checkpoint whose average reward is within ``tol`` (relative) of the final one."""
        target = self.final.avg_reward
        for cp in self.checkpoints:
            if abs(cp.avg_reward - target) <= tol * abs(target):
                return cp.n
        return None

    def rows(self) -> list[tuple]:
        return [(self.policy, c.n, c.avg_reward, c.success_rate, c.oracle_avg_reward, c.regret)
                for c in self.checkpoints]


def replay_order(log: AuctionLog, order: str, seed: int) -> np.ndarray:
    if order == "chronological":
        return np.lexsort((log.ids, log.timestamps))
    return make_rng(seed).permutation(len(log))


def fingerprint(log: AuctionLog) -> str:
    h = hashlib.sha256()
    for arr in (log.ids, log.timestamps, log.prices, log.competitor):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


class Replay:
    """A resumable replay of one policy over one log."""

    def __init__(self, log: AuctionLog, policy: PolicyConfig, config: RunConfig | None = None):
        if len(log) == 0:
            raise DataError("empty dataset")
        if not log.has_competitor:
            raise DataError("cannot adjudicate: competing bids missing")
        self.log = log
        self.policy_config = policy
        self.config = config or RunConfig()
        self.order = replay_order(log, self.config.order, self.config.order_seed)
        prices = log.prices[self.order]
        if self.config.binning == "offline":
            fit_on = prices
        else:
            fit_on = prices[: self.config.warmup]
        self.binner = ContextBinner.fit(fit_on, self.config.num_contexts)
        self.reward_bound = float(max(fit_on.max(), np.finfo(float).tiny))
        self.contexts = self.binner.bin_many(prices)
        self.policy = policy.build(self.reward_bound)
        self.position = 0
        self.cum_revenue = 0.0
        self.cum_oracle = 0.0
        self.wins = 0
        self.checkpoints: list[Checkpoint] = []
        self._latency: list[int] = []

    def __len__(self):
        return len(self.log)

    @property
    def done(self) -> bool:
        return self.position >= len(self.log)

    def _checkpoint(self):
        n = self.position
        self.checkpoints.append(Checkpoint(
            n=n,
            cum_revenue=self.cum_revenue,
            avg_reward=self.cum_revenue / n,
            success_rate=self.wins / n,
            oracle_avg_reward=self.cum_oracle / n,
            regret=self.cum_oracle - self.cum_revenue,
        ))

    def advance(self, until: Optional[int] = None) -> "Replay":
        """Process impressions up to (not including) replay position ``until``."""
        n_total = len(self.log)
        stop = n_total if until is None else min(until, n_total)
        every = self.config.checkpoint_every
        order, ctx = self.order.tolist(), self.contexts.tolist()
        prices, comp = self.log.prices.tolist(), self.log.competitor.tolist()
        policy = self.policy
        timing = self.config.time_decisions
        clock = time.perf_counter_ns
        for i in range(self.position, stop):
            j = order[i]
            p, x = prices[j], comp[j]
            best = oracle_bid(p, x)
            if policy is None:
                bid = best
                won = bid >= x
                rev = p - bid if won else 0.0
            else:
                t0 = clock() if timing else 0
                decision = policy.decide(ctx[i], p)
                bid = decision.bid
                won = bid >= x
                rev = p - bid if won else 0.0
                policy.feedback(ctx[i], decision, won, rev)
                if timing:
                    self._latency.append(clock() - t0)
            self.cum_revenue += rev
            self.wins += won
            self.cum_oracle += p - best if best >= x else 0.0
            self.position = i + 1
            if self.position % every == 0 or self.position == n_total:
                self._checkpoint()
        return self

    def metrics(self) -> RunMetrics:
        lat = {}
        if self._latency:
            q = np.quantile(np.asarray(self._latency, dtype=float), [0.5, 0.9, 0.99])
            lat = {"p50": float(q[0]), "p90": float(q[1]), "p99": float(q[2])}
        diag = {"num_contexts": self.binner.num_contexts, "reward_bound": self.reward_bound}
        if isinstance(self.policy, ThompsonPolicy):
            diag["rescues"] = sum(f.rescues for f in self.policy.filters.values())
            diag["resamples"] = sum(f.resamples for f in self.policy.filters.values())
        return RunMetrics(self.policy_config.label, list(self.checkpoints), lat, diag)

    # -- persistence ----------------------------------------------------------

    def snapshot(self, path) -> None:
        """Write the replay state as JSON lines: a header, then one record per context."""
        header = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "dataset": fingerprint(self.log),
            "policy": self.policy_config.to_dict(),
            "run": asdict(self.config),
            "binner": json.loads(self.binner.to_json()),
            "position": self.position,
            "cum_revenue": self.cum_revenue,
            "cum_oracle": self.cum_oracle,
            "wins": self.wins,
            "checkpoints": [asdict(c) for c in self.checkpoints],
        }
        records = self.policy.state_records() if self.policy is not None else []
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        tmp.replace(path)

    @classmethod
    def restore(cls, path, log: AuctionLog) -> "Replay":
        """Rebuild a replay from :meth:`snapshot` output. Nothing is loaded unless all of it parses."""
        try:
            with open(path) as fh:
                lines = [ln for ln in fh.read().splitlines() if ln.strip()]
            if not lines:
                raise SnapshotError(f"{path}: empty snapshot")
            header = json.loads(lines[0])
            records = [json.loads(ln) for ln in lines[1:]]
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise SnapshotError(f"{path}: unreadable snapshot ({e})") from None
        if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError(f"{path}: not a {SNAPSHOT_FORMAT} file")
        if header.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"{path}: snapshot version {header.get('version')!r} is not supported "
                f"(expected {SNAPSHOT_VERSION})")
        if header.get("dataset") != fingerprint(log):
            raise SnapshotError(f"{path}: snapshot was taken on a different dataset")
        try:
            policy = PolicyConfig.from_dict(header["policy"])
            config = RunConfig(**header["run"])
            replay = cls(log, policy, config)
            if json.loads(replay.binner.to_json()) != header["binner"]:
                raise SnapshotError(f"{path}: context binning does not match the dataset")
            if replay.policy is not None:
                replay.policy.load_records(records)
            replay.position = int(header["position"])
            replay.cum_revenue = float(header["cum_revenue"])
            replay.cum_oracle = float(header["cum_oracle"])
            replay.wins = int(header["wins"])
            replay.checkpoints = [Checkpoint(**c) for c in header["checkpoints"]]
        except SnapshotError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise SnapshotError(f"{path}: corrupt snapshot ({e})") from None
        return replay


def run(log: AuctionLog, policy: PolicyConfig, config: RunConfig | None = None) -> RunMetrics:
    return Replay(log, policy, config).advance().metrics()


@dataclass
class Comparison:
    metrics: list[RunMetrics]

    @property
    def winner(self) -> str:
        return max(self.metrics, key=lambda m: m.final.avg_reward).policy

    def report(self, tol: float = 0.01) -> str:
        lines = [f"{'policy':<12} {'n':>9} {'avg_reward':>12} {'success':>8} {'oracle':>10} "
                 f"{'regret':>12} {'conv_n(1%)':>11}"]
        for m in self.metrics:
            f = m.final
            conv = m.convergence_n(tol)
            lines.append(f"{m.policy:<12} {f.n:>9} {f.avg_reward:>12.6f} {f.success_rate:>8.2%} "
                         f"{f.oracle_avg_reward:>10.6f} {f.regret:>12.4f} {conv if conv else '-':>11}")
        lines.append(f"winner: {self.winner}")
        return "\n".join(lines)


def compare(log: AuctionLog, policies: Sequence[PolicyConfig], config: RunConfig | None = None) -> Comparison:
    """Run each policy on the same impression order."""
    labels = [p.label for p in policies]
    if len(set(labels)) != len(labels):
        # keep CSV rows attributable
        policies = [replace(p, label=f"{p.label}#{i}") for i, p in enumerate(policies)]
    return Comparison([run(log, p, config) for p in policies])


def write_metrics_csv(metrics: Sequence[RunMetrics], path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in metrics:
            for row in m.rows():
                w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])
    finally:
        if own:
            fh.close()


def read_metrics_csv(path) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["policy"], []).append(
                {k: (row[k] if k == "policy" else int(row[k]) if k == "n" else float(row[k]))
                 for k in METRIC_COLUMNS})
    return out
