"""Auction logs: CSV I/O, the A/B advertiser-split construction, synthetic environments."""
from __future__ import annotations

import csv
import gzip
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import norm

from .auction import Impression
from .particles import make_rng

IMPRESSION_COLUMNS = ("id", "timestamp_ms", "p", "x")
RAW_COLUMNS = ("auction_id", "advertiser_id", "bid", "timestamp_ms")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class AuctionLog:
    """Column-wise sequence of impressions. Missing competitor bids are NaN."""

    ids: np.ndarray
    timestamps: np.ndarray
    prices: np.ndarray
    competitor: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.prices = np.asarray(self.prices, dtype=float)
        self.competitor = np.asarray(self.competitor, dtype=float)
        n = self.ids.size
        if not (self.timestamps.size == self.prices.size == self.competitor.size == n):
            raise DataError("column lengths differ")
        if np.any(~np.isfinite(self.prices)) or np.any(self.prices < 0):
            raise DataError("internal prices must be finite and >= 0")
        present = ~np.isnan(self.competitor)
        if np.any(self.competitor[present] < 0) or np.any(np.isinf(self.competitor)):
            raise DataError("competing bids must be finite and >= 0")
        if n > 1 and np.any(np.diff(self.ids) <= 0):
            raise DataError("ids must be strictly increasing")

    def __len__(self):
        return self.ids.size

    def __iter__(self) -> Iterator[Impression]:
        for i, t, p, x in zip(self.ids.tolist(), self.timestamps.tolist(),
                              self.prices.tolist(), self.competitor.tolist()):
            yield Impression(i, t, p, None if math.isnan(x) else x)

    @property
    def has_competitor(self) -> bool:
        return not np.isnan(self.competitor).any()

    @classmethod
    def from_impressions(cls, imps: Iterable[Impression]) -> "AuctionLog":
        imps = list(imps)
        return cls(
            [m.id for m in imps],
            [m.timestamp for m in imps],
            [m.internal_price for m in imps],
            [math.nan if m.competitor_max is None else m.competitor_max for m in imps],
        )


def _open_text(path, mode="r"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", newline="")
    return open(path, mode, newline="")


def _fmt(v: float) -> str:
    # repr round-trips a double exactly
    return repr(float(v))


def write_impressions(log: AuctionLog, path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, Path))
    fh = _open_text(path_or_buf, "w") if own else path_or_buf
    try:
        fh.write(",".join(IMPRESSION_COLUMNS) + "\n")
        for i, t, p, x in zip(log.ids.tolist(), log.timestamps.tolist(),
                              log.prices.tolist(), log.competitor.tolist()):
            fh.write(f"{i},{t},{_fmt(p)},{'' if math.isnan(x) else _fmt(x)}\n")
    finally:
        if own:
            fh.close()


def read_impressions(path_or_buf) -> AuctionLog:
    own = isinstance(path_or_buf, (str, Path))
    fh = _open_text(path_or_buf) if own else path_or_buf
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != IMPRESSION_COLUMNS:
            raise DataError(f"expected header {','.join(IMPRESSION_COLUMNS)}, got {header}")
        ids, ts, ps, xs = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, t, p, x = row
                ids.append(int(i))
                ts.append(int(t))
                ps.append(float(p))
                xs.append(float(x) if x.strip() else math.nan)
            except ValueError as e:
                raise DataError(f"line {lineno}: {e}") from None
    finally:
        if own:
            fh.close()
    return AuctionLog(ids, ts, ps, xs)


# -- A/B advertiser split --------------------------------------------------------


@dataclass(frozen=True)
class RawBidRecord:
    auction_id: str
    advertiser_id: str
    bid: float
    timestamp: int

    def __post_init__(self):
        if not (math.isfinite(self.bid) and self.bid >= 0):
            raise DataError(f"bid must be finite and >= 0, got {self.bid}")


def read_raw_bids(path_or_buf) -> list[RawBidRecord]:
    own = isinstance(path_or_buf, (str, Path))
    fh = _open_text(path_or_buf) if own else path_or_buf
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(RAW_COLUMNS) - set(reader.fieldnames):
            raise DataError(f"expected columns {','.join(RAW_COLUMNS)}, got {reader.fieldnames}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(RawBidRecord(row["auction_id"], row["advertiser_id"],
                                        float(row["bid"]), int(row["timestamp_ms"])))
            except (TypeError, ValueError) as e:
                raise DataError(f"line {lineno}: {e}") from None
    finally:
        if own:
            fh.close()
    return out


def assign_groups(advertisers: Iterable[str], seed: int, prob_a: float = 0.5) -> dict[str, str]:
    """Flip one coin per advertiser. The result does not depend on input order."""
    names = sorted(set(advertisers))
    u = make_rng(seed).random(len(names))
    return {a: ("A" if v < prob_a else "B") for a, v in zip(names, u.tolist())}


def build_ab_split(records: Sequence[RawBidRecord], seed: int, prob_a: float = 0.5,
                   scale: float = 1.0, groups: Optional[dict[str, str]] = None) -> AuctionLog:
    """Turn single-SSP auction logs into header-bidding impressions.

    Advertisers in group A play our internal auction, so ``p`` is the
    second-highest A bid; group B stands in for the other SSPs, so ``x`` is
    the highest B bid. Auctions with fewer than two A bids or no B bid are
    dropped. An auction's timestamp is its earliest record; output is sorted
    by (timestamp, auction_id). ``scale`` multiplies every emitted price.
    """
    if not records:
        raise DataError("no records")
    if groups is None:
        groups = assign_groups((r.advertiser_id for r in records), seed, prob_a)
    a_bids: dict[str, list[float]] = defaultdict(list)
    b_bids: dict[str, list[float]] = defaultdict(list)
    first_ts: dict[str, int] = {}
    for r in records:
        (a_bids if groups[r.advertiser_id] == "A" else b_bids)[r.auction_id].append(r.bid)
        first_ts[r.auction_id] = min(r.timestamp, first_ts.get(r.auction_id, r.timestamp))
    rows = []
    for auction, ts in first_ts.items():
        a, b = a_bids.get(auction, []), b_bids.get(auction, [])
        if len(a) < 2 or len(b) < 1:
            continue
        rows.append((ts, auction, sorted(a)[-2], max(b)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return AuctionLog(
        np.arange(len(rows)),
        [r[0] for r in rows],
        [r[2] * scale for r in rows],
        [r[3] * scale for r in rows],
    )


# -- synthetic environments -------------------------------------------------------


@dataclass
class SyntheticEnvConfig:
    """Ground-truth environment with lognormal competing bids per context.

    Context ``c`` holds the prices whose normal score falls in the ``c``-th
    of ``num_contexts`` equal-probability slices of ``Normal(p_mu, p_sigma)``
    in log space, so contexts are equally likely and align with price
    quantiles. Each context's ``mu`` is shifted in proportion to the slice's
    mean score; the shift and the per-context ``sigma`` are chosen so that
    ``ln x`` has overall sd ``x_sigma`` and ``corr(ln p, ln x) = rho``.

    ``drift`` moves ``mu`` over time: ``"constant"``; ``"sinusoidal"`` adds
    ``amplitude * sin(2 pi periods i / n)`` at impression ``i``;
    ``"random_walk"`` adds a ``Normal(0, walk_step)`` step to ``mu`` and to
    ``log sigma`` at each impression of the context.
    """

    num_contexts: int = 10
    horizon: int = 100_000
    seed: int = 0
    x_mu: float = 0.0
    x_sigma: float = 0.5
    p_mu: float = 0.5
    p_sigma: float = 0.5
    rho: float = 0.5
    drift: str = "constant"
    amplitude: float = 0.5
    periods: float = 1.0
    walk_step: float = 0.005
    start_ms: int = 1_500_000_000_000
    step_ms: int = 100

    def __post_init__(self):
        if self.num_contexts < 1 or self.horizon < 0:
            raise ValueError("num_contexts must be >= 1 and horizon >= 0")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if not (self.x_sigma > 0 and self.p_sigma > 0):
            raise ValueError("x_sigma and p_sigma must be > 0")
        if self.drift not in ("constant", "sinusoidal", "random_walk"):
            raise ValueError(f"unknown drift {self.drift!r}")
        if self.rho ** 2 >= self.slice_score_variance() and self.rho != 0:
            raise ValueError(
                f"|rho| too large for {self.num_contexts} contexts "
                f"(rho^2 must stay below {self.slice_score_variance():.4f})"
            )

    def slice_scores(self) -> np.ndarray:
        """Mean normal score of each equal-probability slice."""
        c = self.num_contexts
        edges = norm.ppf(np.arange(c + 1) / c)
        return (norm.pdf(edges[:-1]) - norm.pdf(edges[1:])) * c

    def slice_score_variance(self) -> float:
        return float(np.mean(self.slice_scores() ** 2))

    def context_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Initial ``(mu_c, sigma_c)`` per context."""
        g = self.slice_scores()
        var_g = float(np.mean(g ** 2))
        if self.rho == 0 or var_g == 0:
            return np.full(self.num_contexts, self.x_mu), np.full(self.num_contexts, self.x_sigma)
        slope = self.rho * self.x_sigma / var_g
        sigma = self.x_sigma * math.sqrt(1.0 - self.rho ** 2 / var_g)
        return self.x_mu + slope * g, np.full(self.num_contexts, sigma)


@dataclass
class SyntheticDataset:
    log: AuctionLog
    contexts: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    config: SyntheticEnvConfig = field(repr=False)


def generate_synthetic(config: SyntheticEnvConfig) -> SyntheticDataset:
    """Draw an auction log together with the true parameters at every impression."""
    n, cnum = config.horizon, config.num_contexts
    rng = make_rng(config.seed)
    ctx = rng.integers(0, cnum, size=n)
    u = rng.random(n)
    # stratified normal score: uniform within the context's probability slice
    z_p = ndtri(np.clip((ctx + u) / cnum, 1e-16, 1 - 1e-16))
    prices = np.exp(config.p_mu + config.p_sigma * z_p)

    mu0, sigma0 = config.context_params()
    mu = mu0[ctx].copy()
    log_sigma = np.log(sigma0[ctx])
    if config.drift == "sinusoidal":
        mu += config.amplitude * np.sin(2.0 * np.pi * config.periods * np.arange(n) / max(n, 1))
    elif config.drift == "random_walk":
        steps = rng.normal(0.0, config.walk_step, size=(2, n))
        for c in range(cnum):
            pos = np.flatnonzero(ctx == c)
            mu[pos] += np.cumsum(steps[0, pos])
            log_sigma[pos] += np.cumsum(steps[1, pos])
    sigma = np.exp(log_sigma)
    x = np.exp(mu + sigma * rng.standard_normal(n))

    ids = np.arange(n)
    log = AuctionLog(ids, config.start_ms + config.step_ms * ids, prices, x)
    return SyntheticDataset(log, ctx, mu, sigma, config)


def share_x_below_p_point_mass(config: SyntheticEnvConfig) -> float:
    """``P(p >= e^mu)`` when the competing bid is the constant ``e^mu`` (rho = 0)."""
    return float(ndtr((config.p_mu - config.x_mu) / config.p_sigma))


# -- summary --------------------------------------------------------------------


@dataclass
class DatasetStats:
    n: int
    share_x_le_p: float
    context_counts: Optional[list[int]] = None

    def format(self) -> str:
        lines = [f"n = {self.n}", f"share(x <= p) = {100.0 * self.share_x_le_p:.1f}%"]
        if self.context_counts is not None:
            lines.append("per-context counts: " + " ".join(str(c) for c in self.context_counts))
        return "\n".join(lines)


def dataset_stats(log: AuctionLog, binner=None) -> DatasetStats:
    if not log.has_competitor:
        raise DataError("competing bids missing; share(x <= p) undefined")
    n = len(log)
    share = float(np.mean(log.competitor <= log.prices)) if n else 0.0
    counts = None
    if binner is not None:
        counts = np.bincount(binner.bin_many(log.prices), minlength=binner.num_contexts).tolist()
    return DatasetStats(n, share, counts)


def to_csv_string(log: AuctionLog) -> str:
    buf = io.StringIO()
    write_impressions(log, buf)
    return buf.getvalue()
