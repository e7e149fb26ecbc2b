"""Revenue semantics of one header-bidding auction, seen from our SSP.

Money is a plain float in abstract currency units. A bid wins when it is
greater than or equal to the highest competing bid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Impression:
    """One auction opportunity.

    ``competitor_max`` is the highest bid among the other SSPs. It is only
    known in replay logs and is never handed to a policy.
    """

    id: int
    timestamp: int
    internal_price: float
    competitor_max: Optional[float] = None
    context_id: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.internal_price) and self.internal_price >= 0):
            raise ValueError(f"internal_price must be finite and >= 0, got {self.internal_price}")
        x = self.competitor_max
        if x is not None and not (math.isfinite(x) and x >= 0):
            raise ValueError(f"competitor_max must be finite and >= 0, got {x}")


@dataclass(frozen=True)
class AuctionOutcome:
    won: bool
    bid: float
    revenue: float


def revenue(bid: float, internal_price: float, competitor_max: float) -> float:
    """Revenue of bidding ``bid``: ``internal_price - bid`` on a win, else 0.

    Wins with ``bid > internal_price`` give a negative revenue; nothing is
    clamped.
    """
    if bid >= competitor_max:
        return internal_price - bid
    return 0.0


def oracle_bid(internal_price: float, competitor_max: float) -> float:
    """Hindsight-optimal bid: match the competitor when that is profitable."""
    if competitor_max <= internal_price:
        return competitor_max
    return 0.0


def adjudicate(bid: float, internal_price: float, competitor_max: float) -> AuctionOutcome:
    won = bid >= competitor_max
    return AuctionOutcome(won=won, bid=bid, revenue=internal_price - bid if won else 0.0)
