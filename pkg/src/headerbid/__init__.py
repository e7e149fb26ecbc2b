"""Thompson-sampling bid optimization for an SSP in first-price header-bidding auctions."""
from .auction import AuctionOutcome, Impression, adjudicate, oracle_bid, revenue
from .contexts import ContextBinner
from .data import (AuctionLog, DataError, RawBidRecord, SyntheticEnvConfig, build_ab_split,
                   dataset_stats, generate_synthetic, read_impressions, write_impressions)
from .dist import LognormalParams, cdf, expected_revenue, optimal_bid
from .harness import PolicyConfig, Replay, RunConfig, RunMetrics, compare, run
from .particles import FilterConfig, ParticleSet
from .policies import (BanditState, Exp3Policy, FixedShadingPolicy, PolicyDecision, ThompsonPolicy,
                       UCBPolicy)

__version__ = "0.1.0"
