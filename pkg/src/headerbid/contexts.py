"""Discretize the internal closing price into equal-mass contexts."""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_NUM_CONTEXTS = 100
DEFAULT_WARMUP = 10_000


@dataclass(frozen=True)
class ContextBinner:
    """Half-open price bins ``[edges[l-1], edges[l])``.

    Prices below the first edge go to context 0 and prices at or above the
    last edge go to context ``num_contexts - 1``.
    """

    num_contexts: int
    edges: tuple[float, ...]

    def __post_init__(self):
        if self.num_contexts < 1:
            raise ValueError("num_contexts must be >= 1")
        if len(self.edges) != self.num_contexts - 1:
            raise ValueError(f"expected {self.num_contexts - 1} edges, got {len(self.edges)}")
        if any(a > b for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be sorted")

    @classmethod
    def fit(cls, prices: Iterable[float], num_contexts: int = DEFAULT_NUM_CONTEXTS) -> "ContextBinner":
        """Place edges at the empirical quantiles ``l / C``, ``l = 1..C-1``.

        Quantiles use linear interpolation between order statistics
        (``numpy.quantile(method="linear")``).
        """
        if num_contexts < 1:
            raise ValueError("num_contexts must be >= 1")
        arr = np.asarray(list(prices) if not isinstance(prices, np.ndarray) else prices, dtype=float)
        if arr.size == 0:
            raise ValueError("no data to fit")
        if num_contexts == 1:
            return cls(1, ())
        levels = np.arange(1, num_contexts) / num_contexts
        edges = np.quantile(arr, levels, method="linear")
        return cls(num_contexts, tuple(float(e) for e in edges))

    @classmethod
    def fit_streaming(cls, prices: Iterable[float], num_contexts: int = DEFAULT_NUM_CONTEXTS,
                      warmup: int = DEFAULT_WARMUP) -> "ContextBinner":
        """Fit on the first ``warmup`` prices only, then freeze."""
        head = []
        for p in prices:
            if len(head) >= warmup:
                break
            head.append(p)
        return cls.fit(head, num_contexts)

    def bin(self, price: float) -> int:
        # A price on a single edge goes right (half-open bins). A price on
        # two or more coinciding edges falls inside zero-width bins; it goes
        # to the lowest bin of the tie, so constant data lands in context 0.
        hi = bisect.bisect_right(self.edges, price)
        lo = bisect.bisect_left(self.edges, price)
        idx = lo if hi - lo >= 2 else hi
        return min(idx, self.num_contexts - 1)

    def bin_many(self, prices: Sequence[float]) -> np.ndarray:
        arr = np.asarray(prices, dtype=float)
        edges = np.asarray(self.edges, dtype=float)
        hi = np.searchsorted(edges, arr, side="right")
        lo = np.searchsorted(edges, arr, side="left")
        idx = np.where(hi - lo >= 2, lo, hi)
        return np.minimum(idx, self.num_contexts - 1).astype(np.int64)

    def to_json(self) -> str:
        return json.dumps({"num_contexts": self.num_contexts, "edges": list(self.edges)})

    @classmethod
    def from_json(cls, text: str) -> "ContextBinner":
        d = json.loads(text)
        return cls(int(d["num_contexts"]), tuple(float(e) for e in d["edges"]))
