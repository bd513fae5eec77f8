"""Second-price, pay-per-click auction mechanics on non-private data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ContractViolation, InvalidInputError, InvalidParameterError


def _check_pclick(name, value):
    if not (0.0 < value <= 1.0):
        raise InvalidInputError(f"{name} must lie in (0, 1], got {value}")


@dataclass(frozen=True)
class Candidate:
    """One ad in one auction.

    ``pclick_pricing`` overrides the click model used for pricing only; it is
    set by :func:`dpads.pipeline.naive_pricing_transform`.
    """

    id: str
    bid: float
    pclick_server: float
    pclick_device: float
    pclick_pricing: Optional[float] = None

    def __post_init__(self):
        if not (self.bid > 0 and math.isfinite(self.bid)):
            raise InvalidInputError(f"bid must be positive and finite, got {self.bid}")
        _check_pclick("pclick_server", self.pclick_server)
        _check_pclick("pclick_device", self.pclick_device)
        if self.pclick_pricing is not None:
            _check_pclick("pclick_pricing", self.pclick_pricing)

    @property
    def server_score(self) -> float:
        return self.bid * self.pclick_server

    @property
    def device_score(self) -> float:
        return self.bid * self.pclick_device


@dataclass(frozen=True)
class RankedAuction:
    candidates: tuple
    reserve: float
    prices: tuple

    def price_of(self, candidate_id) -> float:
        for c, p in zip(self.candidates, self.prices):
            if c.id == candidate_id:
                return p
        raise KeyError(candidate_id)


def apply_reserve_eligibility(candidates: Sequence[Candidate], reserve: float) -> list:
    if not reserve >= 0:
        raise InvalidParameterError(f"reserve must be >= 0, got {reserve}")
    return [c for c in candidates if c.bid >= reserve]


def _server_key(c):
    return c.server_score


def rank_candidates(candidates: Sequence[Candidate], key=_server_key) -> list:
    """Sort descending by score (server score by default), ties by id."""
    return sorted(candidates, key=lambda c: (-key(c), c.id))


def second_prices(bids: Sequence[float], pclicks: Sequence[float], reserve: float) -> list:
    """Pay-per-click second prices for candidates already ranked by bid * pclick.

    ``price[r] = max(reserve, bid[r+1] * pclick[r+1] / pclick[r])``; the last
    rank pays the reserve.
    """
    n = len(bids)
    if len(pclicks) != n:
        raise InvalidInputError("bids and pclicks differ in length")
    scores = [b * p for b, p in zip(bids, pclicks)]
    for r in range(n - 1):
        if scores[r] < scores[r + 1]:
            raise ContractViolation(f"candidates are not ranked: score[{r}] < score[{r + 1}]")
    prices = [max(reserve, bids[r + 1] * pclicks[r + 1] / pclicks[r]) for r in range(n - 1)]
    if n:
        prices.append(reserve)
    return prices


def compute_prices(ranked: Sequence[Candidate], reserve: float) -> list:
    """Second prices on the server ranking, using server pClick only."""
    return second_prices([c.bid for c in ranked], [c.pclick_server for c in ranked], reserve)


def bag_of_contents(ranked: Sequence[Candidate], gamma: float) -> list:
    """Ranked candidates whose server score is within ``gamma`` of the top.

    Returns ``(rank, candidate)`` pairs in rank order, where ``rank`` indexes
    the full ranking passed in.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameterError(f"gamma must lie in [0, 1], got {gamma}")
    if not ranked:
        return []
    scores = [c.server_score for c in ranked]
    if min(scores) < 0:
        raise InvalidInputError("bag_of_contents needs non-negative server scores")
    threshold = max(scores) * (1.0 - gamma)
    return [(r, c) for r, (c, s) in enumerate(zip(ranked, scores)) if s >= threshold]


def rank_and_price(candidates: Sequence[Candidate], reserve: float) -> RankedAuction:
    """Eligibility, server ranking and pricing in one step."""
    ranked = rank_candidates(apply_reserve_eligibility(candidates, reserve))
    return RankedAuction(tuple(ranked), reserve, tuple(compute_prices(ranked, reserve)))
