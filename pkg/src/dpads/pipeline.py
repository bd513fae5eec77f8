"""End-to-end private recommendation for a single auction.

Per auction the server ranks eligible candidates by ``bid * pclick_server``,
fixes every candidate's price from that non-private ranking, and sends the
candidates within ``gamma`` of the top score to the device. The device scores
the bag with ``bid * pclick_device`` and picks a winner with RR or SNM. The
winner pays its precomputed price, so payment needs no noise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import mechanisms as mech
from .auction import (
    apply_reserve_eligibility,
    bag_of_contents,
    compute_prices,
    rank_candidates,
    second_prices,
)
from .data import AuctionRecord
from .errors import ConfigurationError, InvalidInputError, InvalidParameterError


class PricingSource(str, Enum):
    SERVER = "server"
    DEVICE = "device"
    NAIVE = "naive"


class EvaluationMode(str, Enum):
    EXPECTED = "expected"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class PipelineConfig:
    """Mechanism plus the auction-side knobs.

    ``mc_trials`` is only used in expected mode, for mechanisms without a
    closed-form selection distribution.
    """

    mechanism: mech.MechanismConfig = mech.MechanismConfig()
    gamma: float = 1.0
    pricing_source: PricingSource = PricingSource.SERVER
    mode: EvaluationMode = EvaluationMode.EXPECTED
    mc_trials: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        try:
            object.__setattr__(self, "pricing_source", PricingSource(self.pricing_source))
            object.__setattr__(self, "mode", EvaluationMode(self.mode))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.mc_trials < 1:
            raise InvalidParameterError("mc_trials must be >= 1")


@dataclass(frozen=True)
class BagItem:
    id: str
    rank: int
    bid: float
    price: float
    pclick_device: float


@dataclass(frozen=True)
class AuctionOutcome:
    """What happened in one auction.

    In sampled mode ``chosen`` is the realized winner and ``click_value`` a
    realized 0/1 click. In expected mode nothing is sampled: ``chosen`` is the
    most likely candidate, ``click_value`` the expected click probability, and
    metrics weight every bag member by ``selection_distribution``.
    ``rank`` is the server rank among all eligible candidates.
    """

    auction_id: str
    mode: EvaluationMode
    chosen: Optional[str] = None
    rank: Optional[int] = None
    bid: Optional[float] = None
    price: Optional[float] = None
    click_value: float = 0.0
    bag: tuple = ()
    selection_distribution: Optional[mech.SelectionDistribution] = None

    @property
    def filled(self) -> bool:
        return self.chosen is not None

    @property
    def bag_size(self) -> int:
        return len(self.bag)


def pricing_table(eligible: Sequence, reserve: float, source: PricingSource) -> dict:
    """Price per candidate id under the given pricing click model.

    Each source ranks by ``bid * pclick`` with its own pClick and applies the
    second-price formula on that ranking.
    """
    source = PricingSource(source)
    if source is PricingSource.SERVER:
        ranked = rank_candidates(eligible)
        return dict(zip((c.id for c in ranked), compute_prices(ranked, reserve)))
    if source is PricingSource.DEVICE:
        def pclick(c):
            return c.pclick_device
    else:
        if any(c.pclick_pricing is None for c in eligible):
            raise ConfigurationError("naive pricing needs records from naive_pricing_transform")

        def pclick(c):
            return c.pclick_pricing
    ranked = rank_candidates(eligible, key=lambda c: c.bid * pclick(c))
    prices = second_prices([c.bid for c in ranked], [pclick(c) for c in ranked], reserve)
    return dict(zip((c.id for c in ranked), prices))


def _sample_click(p: float, rng) -> float:
    if rng is None:
        raise ConfigurationError("sampled mode needs a random stream")
    return 1.0 if rng.random() < p else 0.0


def _prepare(record: AuctionRecord, pricing_source):
    eligible = apply_reserve_eligibility(record.candidates, record.reserve)
    if not eligible:
        return None, None
    ranked = rank_candidates(eligible)
    return ranked, pricing_table(ranked, record.reserve, pricing_source)


def _outcome(record, mode, items, dist, idx, rng) -> AuctionOutcome:
    winner = items[idx]
    if mode is EvaluationMode.EXPECTED:
        click = math.fsum(dist.probabilities * np.array([b.pclick_device for b in items]))
    else:
        click = _sample_click(winner.pclick_device, rng)
    return AuctionOutcome(
        auction_id=record.auction_id,
        mode=mode,
        chosen=winner.id,
        rank=winner.rank,
        bid=winner.bid,
        price=winner.price,
        click_value=click,
        bag=tuple(items),
        selection_distribution=dist,
    )


def _items(pairs, prices):
    return [BagItem(c.id, r, c.bid, prices[c.id], c.pclick_device) for r, c in pairs]


def run_auction(record: AuctionRecord, config: PipelineConfig, rng: Optional[np.random.Generator] = None) -> AuctionOutcome:
    ranked, prices = _prepare(record, config.pricing_source)
    if ranked is None:
        return AuctionOutcome(record.auction_id, config.mode)
    bag = bag_of_contents(ranked, config.gamma)
    device = np.array([c.device_score for _, c in bag])
    public = np.array([c.server_score for _, c in bag])
    items = _items(bag, prices)
    m = config.mechanism
    if config.mode is EvaluationMode.EXPECTED:
        dist = mech.selection_distribution(m, device, public, rng=rng, trials=config.mc_trials)
        idx = int(np.argmax(dist.probabilities))
    else:
        if rng is None:
            raise ConfigurationError("sampled mode needs a random stream")
        idx = mech.select(m, device, rng, public)
        dist = None
    return _outcome(record, config.mode, items, dist, idx, rng)


def _greedy(record, pricing_source, mode, rng, pick) -> AuctionOutcome:
    mode = EvaluationMode(mode)
    ranked, prices = _prepare(record, pricing_source)
    if ranked is None:
        return AuctionOutcome(record.auction_id, mode)
    r = pick(ranked)
    items = _items([(r, ranked[r])], prices)
    dist = mech.SelectionDistribution(np.ones(1)) if mode is EvaluationMode.EXPECTED else None
    return _outcome(record, mode, items, dist, 0, rng)


def greedy_server_baseline(record, pricing_source=PricingSource.SERVER, mode=EvaluationMode.EXPECTED, rng=None):
    """Un-personalized baseline: the top of the server ranking wins."""
    return _greedy(record, pricing_source, mode, rng, lambda ranked: 0)


def greedy_device_baseline(record, pricing_source=PricingSource.SERVER, mode=EvaluationMode.EXPECTED, rng=None):
    """Full-information baseline: the device-score argmax over all eligible candidates wins.

    Ties go to the better server rank, matching the mechanisms' lowest-index rule.
    """
    return _greedy(
        record, pricing_source, mode, rng,
        lambda ranked: int(np.argmax([c.device_score for c in ranked])),
    )


def naive_pricing_transform(records: Sequence[AuctionRecord]) -> list:
    """Price every candidate with the dataset-wide mean server pClick.

    Selection scores are untouched; only ``pclick_pricing`` is set.
    """
    values = [c.pclick_server for rec in records for c in rec.candidates]
    if not values:
        raise InvalidInputError("naive pricing needs a non-empty dataset")
    mean = math.fsum(values) / len(values)
    return [
        replace(rec, candidates=tuple(replace(c, pclick_pricing=mean) for c in rec.candidates))
        for rec in records
    ]


def auction_rng(master_seed: int, ordinal: int, grid_index: int = 0, replicate: int = 0, stream: int = 0):
    """Independent random stream for one auction of one run.

    Derived by hashing the whole key, so results do not depend on the order or
    thread in which auctions are processed.
    """
    return np.random.default_rng(np.random.SeedSequence([master_seed, grid_index, replicate, ordinal, stream]))


BASELINES = {
    "unpersonalized": greedy_server_baseline,
    "fullinfo": greedy_device_baseline,
}


def run_auctions(
    records: Sequence[AuctionRecord],
    config: PipelineConfig,
    master_seed: int = 0,
    grid_index: int = 0,
    replicate: int = 0,
    threads: int = 1,
    baseline: Optional[str] = None,
) -> list:
    """Run every record, returning outcomes in record order.

    With ``baseline`` set to ``"unpersonalized"`` or ``"fullinfo"`` the greedy
    baseline replaces the private mechanism; it uses its own random streams.
    """
    if baseline is None:
        def one(item):
            i, rec = item
            return run_auction(rec, config, auction_rng(master_seed, i, grid_index, replicate))
    else:
        fn = BASELINES[baseline]
        stream = 1 + list(BASELINES).index(baseline)

        def one(item):
            i, rec = item
            rng = auction_rng(master_seed, i, grid_index, replicate, stream)
            return fn(rec, config.pricing_source, config.mode, rng)

    items = list(enumerate(records))
    if threads <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, items))
