"""CTR, advertiser surplus and platform revenue, plus lifts against baselines.

Advertiser value per click is taken to be the bid (truthful bidding), so
``surplus = sum((bid - price) * click)`` and ``revenue = sum(price * click)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import ContractViolation
from .pipeline import AuctionOutcome, EvaluationMode

log = logging.getLogger(__name__)

METRICS = ("ctr", "surplus", "revenue")


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate over filled auctions; ``nofill`` auctions are counted apart.

    ``clicks`` and ``value`` (``sum(bid * click)``) are kept so that partial
    reports can be combined.
    """

    n: int = 0
    nofill: int = 0
    clicks: float = 0.0
    surplus: float = 0.0
    revenue: float = 0.0
    value: float = 0.0

    @property
    def ctr(self) -> float:
        return self.clicks / self.n if self.n else 0.0

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(
            self.n + other.n,
            self.nofill + other.nofill,
            self.clicks + other.clicks,
            self.surplus + other.surplus,
            self.revenue + other.revenue,
            self.value + other.value,
        )

    def as_dict(self) -> dict:
        return {"n": self.n, "nofill": self.nofill, "ctr": self.ctr,
                "surplus": self.surplus, "revenue": self.revenue}


def outcome_contributions(outcome: AuctionOutcome):
    """``(clicks, revenue, surplus, value)`` contributed by one filled auction."""
    if outcome.mode is EvaluationMode.SAMPLED:
        c = outcome.click_value
        return c, outcome.price * c, (outcome.bid - outcome.price) * c, outcome.bid * c
    probs = outcome.selection_distribution.probabilities
    clicks, revenue, surplus, value = [], [], [], []
    for p, item in zip(probs, outcome.bag):
        w = p * item.pclick_device
        clicks.append(w)
        revenue.append(w * item.price)
        surplus.append(w * (item.bid - item.price))
        value.append(w * item.bid)
    return math.fsum(clicks), math.fsum(revenue), math.fsum(surplus), math.fsum(value)


def accumulate_metrics(outcomes: Iterable[AuctionOutcome]) -> MetricsReport:
    outcomes = list(outcomes)
    modes = {o.mode for o in outcomes}
    if len(modes) > 1:
        raise ContractViolation("cannot aggregate expected-mode and sampled-mode outcomes together")
    filled = [o for o in outcomes if o.filled]
    parts = [outcome_contributions(o) for o in filled]
    # fsum keeps the totals independent of outcome order.
    clicks, revenue, surplus, value = (math.fsum(col) for col in zip(*parts)) if parts else (0.0,) * 4
    return MetricsReport(len(filled), len(outcomes) - len(filled), clicks, surplus, revenue, value)


def combine_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    total = MetricsReport()
    for r in reports:
        total = total + r
    return total


@dataclass(frozen=True)
class Lift:
    metric: str
    value: Optional[float]
    baseline: str


def compute_lift(report: MetricsReport, baseline_report: MetricsReport, baseline: str = "unpersonalized") -> list:
    """Relative change ``(x - x_base) / x_base`` per metric; ``None`` when ``x_base == 0``."""
    lifts = []
    for name in METRICS:
        x, base = getattr(report, name), getattr(baseline_report, name)
        if base == 0:
            log.info("%s lift vs %s undefined: baseline is zero", name, baseline)
            lifts.append(Lift(name, None, baseline))
        else:
            lifts.append(Lift(name, (x - base) / base, baseline))
    return lifts
