"""Differentially-private content selection for pay-per-click ad auctions."""

from .auction import Candidate, bag_of_contents, compute_prices, rank_candidates
from .data import AuctionRecord, SyntheticSpec, generate_synthetic, load_auction_log
from .mechanisms import (
    Bounding,
    DPRatioCheck,
    Mechanism,
    MechanismConfig,
    Noise,
    SelectionDistribution,
    dp_ratio_check,
    estimate_distribution,
    exp_mech_distribution,
    rr_distribution,
    verify_dp_ratio,
)
from .metrics import MetricsReport, accumulate_metrics, compute_lift
from .pipeline import EvaluationMode, PipelineConfig, PricingSource, run_auction, run_auctions

__version__ = "0.1.0"
