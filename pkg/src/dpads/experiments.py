"""Experiment drivers behind the CLI: single runs, sweeps, pricing ablation and
per-auction mechanism comparison. Everything returns rows; writing CSV is a
separate step so results can be checked in memory."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import data as data_mod
from .data import SyntheticSpec
from .errors import ConfigurationError, InvalidParameterError
from .mechanisms import (
    Bounding,
    Mechanism,
    MechanismConfig,
    Noise,
    expected_value,
    selection_distribution,
)
from .metrics import accumulate_metrics, compute_lift
from .pipeline import (
    EvaluationMode,
    PipelineConfig,
    PricingSource,
    auction_rng,
    greedy_device_baseline,
    naive_pricing_transform,
    run_auctions,
)

log = logging.getLogger(__name__)

SWEEPS = ("epsilon", "gamma", "delta", "alpha")

SIMULATE_COLUMNS = (
    "mechanism", "noise", "bounding", "epsilon", "delta", "gamma", "alpha",
    "pricing_source", "mode", "seed", "replicate", "n", "nofill", "ctr", "surplus", "revenue",
    "lift_ctr_unpers", "lift_surplus_unpers", "lift_revenue_unpers",
    "lift_ctr_fullinfo", "lift_surplus_fullinfo", "lift_revenue_fullinfo",
    "sweep", "grid_value",
)

PRICING_COLUMNS = (
    "pricing_source", "mode", "alpha", "seed", "replicate", "n", "nofill",
    "ctr", "surplus", "revenue", "lift_ctr", "lift_surplus", "lift_revenue",
)

COMPARE_COLUMNS = (
    "auction_id", "n_candidates", "epsilon", "noise", "delta",
    "rr", "snm_scaled", "snm_clipped", "greedy_private", "greedy_server",
)
COMPARE_METHODS = ("rr", "snm_scaled", "snm_clipped", "greedy_private", "greedy_server")
SUMMARY_COLUMNS = ("epsilon", "method", "mean", "std", "count")

# Operational stand-in for epsilon = infinity.
EPSILON_INF = 50.0


@dataclass
class ExperimentConfig:
    input: Optional[str] = None
    input_format: Optional[str] = None
    spec: Optional[SyntheticSpec] = None
    mechanisms: list = field(default_factory=lambda: [MechanismConfig()])
    gamma: float = 1.0
    pricing_source: PricingSource = PricingSource.SERVER
    mode: EvaluationMode = EvaluationMode.EXPECTED
    mc_trials: int = 100_000
    alpha: float = 1.0
    sweep: str = "none"
    grid: list = field(default_factory=list)
    replicates: int = 1
    seed: int = 0
    threads: int = 1
    strict: bool = False
    bid_per_price: float = 1.0

    def __post_init__(self):
        self.pricing_source = PricingSource(self.pricing_source)
        self.mode = EvaluationMode(self.mode)
        if self.sweep != "none" and self.sweep not in SWEEPS:
            raise ConfigurationError(f"unknown sweep {self.sweep!r}; choose from {', '.join(SWEEPS)}")
        if self.sweep != "none":
            if not self.grid:
                raise ConfigurationError(f"{self.sweep} sweep needs a non-empty grid")
            if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
                raise ConfigurationError(f"{self.sweep} grid must be strictly ascending")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if not self.mechanisms:
            raise ConfigurationError("at least one mechanism is required")
        if self.input is None and self.spec is None:
            raise ConfigurationError("need an input dataset or a synthetic spec")
        if not 0 <= self.gamma <= 1:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.threads < 1 or self.mc_trials < 1:
            raise ConfigurationError("threads and mc_trials must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise InvalidParameterError(f"alpha must lie in [0, 1], got {self.alpha}")

    def describe(self) -> dict:
        """Effective config for CSV headers; excludes settings that cannot change results."""
        return {
            "input": self.input,
            "input_format": self.input_format,
            "spec": self.spec.to_dict() if self.spec else None,
            "mechanisms": [
                {"kind": m.kind.value, "noise": m.noise.value, "bounding": m.bounding.value,
                 "epsilon": m.epsilon, "delta": m.delta}
                for m in self.mechanisms
            ],
            "gamma": self.gamma,
            "pricing_source": self.pricing_source.value,
            "mode": self.mode.value,
            "mc_trials": self.mc_trials,
            "alpha": self.alpha,
            "sweep": self.sweep,
            "grid": list(self.grid),
            "replicates": self.replicates,
            "seed": self.seed,
            "strict": self.strict,
            "bid_per_price": self.bid_per_price,
        }


def mechanism_product(kinds, noises, boundings, epsilon, delta) -> list:
    """Cartesian product of mechanism options, with RR duplicates collapsed."""
    out = []
    for kind, noise, bounding in itertools.product(kinds, noises, boundings):
        m = MechanismConfig(kind, epsilon, noise, delta, bounding)
        if m not in out:
            out.append(m)
    return out


def load_records(cfg: ExperimentConfig) -> list:
    if cfg.input is None:
        return data_mod.generate_synthetic(cfg.spec)
    if cfg.input_format == "taobao":
        return data_mod.load_taobao_csv(cfg.input, cfg.bid_per_price)
    result = data_mod.load_auction_log(cfg.input, cfg.input_format, strict=cfg.strict)
    if result.rejected_rows:
        log.warning("%d of %d input rows rejected", result.rejected_rows, result.input_rows)
    return result.records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _lift_cells(lifts, suffix) -> dict:
    return {f"lift_{l.metric}_{suffix}": l.value for l in lifts}


def _grid_points(cfg: ExperimentConfig):
    if cfg.sweep == "none":
        return [None]
    return list(cfg.grid)


def _point_config(cfg: ExperimentConfig, m: MechanismConfig, value):
    gamma, alpha = cfg.gamma, cfg.alpha
    if cfg.sweep == "epsilon":
        m = replace(m, epsilon=value)
    elif cfg.sweep == "delta":
        m = replace(m, delta=value)
    elif cfg.sweep == "gamma":
        gamma = value
    elif cfg.sweep == "alpha":
        alpha = value
    pipe = PipelineConfig(m, gamma, cfg.pricing_source, cfg.mode, cfg.mc_trials)
    return pipe, alpha


def simulate_rows(cfg: ExperimentConfig, records: Optional[list] = None) -> list:
    """One row per (grid point, mechanism, replicate), in that order."""
    if records is None:
        records = load_records(cfg)
    naive_needed = cfg.pricing_source is PricingSource.NAIVE
    rows = []
    datasets = {}
    for g, value in enumerate(_grid_points(cfg)):
        for m in cfg.mechanisms:
            pipe, alpha = _point_config(cfg, m, value)
            if alpha not in datasets:
                recs = data_mod.mix_pclick(records, alpha)
                if naive_needed and recs:
                    recs = naive_pricing_transform(recs)
                datasets[alpha] = recs
            recs = datasets[alpha]
            for rep in range(cfg.replicates):
                run = dict(master_seed=cfg.seed, grid_index=g, replicate=rep, threads=cfg.threads)
                report = accumulate_metrics(run_auctions(recs, pipe, **run))
                unpers = accumulate_metrics(run_auctions(recs, pipe, baseline="unpersonalized", **run))
                full = accumulate_metrics(run_auctions(recs, pipe, baseline="fullinfo", **run))
                mm = pipe.mechanism
                is_rr = mm.kind is Mechanism.RR
                row = {
                    "mechanism": mm.kind.value,
                    "noise": "" if is_rr else mm.noise.value,
                    "bounding": mm.bounding.value,
                    "epsilon": mm.epsilon,
                    "delta": None if is_rr else mm.delta,
                    "gamma": pipe.gamma,
                    "alpha": float(alpha),
                    "pricing_source": pipe.pricing_source.value,
                    "mode": pipe.mode.value,
                    "seed": cfg.seed,
                    "replicate": rep,
                    "n": report.n,
                    "nofill": report.nofill,
                    "ctr": report.ctr,
                    "surplus": report.surplus,
                    "revenue": report.revenue,
                    "sweep": cfg.sweep,
                    "grid_value": value,
                }
                row.update(_lift_cells(compute_lift(report, unpers, "unpersonalized"), "unpers"))
                row.update(_lift_cells(compute_lift(report, full, "fullinfo"), "fullinfo"))
                rows.append(row)
    return rows


def pricing_rows(cfg: ExperimentConfig, records: Optional[list] = None) -> list:
    """Greedy device selection over all candidates, priced three ways.

    Lifts are relative to pricing with device pClick.
    """
    if records is None:
        records = load_records(cfg)
    recs = data_mod.mix_pclick(records, cfg.alpha)
    by_source = {
        PricingSource.DEVICE: recs,
        PricingSource.SERVER: recs,
        PricingSource.NAIVE: naive_pricing_transform(recs) if recs else recs,
    }
    rows = []
    for rep in range(cfg.replicates):
        reports = {}
        for source, rs in by_source.items():
            # Same streams for every source so sampled clicks coincide.
            def one(item, source=source):
                i, rec = item
                rng = auction_rng(cfg.seed, i, 0, rep, stream=3)
                return greedy_device_baseline(rec, source, cfg.mode, rng)

            reports[source] = accumulate_metrics(_map(one, list(enumerate(rs)), cfg.threads))
        base = reports[PricingSource.DEVICE]
        for source, report in reports.items():
            row = {
                "pricing_source": source.value,
                "mode": cfg.mode.value,
                "alpha": float(cfg.alpha),
                "seed": cfg.seed,
                "replicate": rep,
                "n": report.n,
                "nofill": report.nofill,
                "ctr": report.ctr,
                "surplus": report.surplus,
                "revenue": report.revenue,
            }
            for lift in compute_lift(report, base, "device_pricing"):
                row[f"lift_{lift.metric}"] = lift.value
            rows.append(row)
    return rows


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def compare_mechanisms_rows(
    records: list,
    epsilons,
    delta: float = 1.0,
    noise: Noise = Noise.GUMBEL,
    seed: int = 0,
    mc_trials: int = 100_000,
    threads: int = 1,
) -> list:
    """Per-auction expected device score of RR, scaled SNM and clipped SNM.

    Every eligible candidate is considered (no cutoff). Clipped SNM uses the
    server scores as public scores. Greedy references: the device-score
    argmax and the server-rank winner.
    """
    from .auction import apply_reserve_eligibility, rank_candidates

    def one(item):
        i, rec = item
        ranked = rank_candidates(apply_reserve_eligibility(rec.candidates, rec.reserve))
        if not ranked:
            return []
        device = np.array([c.device_score for c in ranked])
        public = np.array([c.server_score for c in ranked])
        out = []
        for g, eps in enumerate(epsilons):
            rng = auction_rng(seed, i, g, 0, stream=4)
            values = {}
            for name, m in (
                ("rr", MechanismConfig(Mechanism.RR, eps)),
                ("snm_scaled", MechanismConfig(Mechanism.SNM, eps, noise, 1.0, Bounding.SCALED)),
                ("snm_clipped", MechanismConfig(Mechanism.SNM, eps, noise, delta, Bounding.CLIPPED)),
            ):
                dist = selection_distribution(m, device, public, rng=rng, trials=mc_trials)
                values[name] = expected_value(dist, device)
            out.append({
                "auction_id": rec.auction_id,
                "n_candidates": len(ranked),
                "epsilon": float(eps),
                "noise": Noise(noise).value,
                "delta": float(delta),
                **values,
                "greedy_private": float(device.max()),
                "greedy_server": float(device[0]),
            })
        return out

    per_auction = _map(one, list(enumerate(records)), threads)
    # Reorder as (epsilon, auction) for readability.
    rows = [r for chunk in per_auction for r in chunk]
    order = {float(e): k for k, e in enumerate(epsilons)}
    return sorted(rows, key=lambda r: order[r["epsilon"]])


def summarize_comparison(rows: list) -> list:
    """Mean and population standard deviation per (epsilon, method)."""
    groups: dict = {}
    for r in rows:
        for m in COMPARE_METHODS:
            groups.setdefault((r["epsilon"], m), []).append(r[m])
    out = []
    for (eps, m), vals in groups.items():
        arr = np.asarray(vals)
        out.append({"epsilon": eps, "method": m, "mean": math.fsum(vals) / len(vals),
                    "std": float(arr.std()), "count": len(vals)})
    return out


def render_csv(rows: list, columns, header: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if header is not None:
        for key, value in header.items():
            buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()
