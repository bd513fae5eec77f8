"""Auction-log ingestion, synthetic generation and dataset transforms.

The canonical on-disk format is JSONL, one auction per line::

    {"auction_id": "a1", "reserve": 0.1,
     "candidates": [{"id": "x", "bid": 2.0, "pclick_server": 0.1, "pclick_device": 0.2}]}

CSV is accepted with one candidate per row and the columns
``auction_id, reserve, id, bid, pclick_server, pclick_device``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .auction import Candidate
from .errors import ConfigurationError, DataError, InvalidInputError, InvalidParameterError

log = logging.getLogger(__name__)

CSV_COLUMNS = ("auction_id", "reserve", "id", "bid", "pclick_server", "pclick_device")


@dataclass(frozen=True)
class AuctionRecord:
    auction_id: str
    candidates: tuple
    reserve: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise InvalidInputError(f"auction {self.auction_id!r} has no candidates")
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"auction {self.auction_id!r} has duplicate candidate ids")
        if not (self.reserve >= 0 and math.isfinite(self.reserve)):
            raise InvalidInputError(f"reserve must be >= 0, got {self.reserve}")

    def __len__(self):
        return len(self.candidates)


@dataclass
class IngestResult:
    records: list = field(default_factory=list)
    input_rows: int = 0
    accepted_rows: int = 0
    rejected_rows: int = 0
    diagnostics: list = field(default_factory=list)


class _Ingest:
    def __init__(self, strict: bool):
        self.strict = strict
        self.result = IngestResult()

    def reject(self, where: str, message: str, rows: int = 1):
        msg = f"{where}: {message}"
        if self.strict:
            raise DataError(msg)
        log.warning("rejected %s", msg)
        self.result.diagnostics.append(msg)
        self.result.rejected_rows += rows


def _candidate_from(obj: Mapping) -> Candidate:
    try:
        return Candidate(
            id=str(obj["id"]),
            bid=float(obj["bid"]),
            pclick_server=float(obj["pclick_server"]),
            pclick_device=float(obj["pclick_device"]),
        )
    except KeyError as exc:
        raise InvalidInputError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(str(exc)) from None


def _parse_reserve(value) -> float:
    try:
        reserve = float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"bad reserve {value!r}") from None
    if not (reserve >= 0 and math.isfinite(reserve)):
        raise InvalidInputError(f"reserve must be >= 0, got {value!r}")
    return reserve


def _load_jsonl(lines: Iterable[str], ingest: _Ingest):
    res = ingest.result
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            res.input_rows += 1
            ingest.reject(where, f"unparseable JSON ({exc.msg})")
            continue
        raw = obj.get("candidates") if isinstance(obj, dict) else None
        if not isinstance(raw, list):
            res.input_rows += 1
            ingest.reject(where, "record has no candidate list")
            continue
        res.input_rows += len(raw)
        try:
            auction_id = str(obj["auction_id"])
            reserve = _parse_reserve(obj.get("reserve", 0.0))
        except (KeyError, InvalidInputError) as exc:
            ingest.reject(where, f"bad record header ({exc})", rows=len(raw))
            continue
        cands = []
        for j, c in enumerate(raw):
            try:
                if not isinstance(c, dict):
                    raise InvalidInputError("candidate is not an object")
                cands.append(_candidate_from(c))
            except InvalidInputError as exc:
                ingest.reject(f"{where} candidate {j}", str(exc))
        _accept(ingest, where, auction_id, cands, reserve)


def _accept(ingest: _Ingest, where, auction_id, cands, reserve):
    if not cands:
        return
    ids = [c.id for c in cands]
    if len(set(ids)) != len(ids):
        ingest.reject(where, f"duplicate candidate id in auction {auction_id!r}", rows=len(cands))
        return
    ingest.result.records.append(AuctionRecord(auction_id, tuple(cands), reserve))
    ingest.result.accepted_rows += len(cands)


def _load_csv(lines: Iterable[str], ingest: _Ingest):
    res = ingest.result
    reader = csv.DictReader(lines)
    missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
    if reader.fieldnames is None:
        return
    if missing:
        raise DataError(f"CSV is missing columns: {', '.join(missing)}")
    groups: dict = {}
    for row in reader:
        res.input_rows += 1
        where = f"line {reader.line_num}"
        try:
            auction_id = row["auction_id"]
            reserve = _parse_reserve(row["reserve"])
            cand = _candidate_from(row)
        except InvalidInputError as exc:
            ingest.reject(where, str(exc))
            continue
        group = groups.setdefault(auction_id, {"reserve": reserve, "cands": [], "where": where})
        if group["reserve"] != reserve:
            ingest.reject(where, f"reserve differs from earlier rows of auction {auction_id!r}")
            continue
        group["cands"].append(cand)
    for auction_id, group in groups.items():
        _accept(ingest, group["where"], auction_id, group["cands"], group["reserve"])


def load_auction_log(source, fmt: Optional[str] = None, strict: bool = False) -> IngestResult:
    """Read and validate an auction log.

    ``fmt`` is ``"jsonl"`` or ``"csv"``; by default it is taken from the file
    suffix. Invalid rows are counted and reported in ``diagnostics`` unless
    ``strict`` is set, in which case the first one raises :class:`DataError`.
    """
    path = Path(source)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("csv", "jsonl"):
        raise ConfigurationError(f"unknown log format {fmt!r}")
    ingest = _Ingest(strict)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            (_load_csv if fmt == "csv" else _load_jsonl)(fh, ingest)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return ingest.result


def records_to_jsonl(records: Iterable[AuctionRecord]) -> str:
    lines = []
    for rec in records:
        cands = []
        for c in rec.candidates:
            d = {"id": c.id, "bid": c.bid, "pclick_server": c.pclick_server, "pclick_device": c.pclick_device}
            cands.append(d)
        lines.append(json.dumps({"auction_id": rec.auction_id, "reserve": rec.reserve, "candidates": cands}))
    return "".join(line + "\n" for line in lines)


def write_auction_log(records: Iterable[AuctionRecord], path) -> None:
    Path(path).write_text(records_to_jsonl(records), encoding="utf-8")


# Raw Taobao column names mapped onto ours.
_TAOBAO_ALIASES = {
    "userid": "user",
    "user_id": "user",
    "time_stamp": "timestamp",
    "adgroup_id": "ad_id",
    "ad": "ad_id",
    "item_price": "price",
}


def group_taobao_log(rows: Iterable[Mapping], bid_per_price: float = 1.0) -> list:
    """Build single-slot auctions from interaction rows.

    Rows sharing ``(user, timestamp)`` form one auction. Bids are
    ``bid_per_price * price`` and every auction's reserve is the minimum bid
    over the whole dataset. The pClick columns must be precomputed.
    """
    if not bid_per_price > 0:
        raise InvalidParameterError(f"bid_per_price must be > 0, got {bid_per_price}")
    groups: dict = {}
    for n, raw in enumerate(rows, start=1):
        row = {_TAOBAO_ALIASES.get(k, k): v for k, v in raw.items()}
        missing_pclick = [k for k in ("pclick_server", "pclick_device") if k not in row]
        if missing_pclick:
            raise ConfigurationError(
                f"row {n} lacks {', '.join(missing_pclick)}; precompute pClick columns before grouping"
            )
        try:
            key = (str(row["user"]), str(row["timestamp"]))
            cand = Candidate(
                id=str(row["ad_id"]),
                bid=bid_per_price * float(row["price"]),
                pclick_server=float(row["pclick_server"]),
                pclick_device=float(row["pclick_device"]),
            )
        except KeyError as exc:
            raise DataError(f"row {n} lacks column {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"row {n}: {exc}") from None
        cands = groups.setdefault(key, {})
        if cand.id in cands:
            log.warning("row %d repeats ad %s in auction %s; keeping the first", n, cand.id, key)
            continue
        cands[cand.id] = cand
    if not groups:
        return []
    reserve = min(c.bid for cands in groups.values() for c in cands.values())
    return [
        AuctionRecord(f"{ts}_{user}", tuple(cands.values()), reserve)
        for (user, ts), cands in groups.items()
    ]


def load_taobao_csv(path, bid_per_price: float = 1.0) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return group_taobao_log(csv.DictReader(fh), bid_per_price)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a reproducible synthetic auction dataset.

    Bernoulli draws are mapped to ``high_value`` (success) and
    ``floor_value`` (failure) so that every pClick stays in (0, 1].
    ``server_score_model="mixed"`` sets
    ``pclick_server = alpha * pclick_device + (1 - alpha) * independent_draw``.
    """

    num_auctions: int = 100
    candidates_per_auction: int = 15
    score_distribution: str = "uniform"
    bernoulli_p: float = 0.9
    bid_model: str = "unit"
    bid_range: tuple = (0.1, 10.0)
    server_score_model: str = "independent"
    alpha: float = 0.5
    reserve: float = 0.0
    floor_value: float = 0.01
    high_value: float = 0.99
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bid_range", tuple(float(x) for x in self.bid_range))
        if self.num_auctions < 0 or self.candidates_per_auction < 1:
            raise InvalidParameterError("need num_auctions >= 0 and candidates_per_auction >= 1")
        if self.score_distribution not in ("uniform", "bernoulli"):
            raise ConfigurationError(f"unknown score_distribution {self.score_distribution!r}")
        if self.bid_model not in ("unit", "loguniform"):
            raise ConfigurationError(f"unknown bid_model {self.bid_model!r}")
        if self.server_score_model not in ("independent", "mixed"):
            raise ConfigurationError(f"unknown server_score_model {self.server_score_model!r}")
        if not 0 < self.bernoulli_p < 1:
            raise InvalidParameterError(f"bernoulli_p must lie in (0, 1), got {self.bernoulli_p}")
        if not 0 <= self.alpha <= 1:
            raise InvalidParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        lo, hi = self.bid_range
        if not 0 < lo <= hi:
            raise InvalidParameterError(f"bad bid_range {self.bid_range}")
        if not 0 < self.floor_value <= self.high_value <= 1:
            raise InvalidParameterError("need 0 < floor_value <= high_value <= 1")

    @classmethod
    def from_mapping(cls, values: Mapping) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown synthetic spec keys: {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["bid_range"] = list(self.bid_range)
        return d


def _draw_pclicks(spec: SyntheticSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.score_distribution == "uniform":
        # 1 - U lies in (0, 1].
        return 1.0 - rng.random(n)
    hits = rng.random(n) < spec.bernoulli_p
    return np.where(hits, spec.high_value, spec.floor_value)


def generate_synthetic(spec: SyntheticSpec) -> list:
    rng = np.random.default_rng(spec.seed)
    k = spec.candidates_per_auction
    lo, hi = spec.bid_range
    records = []
    for i in range(spec.num_auctions):
        device = _draw_pclicks(spec, rng, k)
        other = _draw_pclicks(spec, rng, k)
        if spec.server_score_model == "mixed":
            server = np.minimum(1.0, spec.alpha * device + (1.0 - spec.alpha) * other)
        else:
            server = other
        if spec.bid_model == "unit":
            bids = np.ones(k)
        else:
            bids = np.exp(rng.uniform(math.log(lo), math.log(hi), k))
        cands = tuple(
            Candidate(f"c{j:03d}", float(bids[j]), float(server[j]), float(device[j])) for j in range(k)
        )
        records.append(AuctionRecord(f"a{i:06d}", cands, spec.reserve))
    return records


def mix_pclick(records: Sequence[AuctionRecord], alpha: float) -> list:
    """Pull device pClick toward server pClick by ``1 - alpha``."""
    if not 0 <= alpha <= 1:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1:
        return list(records)
    out = []
    for rec in records:
        cands = tuple(
            replace(c, pclick_device=min(1.0, alpha * c.pclick_device + (1 - alpha) * c.pclick_server))
            for c in rec.candidates
        )
        out.append(replace(rec, candidates=cands))
    return out


def bucket_by_candidate_count(records: Sequence[AuctionRecord], edges: Sequence[int] = (3, 10)) -> dict:
    """Partition auctions by candidate count.

    With edges ``e0 < e1 < ...`` the buckets are ``n <= e0``,
    ``e0 < n < e1``, ``e1 <= n < e2``, ..., ``n >= e_last``, so the default
    edges give the three-way split ``<=3 / 4-9 / >=10``. Empty ``edges``
    gives a single bucket. Keys are labels, in bucket order; empty buckets are
    kept.
    """
    edges = list(edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidParameterError(f"edges must be strictly ascending, got {edges}")
    if not edges:
        return {"all": list(records)}
    labels = [f"<={edges[0]}"]
    for k in range(1, len(edges)):
        lo = f">{edges[0]}" if k == 1 else f">={edges[k - 1]}"
        labels.append(f"{lo},<{edges[k]}")
    labels.append(f">={edges[-1]}")
    buckets = {label: [] for label in labels}

    def index(n):
        if n <= edges[0]:
            return 0
        for k in range(1, len(edges)):
            if n < edges[k]:
                return k
        return len(edges)

    for rec in records:
        buckets[labels[index(len(rec))]].append(rec)
    return buckets
