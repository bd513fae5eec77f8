"""Command-line driver.

    dpads generate --spec spec.yaml --out auctions.jsonl
    dpads simulate --input auctions.jsonl --mechanism rr --epsilon 5 --gamma 0.8
    dpads sweep --input auctions.jsonl --mechanism rr,snm --bounding scaled,clipped \\
        --epsilon-grid 0.5,1,2,5,10,50
    dpads pricing-experiment --input auctions.jsonl
    dpads compare-mechanisms --spec spec.yaml --epsilon-grid 0.5,1,2,5,10

Options may also come from a YAML/JSON file given with ``--config``; flags win.
Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import experiments as ex
from .data import SyntheticSpec, generate_synthetic, records_to_jsonl
from .errors import ConfigurationError, DataError, InvalidInputError, InvalidParameterError
from .mechanisms import MechanismConfig, Noise

log = logging.getLogger("dpads")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _words(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _common(p):
    p.add_argument("--config", help="YAML/JSON file with default options")
    p.add_argument("--input", help="auction log (.jsonl or .csv)")
    p.add_argument("--format", dest="input_format", choices=["jsonl", "csv", "taobao"])
    p.add_argument("--bid-per-price", type=float, help="taobao input: bid = constant * item price")
    p.add_argument("--spec", help="synthetic dataset spec file, used when --input is absent")
    p.add_argument("--spec-set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one synthetic spec field (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first invalid input row")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def _mechanism_flags(p):
    p.add_argument("--mechanism", type=_words, help="rr, snm, or a comma list")
    p.add_argument("--noise", type=_words, help="gumbel, exponential, laplace (comma list)")
    p.add_argument("--bounding", type=_words, help="none, scaled, clipped (comma list)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float, help="pClick mixing weight on device pClick")
    p.add_argument("--pricing", choices=["server", "device", "naive"])
    p.add_argument("--mode", choices=["expected", "sampled"])
    p.add_argument("--mc-trials", type=int)


def _grid_flags(p):
    for name in ex.SWEEPS:
        p.add_argument(f"--{name}-grid", type=_floats, dest=f"{name}_grid")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpads", description="Private ad selection simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic auction log")
    _common(gen)

    sim = sub.add_parser("simulate", help="metrics for one configuration")
    _common(sim)
    _mechanism_flags(sim)

    sweep = sub.add_parser("sweep", help="metrics over a parameter grid")
    _common(sweep)
    _mechanism_flags(sweep)
    _grid_flags(sweep)

    pricing = sub.add_parser("pricing-experiment", help="greedy selection priced with device, server and naive pClick")
    _common(pricing)
    _mechanism_flags(pricing)

    cmp_ = sub.add_parser("compare-mechanisms", help="per-auction expected value of RR and SNM variants")
    _common(cmp_)
    _mechanism_flags(cmp_)
    _grid_flags(cmp_)
    cmp_.add_argument("--summary", help="summary CSV path (default: <out>_summary.csv)")
    return parser


def _load_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            values = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigurationError(f"{path} must hold a mapping")
    return values


def _spec(args, conf) -> SyntheticSpec | None:
    values = {}
    if isinstance(conf.get("spec"), dict):
        values.update(conf["spec"])
    path = args.spec or (conf.get("spec") if isinstance(conf.get("spec"), str) else None)
    if path:
        values.update(_load_file(path))
    for item in args.spec_set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--spec-set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = yaml.safe_load(raw)
    if args.command == "generate":
        if args.replicates is not None:
            values["num_auctions"] = args.replicates
        if args.seed is not None:
            values["seed"] = args.seed
    if not values and not path:
        return None
    return SyntheticSpec.from_mapping(values)


def _as_list(value):
    if value is None:
        return None
    return value if isinstance(value, list) else _words(value)


class _Options:
    """Flag value if given, else config-file value, else default."""

    def __init__(self, args, conf):
        self.args, self.conf = args, conf

    def __call__(self, name, default=None, key=None):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        return self.conf.get(key or name, default)


def _mechanisms(opt: _Options, conf):
    if "mechanisms" in conf and not any(getattr(opt.args, k, None) for k in ("mechanism", "noise", "bounding")):
        out = []
        for m in conf["mechanisms"]:
            m = dict(m)
            for name in ("epsilon", "delta"):
                if getattr(opt.args, name, None) is not None:
                    m[name] = getattr(opt.args, name)
            out.append(MechanismConfig(**m))
        return out
    return ex.mechanism_product(
        _as_list(opt("mechanism", ["rr"])),
        _as_list(opt("noise", ["gumbel"])),
        _as_list(opt("bounding", ["none"])),
        opt("epsilon", 1.0),
        opt("delta", 1.0),
    )


def _sweep(args, conf):
    chosen = [name for name in ex.SWEEPS if getattr(args, f"{name}_grid", None)]
    if len(chosen) > 1:
        raise ConfigurationError("give exactly one grid flag")
    if chosen:
        return chosen[0], getattr(args, f"{chosen[0]}_grid")
    in_file = [name for name in ex.SWEEPS if conf.get(f"{name}_grid")]
    if len(in_file) > 1:
        raise ConfigurationError("config file gives more than one grid")
    if in_file:
        return in_file[0], list(conf[f"{in_file[0]}_grid"])
    return "none", []


def build_config(args) -> ex.ExperimentConfig:
    conf = _load_file(args.config) if args.config else {}
    opt = _Options(args, conf)
    sweep, grid = _sweep(args, conf)
    return ex.ExperimentConfig(
        input=opt("input"),
        input_format=opt("input_format", key="format"),
        spec=_spec(args, conf),
        mechanisms=_mechanisms(opt, conf),
        gamma=float(opt("gamma", 1.0)),
        pricing_source=opt("pricing", "server"),
        mode=opt("mode", "expected"),
        mc_trials=int(opt("mc_trials", 100_000)),
        alpha=float(opt("alpha", 1.0)),
        sweep=sweep,
        grid=[float(x) for x in grid],
        replicates=int(opt("replicates", 1)),
        seed=int(opt("seed", 0)),
        threads=int(opt("threads", 1)),
        strict=bool(opt("strict", False)),
        bid_per_price=float(opt("bid_per_price", 1.0)),
    )


def _emit(text: str, out) -> None:
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    conf = _load_file(args.config) if args.config else {}
    spec = _spec(args, conf)
    if spec is None:
        spec = SyntheticSpec(seed=args.seed or 0)
    records = generate_synthetic(spec)
    out = args.out or conf.get("out")
    if not out:
        raise ConfigurationError("generate needs --out")
    _emit(records_to_jsonl(records), out)
    n_cand = sum(len(r) for r in records)
    print(f"wrote {len(records)} auctions, {n_cand} candidates to {out}", file=sys.stderr)
    return EXIT_OK


def _header(command, cfg):
    return {"command": command, "config": cfg.describe()}


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    if args.command == "simulate":
        cfg.sweep, cfg.grid = "none", []
    elif cfg.sweep == "none":
        raise ConfigurationError("sweep needs a grid flag, e.g. --epsilon-grid 0.5,1,2")
    rows = ex.simulate_rows(cfg)
    _emit(ex.render_csv(rows, ex.SIMULATE_COLUMNS, _header(args.command, cfg)), args.out)
    return EXIT_OK


def cmd_pricing_experiment(args) -> int:
    cfg = build_config(args)
    rows = ex.pricing_rows(cfg)
    _emit(ex.render_csv(rows, ex.PRICING_COLUMNS, _header(args.command, cfg)), args.out)
    return EXIT_OK


def cmd_compare_mechanisms(args) -> int:
    cfg = build_config(args)
    epsilons = cfg.grid if cfg.sweep == "epsilon" else [cfg.mechanisms[0].epsilon]
    conf = _load_file(args.config) if args.config else {}
    opt = _Options(args, conf)
    noise = Noise(_as_list(opt("noise", ["gumbel"]))[0])
    delta = float(opt("delta", 1.0))
    records = ex.load_records(cfg)
    rows = ex.compare_mechanisms_rows(records, epsilons, delta, noise, cfg.seed, cfg.mc_trials, cfg.threads)
    header = _header(args.command, cfg)
    _emit(ex.render_csv(rows, ex.COMPARE_COLUMNS, header), args.out)
    summary = ex.render_csv(ex.summarize_comparison(rows), ex.SUMMARY_COLUMNS, header)
    summary_path = args.summary
    if summary_path is None and args.out:
        p = Path(args.out)
        summary_path = str(p.with_name(p.stem + "_summary.csv"))
    if summary_path:
        _emit(summary, summary_path)
    else:
        sys.stderr.write(summary)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "sweep": cmd_simulate,
    "pricing-experiment": cmd_pricing_experiment,
    "compare-mechanisms": cmd_compare_mechanisms,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, InvalidParameterError, InvalidInputError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
