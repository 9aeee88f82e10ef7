"""Command line front end.

Examples
--------
::

    coopcache generate --config run.json --out results/
    coopcache place --strategy hgc --config run.json --out results/
    coopcache analyze --placement results/placement.json --catalog results/catalog.json
    coopcache simulate --strategy mpc --trace
    coopcache experiment --preset fig4 --out results/
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analytic import Placement, system_delay
from .catalog import ContentCatalog
from .config import ConfigError, RunConfig, load_config
from .experiments import PRESETS, preset, rows_to_csv, run_experiment
from .optimizer import STRATEGIES, InstanceTooLarge, StrategyResult, run_strategy
from .simulator import UnstableSystemError, simulate


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: print to stdout)")
    common.add_argument("--seed", type=int, help="override the configuration seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    return common


def _placement_args(p):
    p.add_argument("--catalog", type=Path, help="catalog JSON (default: generate from config)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--placement", type=Path, help="placement JSON")
    group.add_argument("--strategy", choices=sorted(STRATEGIES) + ["empty"],
                       help="compute the placement with this strategy")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="coopcache", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="emit catalog JSON")

    p = sub.add_parser("place", parents=[common], help="emit placement JSON")
    p.add_argument("--catalog", type=Path)
    p.add_argument("--strategy", choices=sorted(STRATEGIES))
    p.add_argument("--constraint-mode", choices=("size", "cardinality"))

    p = sub.add_parser("analyze", parents=[common], help="emit delay report JSON")
    _placement_args(p)

    p = sub.add_parser("simulate", parents=[common], help="emit simulation statistics JSON")
    _placement_args(p)
    p.add_argument("--trace", action="store_true", help="also write the per-request trace CSV")

    p = sub.add_parser("experiment", parents=[common], help="run a preset sweep, emit CSV")
    p.add_argument("--preset", choices=PRESETS, required=True)
    return parser


def _emit(args, name, text):
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / name
    path.write_text(text)
    print(path)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _catalog(args, cfg) -> ContentCatalog:
    if getattr(args, "catalog", None):
        catalog = ContentCatalog.loads(args.catalog.read_text())
        if catalog.num_cells != cfg.num_cells:
            cfg = cfg.with_overrides(num_cells=catalog.num_cells)
        return catalog
    return cfg.catalog()


def _placement(args, cfg, catalog, network) -> Placement:
    if getattr(args, "placement", None):
        return StrategyResult.loads(args.placement.read_text(), catalog).placement
    name = getattr(args, "strategy", None) or "empty"
    if name == "empty":
        return Placement.empty(catalog)
    return run_strategy(name, catalog, network, cfg.constraint_mode
                        if name in ("cgc", "brute") else "size").placement


def _network(cfg, catalog):
    if catalog.num_cells != cfg.num_cells:
        cfg = cfg.with_overrides(num_cells=catalog.num_cells)
    return cfg.network()


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "generate":
            _emit(args, "catalog.json", cfg.catalog().dumps())
        elif args.command == "place":
            catalog = _catalog(args, cfg)
            network = _network(cfg, catalog)
            mode = args.constraint_mode or cfg.constraint_mode
            result = run_strategy(args.strategy or cfg.strategy, catalog, network, mode)
            _emit(args, "placement.json", result.dumps())
        elif args.command == "analyze":
            catalog = _catalog(args, cfg)
            network = _network(cfg, catalog)
            report = system_delay(_placement(args, cfg, catalog, network), catalog, network)
            _emit(args, "delay_report.json", report.dumps())
            if not report.stable:
                raise UnstableSystemError(report.rho)
        elif args.command == "simulate":
            catalog = _catalog(args, cfg)
            network = _network(cfg, catalog)
            placement = _placement(args, cfg, catalog, network)
            stats, trace = simulate(catalog, network, placement, cfg.sim_config(),
                                    return_trace=True)
            _emit(args, "sim_stats.json", stats.dumps())
            if args.trace:
                _emit(args, "trace.csv", trace.to_csv())
        elif args.command == "experiment":
            rows = run_experiment(preset(args.preset, cfg), threads=args.threads)
            _emit(args, f"{args.preset}.csv", rows_to_csv(rows))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InstanceTooLarge, UnstableSystemError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
