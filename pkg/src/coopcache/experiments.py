"""Figure-style parameter sweeps written as CSV tables.

Presets
-------
fig2
    MPC delay against cache ratio for Zipf exponents 0.5, 1.0 and 1.5,
    analytic and simulated.
fig3
    HGC objective (negative delay) against cache ratio for 1 to 6 cells.
fig4
    Three cells with 50 Mbit caches, two lightly loaded cells (0.05/s) and
    the third cell's rate swept from 0.05 to 1.0 requests/s.
fig5
    Three cells at 40 % cache ratio, k3 = 20, k2 swept from 1 to 20.

Grids are evenly spaced; they are not the sampling of any published plot.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import system_delay
from .config import RunConfig
from .optimizer import STRATEGIES, run_strategy
from .simulator import UnstableSystemError, simulate

__all__ = ["ExperimentSpec", "PRESETS", "CSV_COLUMNS", "preset", "run_experiment", "rows_to_csv",
           "rows_from_csv"]

CSV_COLUMNS = ("preset", "series", "axis", "axis_value", "strategy", "seed",
               "analytic_delay_s", "neg_delay_s", "sim_delay_s", "ci95_s")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    axis: str
    values: tuple
    strategies: tuple
    base: RunConfig
    series: tuple = (("", {}),)
    seeds: tuple = (0,)
    simulate: bool = False

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep values must not be empty")
        if not self.seeds:
            raise ValueError("seed list must not be empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")


def _axis_overrides(axis, value, cfg: RunConfig) -> dict:
    if axis == "cache_ratio":
        return {"cache_ratio": float(value)}
    if axis == "lambda3":
        rates = list(cfg.arrival_rates())
        rates[-1] = float(value)
        return {"arrival_rate_per_s": tuple(rates)}
    if axis == "k2":
        return {"k2": float(value)}
    raise ValueError(f"unknown sweep axis {axis!r}")


PRESETS = ("fig2", "fig3", "fig4", "fig5")


def preset(name: str, base: RunConfig | None = None) -> ExperimentSpec:
    """Build a preset on top of ``base``; ``base.experiment`` may override
    ``values``, ``seeds``, ``strategies`` and ``simulate``."""
    base = base or RunConfig()
    if name == "fig2":
        spec = dict(axis="cache_ratio", values=(0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0),
                    strategies=("mpc",), simulate=True,
                    series=tuple((f"gamma={g}", {"gamma": g}) for g in (0.5, 1.0, 1.5)))
    elif name == "fig3":
        spec = dict(axis="cache_ratio", values=tuple(np.round(np.arange(1, 11) * 0.05, 2)),
                    strategies=("hgc",),
                    series=tuple((f"K={k}", {"num_cells": k}) for k in range(1, 7)))
    elif name == "fig4":
        base = base.with_overrides(num_cells=3, capacity_bits=(5e7,), cache_ratio=None,
                                   arrival_rate_per_s=(0.05, 0.05, 0.05))
        spec = dict(axis="lambda3", values=tuple(np.round(np.linspace(0.05, 1.0, 20), 4)),
                    strategies=("mpc", "lgc", "cgc", "hgc"))
    elif name == "fig5":
        base = base.with_overrides(num_cells=3, cache_ratio=0.4, k3=20.0)
        spec = dict(axis="k2", values=tuple(float(k) for k in range(1, 21)),
                    strategies=("mpc", "lgc", "cgc", "hgc"))
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    exp = base.experiment
    if "values" in exp:
        spec["values"] = tuple(float(v) for v in exp["values"])
    if "strategies" in exp:
        spec["strategies"] = tuple(exp["strategies"])
    if "simulate" in exp:
        spec["simulate"] = bool(exp["simulate"])
    seeds = tuple(int(s) for s in exp.get("seeds", (base.seed,)))
    return ExperimentSpec(name=name, base=base, seeds=seeds, **spec)


def _run_point(task):
    spec, label, overrides, value, seed = task
    cfg = spec.base.with_overrides(seed=seed, **overrides)
    cfg = cfg.with_overrides(**_axis_overrides(spec.axis, value, cfg))
    catalog, network = cfg.catalog(), cfg.network()
    rows = []
    for strategy in spec.strategies:
        result = run_strategy(strategy, catalog, network, cfg.constraint_mode
                              if strategy in ("cgc", "brute") else "size")
        delay = system_delay(result.placement, catalog, network).system_delay
        sim_delay = ci = math.nan
        if spec.simulate and math.isfinite(delay):
            try:
                stats = simulate(catalog, network, result.placement, cfg.sim_config(seed))
                sim_delay, ci = stats.system_mean_delay, stats.ci95_halfwidth
            except UnstableSystemError:
                pass
        rows.append({
            "preset": spec.name, "series": label, "axis": spec.axis, "axis_value": float(value),
            "strategy": strategy, "seed": seed, "analytic_delay_s": delay,
            "neg_delay_s": -delay, "sim_delay_s": sim_delay, "ci95_s": ci,
        })
    return rows


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list:
    tasks = [(spec, label, overrides, value, seed)
             for label, overrides in spec.series
             for value in spec.values
             for seed in spec.seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_point, tasks))
    else:
        chunks = [_run_point(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    order = {s: i for i, s in enumerate(spec.strategies)}
    series = {label: i for i, (label, _) in enumerate(spec.series)}
    rows.sort(key=lambda r: (series[r["series"]], r["axis_value"], order[r["strategy"]], r["seed"]))
    return rows


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    rows = []
    for raw in reader:
        row = dict(raw)
        row["seed"] = int(row["seed"])
        for key in ("axis_value", "analytic_delay_s", "neg_delay_s", "sim_delay_s", "ci95_s"):
            row[key] = float(row[key]) if row[key] != "" else math.nan
        rows.append(row)
    return rows
