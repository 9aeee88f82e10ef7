"""JSON run configuration with unit-suffixed keys.

Defaults reproduce the standard scenario: 100 contents of 5 Mbit average
size, a 100 Mbit/s local rate, route ratios 4 and 20, 0.5 requests/s per
cell and Zipf exponent 0.5.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .catalog import ContentCatalog, NetworkConfig, build_catalog
from .optimizer import STRATEGIES
from .simulator import SimConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; carries the source name and 1-based line."""

    def __init__(self, message, source="<config>", line=None):
        self.source = source
        self.line = line
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    num_contents: int = 100
    mean_size_bits: float = 5e6
    gamma: float = 0.5
    heterogeneity: float = 0.0
    num_cells: int = 3
    capacity_bits: tuple = (5e7,)
    cache_ratio: float | None = None
    arrival_rate_per_s: tuple = (0.5,)
    r1_bps: float = 1e8
    k2: float = 4.0
    k3: float = 20.0
    seed: int = 0
    strategy: str = "hgc"
    constraint_mode: str = "size"
    simulation: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)

    @property
    def tau1(self) -> float:
        return self.mean_size_bits / self.r1_bps

    def capacities(self) -> np.ndarray:
        if self.cache_ratio is not None:
            return np.full(self.num_cells, self.cache_ratio * self.mean_size_bits * self.num_contents)
        return _per_cell(self.capacity_bits, self.num_cells, "capacity_bits")

    def arrival_rates(self) -> np.ndarray:
        return _per_cell(self.arrival_rate_per_s, self.num_cells, "arrival_rate_per_s")

    def network(self) -> NetworkConfig:
        return NetworkConfig(self.capacities(), self.arrival_rates(), self.tau1, self.k2, self.k3)

    def catalog(self) -> ContentCatalog:
        return build_catalog(self.num_contents, self.num_cells, self.gamma, self.mean_size_bits,
                             self.heterogeneity, self.seed)

    def sim_config(self, seed=None) -> SimConfig:
        opts = dict(self.simulation)
        if seed is not None:
            opts["seed"] = seed
        opts.setdefault("seed", self.seed)
        return SimConfig(**opts)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def _per_cell(value, num_cells, name):
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1:
        return np.full(num_cells, float(arr[0]))
    if arr.size != num_cells:
        raise ValueError(f"{name} has {arr.size} entries for {num_cells} cells")
    return arr


_SIM_KEYS = {"measured_requests", "warmup_requests", "seed", "service_mode", "batches", "engine"}
_EXPERIMENT_KEYS = {"seeds", "values", "strategies", "simulate"}


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", source, exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", source, 1)

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", source, _line_of(text, key))

    known = set(RunConfig.__dataclass_fields__)
    for key in data:
        if key not in known:
            fail(key, "unknown key")

    def number(key, lo=None, hi=None, integer=False, strict_lo=False):
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            fail(key, f"expected a finite number, got {v!r}")
        if integer and int(v) != v:
            fail(key, f"expected an integer, got {v!r}")
        if lo is not None and (v <= lo if strict_lo else v < lo):
            fail(key, f"must be {'>' if strict_lo else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            fail(key, f"must be <= {hi}, got {v!r}")
        return int(v) if integer else float(v)

    def vector(key, positive):
        v = data[key]
        items = v if isinstance(v, list) else [v]
        if not items:
            fail(key, "must not be empty")
        for x in items:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                fail(key, f"expected numbers, got {x!r}")
            if (positive and x <= 0) or x < 0:
                fail(key, f"must be {'positive' if positive else 'nonnegative'}, got {x!r}")
        return tuple(float(x) for x in items)

    out = {}
    if "num_contents" in data:
        out["num_contents"] = number("num_contents", 1, integer=True)
    if "mean_size_bits" in data:
        out["mean_size_bits"] = number("mean_size_bits", 0, strict_lo=True)
    if "gamma" in data:
        out["gamma"] = number("gamma", 0)
    if "heterogeneity" in data:
        out["heterogeneity"] = number("heterogeneity", 0)
    if "num_cells" in data:
        out["num_cells"] = number("num_cells", 1, integer=True)
    if "capacity_bits" in data:
        out["capacity_bits"] = vector("capacity_bits", positive=False)
    if "cache_ratio" in data:
        if data["cache_ratio"] is not None:
            out["cache_ratio"] = number("cache_ratio", 0)
    if "arrival_rate_per_s" in data:
        out["arrival_rate_per_s"] = vector("arrival_rate_per_s", positive=True)
    if "r1_bps" in data:
        out["r1_bps"] = number("r1_bps", 0, strict_lo=True)
    if "k2" in data:
        out["k2"] = number("k2", 1)
    if "k3" in data:
        out["k3"] = number("k3", 1)
    if "seed" in data:
        out["seed"] = number("seed", 0, integer=True)
    for key in ("strategy", "constraint_mode"):
        if key in data:
            if not isinstance(data[key], str):
                fail(key, "expected a string")
            out[key] = data[key]
    for key, allowed in (("simulation", _SIM_KEYS), ("experiment", _EXPERIMENT_KEYS)):
        if key in data:
            if not isinstance(data[key], dict):
                fail(key, "expected an object")
            for sub in data[key]:
                if sub not in allowed:
                    fail(sub, f"unknown key in {key!r}")
            out[key] = dict(data[key])

    cfg = RunConfig(**out)
    if cfg.k3 < cfg.k2:
        fail("k3", f"need k3 >= k2, got k2={cfg.k2}, k3={cfg.k3}")
    if cfg.strategy not in STRATEGIES:
        fail("strategy", f"unknown strategy {cfg.strategy!r}")
    if cfg.constraint_mode not in ("size", "cardinality"):
        fail("constraint_mode", f"unknown constraint mode {cfg.constraint_mode!r}")
    for key, n in (("capacity_bits", len(cfg.capacity_bits)),
                   ("arrival_rate_per_s", len(cfg.arrival_rate_per_s))):
        if n not in (1, cfg.num_cells):
            fail(key, f"has {n} entries for {cfg.num_cells} cells")
    try:
        cfg.sim_config()
    except (TypeError, ValueError) as exc:
        fail("simulation", str(exc))
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
