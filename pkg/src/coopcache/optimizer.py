"""Cache placement strategies.

* ``mpc``: every cell fills its cache with its own most popular contents.
* ``lgc``: every cell fills its cache by popularity-per-bit (knapsack greedy).
* ``cgc``: global greedy on the marginal decrease of system delay.
* ``hgc``: global greedy on marginal delay decrease per bit.
* ``brute_force_optimal``: exhaustive search, for small instances only.

All greedy ties are broken by lowest cell index, then lowest content index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import IncrementalDelay, Placement, batch_system_delay, system_delay
from .catalog import ContentCatalog, NetworkConfig

__all__ = [
    "MAX_BRUTE_FORCE_ELEMENTS",
    "InstanceTooLarge",
    "MatroidSpec",
    "StrategyResult",
    "GuaranteeReport",
    "STRATEGIES",
    "cardinality_limits",
    "matroid_feasible",
    "mpc",
    "lgc",
    "cgc",
    "hgc",
    "brute_force_optimal",
    "check_guarantee",
    "run_strategy",
]

MAX_BRUTE_FORCE_ELEMENTS = 24
CAPACITY_RTOL = 1e-12
CONSTRAINT_MODES = ("size", "cardinality")


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class MatroidSpec:
    """Partition matroid over the K*F placement elements.

    A selection is independent iff it picks at most ``per_cell_limits[k]``
    contents for each cell ``k``.
    """

    num_contents: int
    per_cell_limits: tuple

    @property
    def num_cells(self) -> int:
        return len(self.per_cell_limits)

    @property
    def ground_set_size(self) -> int:
        return self.num_cells * self.num_contents


def cardinality_limits(catalog: ContentCatalog, config: NetworkConfig) -> tuple:
    """Per-cell slot counts ``floor(C_k / mean_size)``."""
    # small relative guard so e.g. C = 2 * mean does not floor to 1
    return tuple(int(math.floor(c / catalog.mean_size * (1 + 1e-12))) for c in config.capacities)


def matroid_feasible(selection, spec: MatroidSpec) -> bool:
    counts = [0] * spec.num_cells
    for k, f in selection:
        if not (0 <= k < spec.num_cells and 0 <= f < spec.num_contents):
            raise IndexError(f"element {(k, f)} out of range")
        counts[k] += 1
    return all(n <= limit for n, limit in zip(counts, spec.per_cell_limits))


@dataclass
class StrategyResult:
    strategy: str
    placement: Placement
    constraint_mode: str = "size"
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    system_delay: float = math.nan

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "constraint_mode": self.constraint_mode,
            "matrix": self.placement.matrix.tolist(),
            "used_bits": self.placement.used_bits.tolist(),
            "system_delay_s": self.system_delay if math.isfinite(self.system_delay) else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict, catalog: ContentCatalog | None = None) -> "StrategyResult":
        matrix = np.array(data["matrix"], dtype=np.int8)
        if catalog is not None:
            placement = Placement.from_matrix(matrix, catalog)
        else:
            placement = Placement(matrix, data["used_bits"])
        delay = data.get("system_delay_s")
        return cls(
            strategy=data["strategy"],
            placement=placement,
            constraint_mode=data.get("constraint_mode", "size"),
            system_delay=math.inf if delay is None else float(delay),
        )

    @classmethod
    def loads(cls, text: str, catalog: ContentCatalog | None = None) -> "StrategyResult":
        return cls.from_dict(json.loads(text), catalog)


def _finish(name, state: IncrementalDelay, mode, iterations, trace) -> StrategyResult:
    placement = state.placement()
    return StrategyResult(name, placement, mode, iterations, trace, state.delay)


def _check(catalog, config, mode="size"):
    if config.num_cells != catalog.num_cells:
        raise ValueError(f"config has {config.num_cells} cells, catalog has {catalog.num_cells}")
    if mode not in CONSTRAINT_MODES:
        raise ValueError(f"unknown constraint mode {mode!r}")


def _budgets(config: NetworkConfig) -> np.ndarray:
    # same relative slack as Placement.is_feasible, so an exact fill is not
    # lost to rounding in the running subtraction
    return config.capacities * (1 + CAPACITY_RTOL)


def _per_cell_fill(name, catalog, config, order_key) -> StrategyResult:
    _check(catalog, config)
    state = IncrementalDelay(catalog, config)
    sizes = catalog.sizes
    trace = []
    for k in range(config.num_cells):
        remaining = _budgets(config)[k]
        # stable sort on the negated key keeps lower content index first on ties
        for f in np.argsort(-order_key[k], kind="stable"):
            if sizes[f] <= remaining:
                remaining -= sizes[f]
                state.add(k, int(f))
                trace.append(state.delay)
    return _finish(name, state, "size", len(trace), trace)


def mpc(catalog: ContentCatalog, config: NetworkConfig) -> StrategyResult:
    """Most popular caching, admit-or-skip in descending local popularity."""
    return _per_cell_fill("mpc", catalog, config, catalog.cell_popularity_normalized)


def lgc(catalog: ContentCatalog, config: NetworkConfig) -> StrategyResult:
    """Local greedy caching, admit-or-skip by popularity-to-size ratio."""
    return _per_cell_fill("lgc", catalog, config,
                          catalog.cell_popularity_normalized / catalog.sizes[None, :])


def _argmax(scores: np.ndarray):
    # np.argmax returns the first maximum in row-major order: lowest k, then f
    idx = int(np.argmax(scores))
    return divmod(idx, scores.shape[1])


def cgc(catalog: ContentCatalog, config: NetworkConfig,
        constraint_mode: str = "size") -> StrategyResult:
    """Conventional greedy on marginal delay decrease.

    In ``size`` mode an element is feasible when the content fits into the
    cell's remaining storage; in ``cardinality`` mode when the cell still
    has one of its ``floor(C_k / mean_size)`` slots free.
    """
    _check(catalog, config, constraint_mode)
    state = IncrementalDelay(catalog, config)
    sizes = catalog.sizes
    remaining = _budgets(config)
    slots = np.array(cardinality_limits(catalog, config), dtype=np.int64)
    trace = []
    while True:
        if constraint_mode == "size":
            feasible = sizes[None, :] <= remaining[:, None]
        else:
            feasible = np.repeat((slots > 0)[:, None], catalog.num_contents, axis=1)
        feasible &= state.matrix == 0
        if not feasible.any():
            break
        scores = np.where(feasible, state.gains(), -np.inf)
        k, f = _argmax(scores)
        if not scores[k, f] > 0:
            break
        state.add(k, f)
        remaining[k] -= sizes[f]
        slots[k] -= 1
        trace.append(state.delay)
    return _finish("cgc", state, constraint_mode, len(trace), trace)


def hgc(catalog: ContentCatalog, config: NetworkConfig) -> StrategyResult:
    """Heuristic greedy: best marginal delay decrease per bit.

    Candidates that no longer fit are pruned after every pick, and so are
    candidates whose marginal gain has dropped to zero or below.
    """
    _check(catalog, config)
    state = IncrementalDelay(catalog, config)
    sizes = catalog.sizes
    remaining = _budgets(config)
    candidates = sizes[None, :] <= remaining[:, None]
    trace = []
    while candidates.any():
        gains = state.gains()
        candidates &= gains > 0
        if not candidates.any():
            break
        k, f = _argmax(np.where(candidates, gains / sizes[None, :], -np.inf))
        state.add(k, f)
        remaining[k] -= sizes[f]
        candidates[k, f] = False
        candidates &= sizes[None, :] <= remaining[:, None]
        trace.append(state.delay)
    return _finish("hgc", state, "size", len(trace), trace)


def _cell_masks(catalog, config, mode):
    """Feasible per-cell content subsets as bit masks (bit F-1-f for content f)."""
    F = catalog.num_contents
    masks = np.arange(1 << F, dtype=np.int64)
    bits = ((masks[:, None] >> (F - 1 - np.arange(F))) & 1).astype(np.float64)
    out = []
    if mode == "cardinality":
        limits = cardinality_limits(catalog, config)
        counts = bits.sum(axis=1)
        for k in range(config.num_cells):
            out.append(masks[counts <= limits[k]])
    else:
        used = bits @ catalog.sizes
        for k in range(config.num_cells):
            out.append(masks[used <= config.capacities[k] * (1 + CAPACITY_RTOL)])
    return out


def brute_force_optimal(catalog: ContentCatalog, config: NetworkConfig,
                        constraint_mode: str = "size", chunk: int = 1 << 15) -> StrategyResult:
    """Exhaustive minimum of the system delay over all feasible placements.

    Ties (within 1e-12 relative) go to the lexicographically smallest
    row-major matrix.
    """
    _check(catalog, config, constraint_mode)
    K, F = catalog.cell_popularity.shape
    if K * F > MAX_BRUTE_FORCE_ELEMENTS:
        raise InstanceTooLarge(f"instance too large for brute force: K*F = {K * F} > "
                               f"{MAX_BRUTE_FORCE_ELEMENTS}")
    per_cell = _cell_masks(catalog, config, constraint_mode)
    # enumerate the product of per-cell masks in lexicographic order
    counts = [m.size for m in per_cell]
    total = int(np.prod(counts))
    shifts = F - 1 - np.arange(F)
    best_delay, best_code = math.inf, None
    evaluated = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        cells = np.empty((idx.size, K), dtype=np.int64)
        rest = idx.copy()
        for k in range(K - 1, -1, -1):
            cells[:, k] = per_cell[k][rest % counts[k]]
            rest //= counts[k]
        mats = ((cells[:, :, None] >> shifts) & 1).astype(np.int8)
        delays = batch_system_delay(mats, catalog, config)
        evaluated += idx.size
        low = delays.min()
        if not math.isfinite(low):
            continue
        if best_code is None or low < best_delay * (1 - 1e-12):
            first = int(np.argmax(delays <= low * (1 + 1e-12)))
            best_code = cells[first].copy()
            best_delay = float(delays[first])
    if best_code is None:
        # every feasible placement is unstable; report the empty one
        best_code = np.zeros(K, dtype=np.int64)
    matrix = ((best_code[:, None] >> shifts) & 1).astype(np.int8)
    placement = Placement.from_matrix(matrix, catalog)
    delay = system_delay(placement, catalog, config).system_delay
    return StrategyResult("brute", placement, constraint_mode, evaluated, [delay], delay)


@dataclass(frozen=True)
class GuaranteeReport:
    ratio: float
    empty_delay: float
    greedy_delay: float
    optimal_delay: float

    @property
    def holds(self) -> bool:
        return self.ratio >= 0.5 - 1e-9


def check_guarantee(catalog: ContentCatalog, config: NetworkConfig) -> GuaranteeReport:
    """Delay reduction of greedy relative to the optimum, cardinality mode.

    The ratio is defined as 1 when the optimum cannot improve on the empty
    placement.
    """
    empty = system_delay(Placement.empty(catalog), catalog, config).system_delay
    greedy = cgc(catalog, config, "cardinality").system_delay
    best = brute_force_optimal(catalog, config, "cardinality").system_delay
    gap = empty - best
    if not gap > 0:
        ratio = 1.0
    else:
        ratio = (empty - greedy) / gap
    return GuaranteeReport(float(ratio), empty, greedy, best)


STRATEGIES = {
    "mpc": mpc,
    "lgc": lgc,
    "cgc": cgc,
    "hgc": hgc,
    "brute": brute_force_optimal,
}


def run_strategy(name: str, catalog: ContentCatalog, config: NetworkConfig,
                 constraint_mode: str = "size") -> StrategyResult:
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; choose from {sorted(STRATEGIES)}")
    if name in ("cgc", "brute"):
        return STRATEGIES[name](catalog, config, constraint_mode)
    if constraint_mode != "size":
        raise ValueError(f"strategy {name!r} only supports the size constraint")
    return STRATEGIES[name](catalog, config)
