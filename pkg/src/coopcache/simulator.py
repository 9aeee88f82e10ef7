"""Discrete-event simulation of the cooperative caching network.

Every cell owns one FIFO server with an unbounded queue. Requests arrive as
a Poisson stream per cell, pick a content from the cell's normalized
popularity, and are served over route 1, 2 or 3 depending on where the
content is cached. A route-2 request only occupies the requesting cell's
server; the serving peer is not modeled as a queue.

Two engines produce the same sample path from the same random draws: an
event-queue engine (heap keyed by time and sequence number) and a
vectorized engine based on the FIFO recursion
``start_n = max(arrival_n, departure_{n-1})``. The vectorized engine is the
default because it is orders of magnitude faster.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .analytic import Placement, system_delay
from .catalog import ContentCatalog, NetworkConfig, _exponential

__all__ = [
    "SimConfig",
    "SimStats",
    "RequestTrace",
    "UnstableSystemError",
    "simulate",
    "route_of_request",
    "serving_cell",
    "TRACE_COLUMNS",
]

SERVICE_MODES = ("exponential", "fixed_size")
ENGINES = ("vectorized", "events")
TRACE_COLUMNS = ("cell", "content", "route", "arrival_s", "start_service_s", "departure_s")


class UnstableSystemError(ValueError):
    """Raised when some cell has traffic intensity >= 1."""

    def __init__(self, rho):
        self.rho = np.asarray(rho, dtype=np.float64)
        bad = ", ".join(f"rho_{k} = {r:.6g}" for k, r in enumerate(self.rho) if r >= 1.0)
        super().__init__(f"stability condition violated, {bad}")


@dataclass(frozen=True)
class SimConfig:
    measured_requests: int = 100_000
    warmup_requests: int | None = None
    seed: int = 0
    service_mode: str = "exponential"
    batches: int = 20
    engine: str = "vectorized"

    def __post_init__(self):
        if self.measured_requests < 1:
            raise ValueError("measured_requests must be >= 1")
        if self.warmup_requests is not None and self.warmup_requests < 0:
            raise ValueError("warmup_requests must be >= 0")
        if self.service_mode not in SERVICE_MODES:
            raise ValueError(f"service_mode must be one of {SERVICE_MODES}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.batches < 2 or self.batches > self.measured_requests:
            raise ValueError("need 2 <= batches <= measured_requests")

    @property
    def warmup(self) -> int:
        if self.warmup_requests is None:
            return self.measured_requests // 10
        return int(self.warmup_requests)


@dataclass
class SimStats:
    per_cell_mean_delay: list
    system_mean_delay: float
    ci95_halfwidth: float
    per_cell_route_counts: list
    requests_served: int
    per_cell_requests: list = field(default_factory=list)
    per_cell_utilization: list = field(default_factory=list)
    batch_means: list = field(default_factory=list)
    seed: int = 0

    @property
    def ci95(self):
        return (self.system_mean_delay - self.ci95_halfwidth,
                self.system_mean_delay + self.ci95_halfwidth)

    def covers(self, value: float) -> bool:
        low, high = self.ci95
        return low <= value <= high

    def route_frequencies(self) -> np.ndarray:
        counts = np.asarray(self.per_cell_route_counts, dtype=np.float64)
        totals = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return counts / totals

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        return {
            "per_cell_mean_delay_s": [num(x) for x in self.per_cell_mean_delay],
            "system_mean_delay_s": self.system_mean_delay,
            "ci95_halfwidth_s": self.ci95_halfwidth,
            "per_cell_route_counts": [list(map(int, c)) for c in self.per_cell_route_counts],
            "requests_served": int(self.requests_served),
            "per_cell_requests": list(map(int, self.per_cell_requests)),
            "per_cell_utilization": [float(u) for u in self.per_cell_utilization],
            "batch_means_s": [float(b) for b in self.batch_means],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimStats":
        return cls(
            per_cell_mean_delay=[math.nan if x is None else float(x)
                                 for x in data["per_cell_mean_delay_s"]],
            system_mean_delay=float(data["system_mean_delay_s"]),
            ci95_halfwidth=float(data["ci95_halfwidth_s"]),
            per_cell_route_counts=[list(map(int, c)) for c in data["per_cell_route_counts"]],
            requests_served=int(data["requests_served"]),
            per_cell_requests=list(map(int, data.get("per_cell_requests", []))),
            per_cell_utilization=list(map(float, data.get("per_cell_utilization", []))),
            batch_means=list(map(float, data.get("batch_means_s", []))),
            seed=data.get("seed", 0),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "SimStats":
        return cls.from_dict(json.loads(text))


@dataclass
class RequestTrace:
    """Measured requests in arrival order."""

    cell: np.ndarray
    content: np.ndarray
    route: np.ndarray
    arrival: np.ndarray
    start: np.ndarray
    departure: np.ndarray

    def __len__(self):
        return self.cell.size

    @property
    def delay(self) -> np.ndarray:
        return self.departure - self.arrival

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in zip(self.cell.tolist(), self.content.tolist(), self.route.tolist(),
                       self.arrival.tolist(), self.start.tolist(), self.departure.tolist()):
            writer.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), repr(row[5])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RequestTrace":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        rows = list(reader)
        cols = list(zip(*rows)) if rows else [()] * 6
        ints = [np.array(c, dtype=np.int64) for c in cols[:3]]
        floats = [np.array(c, dtype=np.float64) for c in cols[3:]]
        return cls(*ints, *floats)


def route_of_request(placement: Placement, cell: int, content: int) -> int:
    """1 for a local hit, 2 if some other cell holds the content, else 3."""
    c = placement.matrix
    if c[cell, content]:
        return 1
    if c[:, content].any():
        return 2
    return 3


def serving_cell(placement: Placement, cell: int, content: int, rng) -> int | None:
    """Cell that delivers the content: the requester, a random holder, or None (core)."""
    route = route_of_request(placement, cell, content)
    if route == 1:
        return cell
    if route == 2:
        holders = np.flatnonzero(placement.matrix[:, content])
        return int(holders[int(rng.integers(holders.size))])
    return None


def _cell_streams(seed, num_cells):
    # one child per cell, each split into arrivals / content / service / peer
    return [[np.random.default_rng(s) for s in child.spawn(4)]
            for child in np.random.SeedSequence(seed).spawn(num_cells)]


def _arrival_times(streams, rates, total):
    """Per-cell Poisson arrival times covering the first ``total`` merged arrivals."""
    lam = rates.sum()
    chunks = [[] for _ in rates]
    last = np.zeros(rates.size)
    offsets = np.zeros(rates.size)
    first = [max(256, int(math.ceil(total * r / lam * 1.02 + 6 * math.sqrt(total * r / lam))))
             for r in rates]
    extra = [max(256, n // 16) for n in first]

    def extend(k, n):
        gaps = _exponential(streams[k][0], 1.0 / rates[k], n)
        times = offsets[k] + np.cumsum(gaps)
        offsets[k] = times[-1]
        last[k] = times[-1]
        chunks[k].append(times)

    for k in range(rates.size):
        extend(k, first[k])
    while True:
        horizon = last.min()
        known = sum(int(np.searchsorted(np.concatenate(c), horizon, side="right"))
                    for c in chunks)
        if known >= total:
            break
        k = int(np.argmin(last))
        extend(k, extra[k])
    arrivals = [np.concatenate(c) for c in chunks]
    cells = np.concatenate([np.full(a.size, k, dtype=np.int64) for k, a in enumerate(arrivals)])
    times = np.concatenate(arrivals)
    order = np.lexsort((cells, times))[:total]
    counts = np.bincount(cells[order], minlength=rates.size)
    return [a[:n] for a, n in zip(arrivals, counts)]


def _fifo_vectorized(arrival, service):
    """Departure times of a FIFO single server via a running maximum."""
    if arrival.size == 0:
        return arrival.copy(), arrival.copy()
    cum = np.cumsum(service)
    before = cum - service
    departure = cum + np.maximum.accumulate(arrival - before)
    start = np.empty_like(arrival)
    start[0] = arrival[0]
    start[1:] = np.maximum(arrival[1:], departure[:-1])
    return start, start + service


def _fifo_events(arrivals, services):
    """Same FIFO dynamics, driven by a global (time, sequence) event heap."""
    starts = [np.empty_like(a) for a in arrivals]
    departures = [np.empty_like(a) for a in arrivals]
    heap = []
    seq = 0
    for k, a in enumerate(arrivals):
        if a.size:
            heap.append((a[0], seq, 0, k, 0))
            seq += 1
    heapq.heapify(heap)
    waiting = [deque() for _ in arrivals]
    busy = [False] * len(arrivals)
    while heap:
        now, _, kind, k, i = heapq.heappop(heap)
        if kind == 0:
            if i + 1 < arrivals[k].size:
                heapq.heappush(heap, (arrivals[k][i + 1], seq, 0, k, i + 1))
                seq += 1
            if busy[k]:
                waiting[k].append(i)
                continue
            busy[k] = True
            starts[k][i] = now
            heapq.heappush(heap, (now + services[k][i], seq, 1, k, i))
            seq += 1
        else:
            departures[k][i] = now
            if waiting[k]:
                j = waiting[k].popleft()
                starts[k][j] = now
                heapq.heappush(heap, (now + services[k][j], seq, 1, k, j))
                seq += 1
            else:
                busy[k] = False
    return starts, departures


def _offered_load(catalog, config, placement, mode):
    if mode == "exponential":
        return system_delay(placement, catalog, config).rho
    c = placement.matrix
    held = c.any(axis=0)
    ratio = np.where(c == 1, 1.0, np.where(held[None, :], config.k2, config.k3))
    mean_service = (catalog.cell_popularity_normalized * ratio * catalog.sizes[None, :]).sum(axis=1)
    return config.arrival_rates * config.tau1 / catalog.mean_size * mean_service


def simulate(catalog: ContentCatalog, config: NetworkConfig, placement: Placement,
             sim_config: SimConfig = SimConfig(), return_trace: bool = False):
    """Simulate the network and estimate mean delay per request.

    Requests are counted network-wide: the first ``warmup`` arrivals (in
    time order over all cells) are discarded and the next
    ``measured_requests`` are measured. The confidence interval comes from
    ``batches`` contiguous batch means of the measured delays.

    Returns
    -------
    SimStats, or (SimStats, RequestTrace) when ``return_trace`` is set.
    """
    placement._check_dims(catalog, config)
    if not placement.is_feasible(catalog, config):
        raise ValueError("placement violates the storage constraint")
    rho = _offered_load(catalog, config, placement, sim_config.service_mode)
    if np.any(rho >= 1.0):
        raise UnstableSystemError(rho)

    K = config.num_cells
    warmup = sim_config.warmup
    total = warmup + sim_config.measured_requests
    streams = _cell_streams(sim_config.seed, K)
    arrivals = _arrival_times(streams, config.arrival_rates, total)

    c = placement.matrix
    held = c.any(axis=0)
    ratios = config.route_ratios
    contents, routes, services = [], [], []
    for k in range(K):
        n = arrivals[k].size
        cdf = np.cumsum(catalog.cell_popularity_normalized[k])
        cdf[-1] = 1.0
        f = np.minimum(np.searchsorted(cdf, streams[k][1].random(n), side="right"),
                       catalog.num_contents - 1)
        route = np.where(c[k, f] == 1, 1, np.where(held[f], 2, 3))
        if sim_config.service_mode == "exponential":
            s = _exponential(streams[k][2], 1.0, n) * (config.tau1 * ratios[route - 1])
        else:
            s = catalog.sizes[f] * (config.tau1 / catalog.mean_size) * ratios[route - 1]
        contents.append(f)
        routes.append(route)
        services.append(s)

    if sim_config.engine == "events":
        starts, departures = _fifo_events(arrivals, services)
    else:
        starts, departures = [], []
        for a, s in zip(arrivals, services):
            st, dep = _fifo_vectorized(a, s)
            starts.append(st)
            departures.append(dep)

    cell = np.concatenate([np.full(a.size, k, dtype=np.int64) for k, a in enumerate(arrivals)])
    arrival = np.concatenate(arrivals)
    order = np.lexsort((cell, arrival))[warmup:]
    trace = RequestTrace(
        cell=cell[order],
        content=np.concatenate(contents)[order],
        route=np.concatenate(routes)[order],
        arrival=arrival[order],
        start=np.concatenate(starts)[order],
        departure=np.concatenate(departures)[order],
    )
    delay = trace.delay
    batch_means = np.array([b.mean() for b in np.array_split(delay, sim_config.batches)])
    nb = batch_means.size
    half = float(sps.t.ppf(0.975, nb - 1) * batch_means.std(ddof=1) / math.sqrt(nb))

    per_cell_mean, route_counts, per_cell_n = [], [], []
    for k in range(K):
        mine = trace.cell == k
        n = int(mine.sum())
        per_cell_n.append(n)
        per_cell_mean.append(float(delay[mine].mean()) if n else math.nan)
        route_counts.append(np.bincount(trace.route[mine], minlength=4)[1:].tolist())
    horizon = float(arrival[order[-1]]) if order.size else 0.0
    utilization = [float(s[a <= horizon].sum() / horizon) if horizon > 0 else 0.0
                   for a, s in zip(arrivals, services)]

    stats = SimStats(
        per_cell_mean_delay=per_cell_mean,
        system_mean_delay=float(delay.mean()),
        ci95_halfwidth=half,
        per_cell_route_counts=route_counts,
        requests_served=int(delay.size),
        per_cell_requests=per_cell_n,
        per_cell_utilization=utilization,
        batch_means=batch_means.tolist(),
        seed=sim_config.seed,
    )
    if return_trace:
        return stats, trace
    return stats
