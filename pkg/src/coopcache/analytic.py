"""Closed-form delay model for cooperative cell caching.

Each cell is a single FIFO server fed by Poisson requests. A request is
served from the local cache (route 1), from a cooperating cell's cache
(route 2) or from the core network (route 3), with mean service times
``tau1``, ``k2 * tau1`` and ``k3 * tau1``. The per-cell mean sojourn time
is the Pollaczek-Khinchine mean for the resulting hyperexponential service
mix, and the system delay is the arrival-rate weighted average over cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .catalog import ContentCatalog, NetworkConfig

__all__ = [
    "PENALTY_SCALE",
    "Placement",
    "RouteSplit",
    "DelayReport",
    "IncrementalDelay",
    "route_matrix",
    "route_split",
    "traffic_intensity",
    "cell_delay",
    "system_delay",
    "surrogate_delay",
    "marginal_delay",
    "delta_rho_case",
    "batch_system_delay",
]

# ordering surrogate for unstable cells: M * (1 + rho)
PENALTY_SCALE = 1e9


@dataclass(frozen=True)
class Placement:
    """Binary K x F cache matrix plus the bits it occupies per cell."""

    matrix: np.ndarray
    used_bits: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.int8)
        if m.ndim != 2:
            raise ValueError("placement matrix must be 2-D")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("placement entries must be 0 or 1")
        used = np.array(self.used_bits, dtype=np.float64).reshape(-1)
        if used.size != m.shape[0]:
            raise ValueError("used_bits length must equal the number of cells")
        m.setflags(write=False)
        used.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "used_bits", used)

    @classmethod
    def from_matrix(cls, matrix, catalog: ContentCatalog) -> "Placement":
        m = np.asarray(matrix, dtype=np.int8)
        if m.shape != catalog.cell_popularity.shape:
            raise ValueError(f"placement shape {m.shape} does not match catalog "
                             f"{catalog.cell_popularity.shape}")
        return cls(m, m.astype(np.float64) @ catalog.sizes)

    @classmethod
    def empty(cls, catalog: ContentCatalog) -> "Placement":
        return cls.from_matrix(np.zeros(catalog.cell_popularity.shape, dtype=np.int8), catalog)

    @classmethod
    def full(cls, catalog: ContentCatalog) -> "Placement":
        return cls.from_matrix(np.ones(catalog.cell_popularity.shape, dtype=np.int8), catalog)

    @classmethod
    def from_elements(cls, elements, catalog: ContentCatalog) -> "Placement":
        m = np.zeros(catalog.cell_popularity.shape, dtype=np.int8)
        for k, f in elements:
            m[k, f] = 1
        return cls.from_matrix(m, catalog)

    @property
    def shape(self):
        return self.matrix.shape

    def elements(self) -> set:
        return {(int(k), int(f)) for k, f in zip(*np.nonzero(self.matrix))}

    def add(self, element, catalog: ContentCatalog) -> "Placement":
        k, f = element
        if self.matrix[k, f]:
            raise ValueError(f"element {element} is already cached")
        m = self.matrix.copy()
        m[k, f] = 1
        return Placement.from_matrix(m, catalog)

    def is_feasible(self, catalog: ContentCatalog, config: NetworkConfig, rtol=1e-12) -> bool:
        """Storage constraint ``sum_f c[k, f] * S_f <= C_k`` for every cell."""
        self._check_dims(catalog, config)
        used = self.matrix.astype(np.float64) @ catalog.sizes
        return bool(np.all(used <= config.capacities * (1 + rtol)))

    def _check_dims(self, catalog: ContentCatalog, config: NetworkConfig | None = None):
        if self.matrix.shape != catalog.cell_popularity.shape:
            raise ValueError(f"placement shape {self.matrix.shape} does not match catalog "
                             f"{catalog.cell_popularity.shape}")
        if config is not None and config.num_cells != self.matrix.shape[0]:
            raise ValueError(f"config has {config.num_cells} cells, placement has "
                             f"{self.matrix.shape[0]}")


@dataclass(frozen=True)
class RouteSplit:
    r1_prob: float
    r2_prob: float
    r3_prob: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r1_prob, self.r2_prob, self.r3_prob])


def route_matrix(matrix, popularity_normalized) -> np.ndarray:
    """Route probabilities for every cell, shape (K, 3)."""
    c = np.asarray(matrix, dtype=np.float64)
    P = np.asarray(popularity_normalized, dtype=np.float64)
    if c.shape != P.shape:
        raise ValueError(f"placement shape {c.shape} does not match catalog {P.shape}")
    held = c.max(axis=0)
    missing = np.prod(1.0 - c, axis=0)
    r1 = (P * c).sum(axis=1)
    r2 = (P * (1.0 - c) * held).sum(axis=1)
    r3 = (P * missing).sum(axis=1)
    return np.stack([r1, r2, r3], axis=1)


def route_split(placement: Placement, catalog: ContentCatalog, cell: int) -> RouteSplit:
    placement._check_dims(catalog)
    if not 0 <= cell < catalog.num_cells:
        raise IndexError(f"cell {cell} out of range")
    r = route_matrix(placement.matrix, catalog.cell_popularity_normalized)[cell]
    return RouteSplit(float(r[0]), float(r[1]), float(r[2]))


def _split_array(split) -> np.ndarray:
    if isinstance(split, RouteSplit):
        return split.as_array()
    return np.asarray(split, dtype=np.float64)


def _cell_terms(routes, rates, tau1, k2, k3):
    """Vectorized (rho, T) for route rows ``routes[..., 3]`` and rates."""
    routes = np.asarray(routes, dtype=np.float64)
    load = routes[..., 0] + k2 * routes[..., 1] + k3 * routes[..., 2]
    second = routes[..., 0] + k2 * k2 * routes[..., 1] + k3 * k3 * routes[..., 2]
    rho = rates * tau1 * load
    with np.errstate(divide="ignore", invalid="ignore"):
        t = tau1 * load + rates * tau1 * tau1 * second / (1.0 - rho)
    t = np.where(rho < 1.0, t, np.inf)
    return rho, t


def _surrogate(rho, t):
    return np.where(rho < 1.0, t, PENALTY_SCALE * (1.0 + rho))


def traffic_intensity(split, lambda_k: float, tau1: float, k2: float, k3: float) -> float:
    """Offered load ``lambda_k * tau1 * (R1 + k2 R2 + k3 R3)``."""
    rho, _ = _cell_terms(_split_array(split), lambda_k, tau1, k2, k3)
    return float(rho)


def cell_delay(split, lambda_k: float, tau1: float, k2: float, k3: float) -> float:
    """Mean sojourn time of one cell; ``inf`` when the cell is overloaded."""
    _, t = _cell_terms(_split_array(split), lambda_k, tau1, k2, k3)
    return float(t)


@dataclass(frozen=True)
class DelayReport:
    per_cell_route_split: tuple
    rho: np.ndarray
    cell_delay: np.ndarray
    system_delay: float
    stable: bool

    @property
    def unstable_cells(self) -> list:
        return [int(k) for k in np.flatnonzero(self.rho >= 1.0)]

    def to_dict(self) -> dict:
        def num(x):
            return float(x) if math.isfinite(x) else None

        return {
            "per_cell": [
                {"rho": float(r), "t_cell_s": num(t), "r1": s.r1_prob, "r2": s.r2_prob,
                 "r3": s.r3_prob}
                for r, t, s in zip(self.rho, self.cell_delay, self.per_cell_route_split)
            ],
            "system_delay_s": num(self.system_delay),
            "stable": self.stable,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DelayReport":
        def num(x):
            return math.inf if x is None else float(x)

        cells = data["per_cell"]
        return cls(
            per_cell_route_split=tuple(RouteSplit(c["r1"], c["r2"], c["r3"]) for c in cells),
            rho=np.array([c["rho"] for c in cells], dtype=np.float64),
            cell_delay=np.array([num(c["t_cell_s"]) for c in cells], dtype=np.float64),
            system_delay=num(data["system_delay_s"]),
            stable=bool(data["stable"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "DelayReport":
        return cls.from_dict(json.loads(text))


def system_delay(placement: Placement, catalog: ContentCatalog,
                 config: NetworkConfig) -> DelayReport:
    """Evaluate the delay model for a placement.

    ``system_delay`` is ``sum_k lambda_k T_k / sum_k lambda_k`` and is
    ``inf`` as soon as any cell has ``rho_k >= 1``.
    """
    placement._check_dims(catalog, config)
    routes = route_matrix(placement.matrix, catalog.cell_popularity_normalized)
    lam = config.arrival_rates
    rho, t = _cell_terms(routes, lam, config.tau1, config.k2, config.k3)
    stable = bool(np.all(rho < 1.0))
    total = float(np.dot(lam, t) / lam.sum()) if stable else math.inf
    splits = tuple(RouteSplit(*map(float, r)) for r in routes)
    return DelayReport(splits, rho, t, total, stable)


def surrogate_delay(placement: Placement, catalog: ContentCatalog,
                    config: NetworkConfig) -> float:
    """System delay with overloaded cells replaced by ``M * (1 + rho_k)``."""
    report = system_delay(placement, catalog, config)
    lam = config.arrival_rates
    return float(np.dot(lam, _surrogate(report.rho, report.cell_delay)) / lam.sum())


def batch_system_delay(matrices, catalog: ContentCatalog, config: NetworkConfig) -> np.ndarray:
    """System delay for a stack of placements, shape (n, K, F) -> (n,)."""
    c = np.asarray(matrices, dtype=np.float64)
    P = catalog.cell_popularity_normalized
    held = c.max(axis=1, keepdims=True)
    missing = np.prod(1.0 - c, axis=1, keepdims=True)
    routes = np.stack([(P * c).sum(axis=2),
                       (P * (1.0 - c) * held).sum(axis=2),
                       (P * missing).sum(axis=2)], axis=2)
    lam = config.arrival_rates
    rho, t = _cell_terms(routes, lam, config.tau1, config.k2, config.k3)
    with np.errstate(invalid="ignore"):
        total = (t * lam).sum(axis=1) / lam.sum()
    return np.where(np.all(rho < 1.0, axis=1), total, np.inf)


class IncrementalDelay:
    """Mutable placement state that scores candidate additions cheaply.

    Keeps per-cell route probabilities and per-content copy counts. Adding
    content ``f`` to cell ``j`` only moves probability mass of ``f`` in cell
    ``j`` (toward route 1) and, if ``f`` had no copy anywhere, in every
    other cell (from route 3 to route 2), so each candidate costs O(K).
    Gains are differences of the surrogate delay, which equals the true
    delay whenever every cell is stable.
    """

    def __init__(self, catalog: ContentCatalog, config: NetworkConfig, placement=None):
        if config.num_cells != catalog.num_cells:
            raise ValueError(f"config has {config.num_cells} cells, catalog has "
                             f"{catalog.num_cells}")
        self.catalog = catalog
        self.config = config
        self.P = catalog.cell_popularity_normalized
        lam = config.arrival_rates
        self.weights = lam / lam.sum()
        if placement is None:
            self.matrix = np.zeros(self.P.shape, dtype=np.int8)
        else:
            placement._check_dims(catalog, config)
            self.matrix = placement.matrix.copy()
        self._refresh()

    def _refresh(self):
        self.copies = self.matrix.sum(axis=0, dtype=np.int64)
        self.routes = route_matrix(self.matrix, self.P)
        self.rho, self.t = self._terms(self.routes)
        self.t_sur = _surrogate(self.rho, self.t)

    def _terms(self, routes, cells=slice(None)):
        cfg = self.config
        return _cell_terms(routes, cfg.arrival_rates[cells], cfg.tau1, cfg.k2, cfg.k3)

    @property
    def used_bits(self) -> np.ndarray:
        return self.matrix.astype(np.float64) @ self.catalog.sizes

    @property
    def delay(self) -> float:
        if np.all(self.rho < 1.0):
            return float(np.dot(self.config.arrival_rates, self.t) / self.config.total_rate)
        return math.inf

    def placement(self) -> Placement:
        return Placement.from_matrix(self.matrix, self.catalog)

    def _self_part(self):
        # candidate (j, f) seen from cell j itself
        P, R = self.P, self.routes
        absent = (self.copies == 0)[None, :]
        r1 = R[:, 0:1] + P
        r2 = np.where(absent, R[:, 1:2], R[:, 1:2] - P)
        r3 = np.where(absent, R[:, 2:3] - P, R[:, 2:3])
        rho, t = self._terms(np.stack([r1, r2, r3], axis=2), (slice(None), None))
        return self.weights[:, None] * (self.t_sur[:, None] - _surrogate(rho, t))

    def _remote_part(self):
        # every other cell k when f had no copy: route 3 -> route 2 for P[k, f]
        P, R = self.P, self.routes
        r1 = np.broadcast_to(R[:, 0:1], P.shape)
        r2 = R[:, 1:2] + P
        r3 = R[:, 2:3] - P
        rho, t = self._terms(np.stack([r1, r2, r3], axis=2), (slice(None), None))
        part = self.weights[:, None] * (self.t_sur[:, None] - _surrogate(rho, t))
        return np.where((self.copies == 0)[None, :], part, 0.0)

    def gains(self) -> np.ndarray:
        """Surrogate-delay decrease for every (cell, content); ``-inf`` if cached."""
        own = self._self_part()
        remote = self._remote_part()
        out = np.empty_like(own)
        for j in range(own.shape[0]):
            acc = own[j].copy()
            for k in range(own.shape[0]):
                if k != j:
                    acc = acc + remote[k]
            out[j] = acc
        return np.where(self.matrix == 1, -np.inf, out)

    def gain(self, cell: int, content: int) -> float:
        """Single-candidate version of :meth:`gains`, O(K)."""
        if self.matrix[cell, content]:
            raise ValueError(f"element {(cell, content)} is already cached")
        P, R = self.P, self.routes
        p = P[cell, content]
        r = R[cell].copy()
        r[0] += p
        if self.copies[content] == 0:
            r[2] -= p
        else:
            r[1] -= p
        rho, t = self._terms(r, cell)
        acc = self.weights[cell] * (self.t_sur[cell] - _surrogate(rho, t))
        if self.copies[content] == 0:
            for k in range(R.shape[0]):
                if k == cell:
                    continue
                q = P[k, content]
                rk = np.array([R[k, 0], R[k, 1] + q, R[k, 2] - q])
                rho, t = self._terms(rk, k)
                acc = acc + self.weights[k] * (self.t_sur[k] - _surrogate(rho, t))
        return float(acc)

    def add(self, cell: int, content: int):
        if self.matrix[cell, content]:
            raise ValueError(f"element {(cell, content)} is already cached")
        self.matrix[cell, content] = 1
        self._refresh()


def marginal_delay(placement: Placement, catalog: ContentCatalog, config: NetworkConfig,
                   element) -> float:
    """``T(C) - T(C + element)``; surrogate difference if ``T(C)`` is infinite."""
    k, f = element
    return IncrementalDelay(catalog, config, placement).gain(k, f)


def delta_rho_case(placement: Placement, catalog: ContentCatalog, config: NetworkConfig,
                   element, observer: int):
    """Classify how adding ``element`` changes the load of ``observer``.

    Returns ``(label, delta_rho)`` where label is one of ``"X1".."X5"``:

    * X1: element is at the observer, no copy of the content anywhere
    * X2: element is at the observer, some other cell holds the content
    * X3: element elsewhere, observer already holds the content
    * X4: element elsewhere, no copy anywhere
    * X5: element elsewhere, a third cell holds it but not the observer
    """
    placement._check_dims(catalog, config)
    j, f = element
    c = placement.matrix
    if c[j, f]:
        raise ValueError(f"element {element} is already cached")
    lam = config.arrival_rates[observer]
    p = catalog.cell_popularity_normalized[observer, f]
    scale = lam * config.tau1 * p
    anywhere = bool(c[:, f].any())
    if j == observer:
        if not anywhere:
            return "X1", scale * (1.0 - config.k3)
        return "X2", scale * (1.0 - config.k2)
    if c[observer, f]:
        return "X3", 0.0
    if not anywhere:
        return "X4", scale * (config.k2 - config.k3)
    return "X5", 0.0
