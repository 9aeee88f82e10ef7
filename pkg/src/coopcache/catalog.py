"""Content catalog and network parameters.

A catalog couples a Zipf-distributed global popularity with a per-cell
decomposition of that popularity and a fixed vector of content sizes drawn
from an exponential distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ContentCatalog",
    "NetworkConfig",
    "zipf_popularity",
    "split_popularity",
    "normalize_cell_popularity",
    "sample_sizes",
    "build_catalog",
]

_TOL = 1e-9


def zipf_popularity(num_contents: int, gamma: float) -> np.ndarray:
    """Zipf popularity over ranks ``1..num_contents``.

    Content index ``f`` (0-based) has rank ``f + 1``, so the returned vector
    is sorted by descending popularity.
    """
    if int(num_contents) != num_contents or num_contents < 1:
        raise ValueError(f"num_contents must be a positive integer, got {num_contents!r}")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma!r}")
    ranks = np.arange(1, int(num_contents) + 1, dtype=np.float64)
    weights = ranks ** (-float(gamma))
    return weights / weights.sum()


def split_popularity(global_popularity, num_cells: int, heterogeneity: float, seed) -> np.ndarray:
    """Decompose global popularity into a K x F per-cell popularity matrix.

    Column ``f`` of the result sums to ``global_popularity[f]``. With
    ``heterogeneity == 0`` every cell gets an equal share; otherwise each
    content's mass is split by a symmetric Dirichlet weight vector with
    concentration ``1 / heterogeneity``.
    """
    p = np.asarray(global_popularity, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("global_popularity must be a nonempty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > _TOL:
        raise ValueError("global_popularity must be a probability vector")
    if num_cells < 1:
        raise ValueError(f"num_cells must be positive, got {num_cells!r}")
    if heterogeneity < 0:
        raise ValueError(f"heterogeneity must be nonnegative, got {heterogeneity!r}")
    concentration = 1.0 / heterogeneity if heterogeneity > 0 else math.inf
    if num_cells == 1 or not math.isfinite(concentration):
        return np.tile(p / num_cells, (num_cells, 1))
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.full(num_cells, concentration), size=p.size)
    # renormalize rows so tiny-alpha draws stay on the simplex
    weights /= weights.sum(axis=1, keepdims=True)
    return (weights * p[:, None]).T.copy()


def normalize_cell_popularity(cell_popularity) -> np.ndarray:
    """Scale each row to sum to one; a row with no demand is rejected."""
    P = np.asarray(cell_popularity, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("cell_popularity must be a K x F matrix")
    totals = P.sum(axis=1)
    bad = np.flatnonzero(~(totals > 0))
    if bad.size:
        raise ValueError(f"cell {int(bad[0])} has zero total demand")
    return P / totals[:, None]


def _exponential(rng: np.random.Generator, mean: float, n: int) -> np.ndarray:
    # inverse transform on (0, 1]; u == 1 would give an exact zero, so redraw it
    u = 1.0 - rng.random(n)
    while True:
        ones = u == 1.0
        if not ones.any():
            break
        u[ones] = 1.0 - rng.random(int(ones.sum()))
    return -mean * np.log(u)


def sample_sizes(num_contents: int, mean_size: float, seed) -> np.ndarray:
    """Draw ``num_contents`` exponential sizes (bits) with the given mean."""
    if num_contents < 1:
        raise ValueError(f"num_contents must be positive, got {num_contents!r}")
    if not mean_size > 0:
        raise ValueError(f"mean_size must be positive, got {mean_size!r}")
    return _exponential(np.random.default_rng(seed), float(mean_size), int(num_contents))


@dataclass(frozen=True)
class ContentCatalog:
    """Per-content sizes and per-cell popularity.

    Attributes
    ----------
    sizes : ndarray, shape (F,)
        Content sizes in bits.
    mean_size : float
        Nominal mean content size in bits (the exponential mean, not the
        sample mean of ``sizes``).
    global_popularity : ndarray, shape (F,)
        Network-wide request probability per content.
    cell_popularity : ndarray, shape (K, F)
        Unnormalized per-cell popularity; columns sum to ``global_popularity``.
    gamma : float
        Zipf exponent the popularity was generated with (informational).
    """

    sizes: np.ndarray
    mean_size: float
    global_popularity: np.ndarray
    cell_popularity: np.ndarray
    gamma: float = float("nan")
    cell_popularity_normalized: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = np.array(self.sizes, dtype=np.float64)
        p = np.array(self.global_popularity, dtype=np.float64)
        P = np.array(self.cell_popularity, dtype=np.float64)
        if sizes.ndim != 1 or sizes.size == 0:
            raise ValueError("sizes must be a nonempty vector")
        if np.any(~(sizes > 0)):
            raise ValueError("all content sizes must be strictly positive")
        if not self.mean_size > 0:
            raise ValueError("mean_size must be positive")
        if p.shape != sizes.shape:
            raise ValueError("global_popularity and sizes lengths differ")
        if abs(p.sum() - 1.0) > _TOL or np.any(p < 0):
            raise ValueError("global_popularity must sum to 1")
        if P.ndim != 2 or P.shape[1] != sizes.size:
            raise ValueError("cell_popularity must be K x F")
        if np.any(P < 0):
            raise ValueError("cell_popularity must be nonnegative")
        if np.max(np.abs(P.sum(axis=0) - p)) > _TOL:
            raise ValueError("cell_popularity columns must sum to global_popularity")
        for name, arr in (("sizes", sizes), ("global_popularity", p), ("cell_popularity", P)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "mean_size", float(self.mean_size))
        norm = normalize_cell_popularity(P)
        norm.setflags(write=False)
        object.__setattr__(self, "cell_popularity_normalized", norm)

    @property
    def num_contents(self) -> int:
        return self.sizes.size

    @property
    def num_cells(self) -> int:
        return self.cell_popularity.shape[0]

    def to_dict(self) -> dict:
        return {
            "F": self.num_contents,
            "mean_size_bits": self.mean_size,
            "gamma": None if np.isnan(self.gamma) else self.gamma,
            "sizes": self.sizes.tolist(),
            "global_popularity": self.global_popularity.tolist(),
            "cell_popularity": self.cell_popularity.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContentCatalog":
        sizes = data["sizes"]
        if int(data["F"]) != len(sizes):
            raise ValueError(f"F={data['F']} disagrees with {len(sizes)} sizes")
        gamma = data.get("gamma")
        return cls(
            sizes=sizes,
            mean_size=data["mean_size_bits"],
            global_popularity=data["global_popularity"],
            cell_popularity=data["cell_popularity"],
            gamma=float("nan") if gamma is None else float(gamma),
        )

    def dumps(self) -> str:
        # json emits repr() floats, i.e. 17 significant digits
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "ContentCatalog":
        return cls.from_dict(json.loads(text))


def build_catalog(num_contents: int, num_cells: int, gamma: float, mean_size: float,
                  heterogeneity: float = 0.0, seed: int = 0) -> ContentCatalog:
    """Generate a full catalog; sizes and the demand split use independent streams."""
    size_seed, split_seed = np.random.SeedSequence(seed).spawn(2)
    p = zipf_popularity(num_contents, gamma)
    return ContentCatalog(
        sizes=sample_sizes(num_contents, mean_size, size_seed),
        mean_size=mean_size,
        global_popularity=p,
        cell_popularity=split_popularity(p, num_cells, heterogeneity, split_seed),
        gamma=gamma,
    )


@dataclass(frozen=True)
class NetworkConfig:
    """Cells, capacities, arrival rates and route service-time ratios.

    ``tau1`` is the mean route-1 service time ``mean_size / r1``; routes 2
    and 3 take ``k2 * tau1`` and ``k3 * tau1`` on average.
    """

    capacities: np.ndarray
    arrival_rates: np.ndarray
    tau1: float
    k2: float
    k3: float

    def __post_init__(self):
        caps = np.array(self.capacities, dtype=np.float64).reshape(-1)
        lam = np.array(self.arrival_rates, dtype=np.float64).reshape(-1)
        if caps.size == 0 or caps.shape != lam.shape:
            raise ValueError("capacities and arrival_rates must be nonempty and equal length")
        if np.any(caps < 0):
            raise ValueError("capacities must be nonnegative")
        if np.any(~(lam > 0)):
            raise ValueError("arrival rates must be strictly positive")
        if not self.tau1 > 0:
            raise ValueError("tau1 must be positive")
        if not 1.0 <= self.k2 <= self.k3:
            raise ValueError(f"need 1 <= k2 <= k3, got k2={self.k2}, k3={self.k3}")
        caps.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "arrival_rates", lam)
        for name in ("tau1", "k2", "k3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def uniform(cls, num_cells: int, capacity: float, arrival_rate: float, tau1: float,
                k2: float, k3: float) -> "NetworkConfig":
        return cls(np.full(num_cells, float(capacity)), np.full(num_cells, float(arrival_rate)),
                   tau1, k2, k3)

    @property
    def num_cells(self) -> int:
        return self.capacities.size

    @property
    def total_rate(self) -> float:
        return float(self.arrival_rates.sum())

    @property
    def route_ratios(self) -> np.ndarray:
        return np.array([1.0, self.k2, self.k3])

    @property
    def service_rates(self) -> np.ndarray:
        """Per-route service rates ``1 / tau_i``."""
        return 1.0 / (self.tau1 * self.route_ratios)

    def with_rates(self, arrival_rates) -> "NetworkConfig":
        return NetworkConfig(self.capacities, arrival_rates, self.tau1, self.k2, self.k3)
