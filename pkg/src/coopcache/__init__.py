"""Delay analysis, cache placement and simulation for cooperative cell caching."""

from .analytic import (
    DelayReport,
    IncrementalDelay,
    Placement,
    RouteSplit,
    cell_delay,
    delta_rho_case,
    marginal_delay,
    route_split,
    system_delay,
    traffic_intensity,
)
from .catalog import (
    ContentCatalog,
    NetworkConfig,
    build_catalog,
    normalize_cell_popularity,
    sample_sizes,
    split_popularity,
    zipf_popularity,
)
from .optimizer import (
    MatroidSpec,
    StrategyResult,
    brute_force_optimal,
    cgc,
    check_guarantee,
    hgc,
    lgc,
    matroid_feasible,
    mpc,
)
from .simulator import SimConfig, SimStats, UnstableSystemError, route_of_request, simulate

__version__ = "0.1.0"
