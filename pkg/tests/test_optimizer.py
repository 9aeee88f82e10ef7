import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopcache import (MatroidSpec, NetworkConfig, Placement, StrategyResult, brute_force_optimal,
                       build_catalog, cgc, check_guarantee, hgc, lgc, matroid_feasible, mpc,
                       system_delay)
from coopcache.optimizer import InstanceTooLarge, cardinality_limits, run_strategy

from .conftest import K2, K3, LAM, TAU1, make_catalog


@pytest.fixture
def knapsack_cell():
    cat = make_catalog([[0.5, 0.3, 0.2]], sizes=[6.0, 5.0, 4.0], mean_size=5.0)
    return cat, NetworkConfig([10.0], [LAM], TAU1, K2, K3)


def _enumerate_best_hit(popularity, sizes, capacity):
    """Brute-force knapsack oracle: subset with the largest total popularity."""
    best, best_set = -1.0, None
    for r in range(len(sizes) + 1):
        for subset in itertools.combinations(range(len(sizes)), r):
            if sum(sizes[i] for i in subset) <= capacity:
                value = sum(popularity[i] for i in subset)
                if value > best + 1e-15:
                    best, best_set = value, set(subset)
    return best, best_set


def test_mpc_admit_or_skip(knapsack_cell):
    cat, net = knapsack_cell
    assert mpc(cat, net).placement.matrix.tolist() == [[1, 0, 1]]


def test_lgc_example(knapsack_cell):
    cat, net = knapsack_cell
    res = lgc(cat, net)
    assert res.placement.matrix.tolist() == [[1, 0, 1]]
    hit, best = _enumerate_best_hit([0.5, 0.3, 0.2], [6, 5, 4], 10)
    assert best == {0, 2} and hit == pytest.approx(0.7)
    rep = system_delay(res.placement, cat, net)
    assert rep.per_cell_route_split[0].r1_prob == pytest.approx(0.7)


@pytest.mark.parametrize("strategy", [mpc, lgc, hgc, cgc])
def test_everything_fits(strategy, table2_network):
    cat = build_catalog(8, 2, 0.5, 5e6, heterogeneity=0.5, seed=1)
    res = strategy(cat, table2_network(2, capacity=float(cat.sizes.sum()) + 1))
    assert res.placement.matrix.all()


@pytest.mark.parametrize("strategy", [mpc, lgc, hgc, cgc])
def test_zero_capacity(strategy, table2_network):
    cat = build_catalog(8, 2, 0.5, 5e6, seed=1)
    res = strategy(cat, table2_network(2, capacity=0.0))
    assert not res.placement.matrix.any()
    assert res.objective_trace == []


def test_lgc_equals_mpc_for_uniform_sizes(table2_network):
    cat = build_catalog(40, 3, 0.8, 5e6, heterogeneity=1.0, seed=5)
    cat = type(cat)(np.full(40, 5e6), 5e6, cat.global_popularity, cat.cell_popularity)
    net = table2_network(3, capacity=5e6 * 7)
    np.testing.assert_array_equal(lgc(cat, net).placement.matrix, mpc(cat, net).placement.matrix)


def test_cgc_tie_break_prefers_lowest_cell_then_content(table2_network):
    cat = make_catalog([[0.25, 0.25, 0.25, 0.25]] * 2)
    res = cgc(cat, table2_network(2, capacity=1.0), "cardinality")
    # first pick must be (cell 0, content 0) among the 8 equal candidates
    assert res.placement.matrix[0, 0] == 1
    first = Placement.from_elements([(0, 0)], cat)
    assert res.objective_trace[0] == pytest.approx(
        system_delay(first, cat, table2_network(2)).system_delay)


def test_cgc_cardinality_half_guarantee_small():
    cat = build_catalog(3, 2, 0.9, 1.0, heterogeneity=1.0, seed=8)
    net = NetworkConfig([1.0, 1.0], [0.02, 0.03], 1.0, 3.0, 20.0)
    greedy = cgc(cat, net, "cardinality")
    best = brute_force_optimal(cat, net, "cardinality")
    empty = system_delay(Placement.empty(cat), cat, net).system_delay
    assert (empty - greedy.system_delay) >= 0.5 * (empty - best.system_delay) - 1e-12
    assert greedy.placement.matrix.sum(axis=1).tolist() == [1, 1]


def test_cgc_size_mode_respects_storage(table2_network):
    cat = build_catalog(30, 3, 0.6, 5e6, heterogeneity=1.0, seed=2)
    net = table2_network(3, capacity=2.2e7)
    res = cgc(cat, net, "size")
    assert res.placement.is_feasible(cat, net)
    assert res.constraint_mode == "size"


def test_cardinality_limits():
    cat = make_catalog([[0.5, 0.5]], mean_size=5e6)
    net = NetworkConfig([1e7], [0.5], TAU1, K2, K3)
    assert cardinality_limits(cat, net) == (2,)


@pytest.mark.parametrize("seed", range(5))
def test_hgc_trace_and_mpc_dominance(seed):
    cat = build_catalog(4, 2, 0.8, 5e6, heterogeneity=1.0, seed=seed)
    net = NetworkConfig.uniform(2, 1e7, LAM, TAU1, K2, K3)
    res = hgc(cat, net)
    assert np.all(np.diff(res.objective_trace) <= 1e-15)
    assert res.placement.is_feasible(cat, net)
    assert res.system_delay <= mpc(cat, net).system_delay + 1e-12


def test_hgc_matches_lgc_when_routes_two_and_three_coincide():
    cat = build_catalog(60, 3, 0.7, 5e6, heterogeneity=1.0, seed=12)
    net = NetworkConfig.uniform(3, 4e7, LAM, TAU1, 20.0, 20.0)
    h, l = hgc(cat, net), lgc(cat, net)
    assert h.system_delay == pytest.approx(l.system_delay, abs=1e-9)
    np.testing.assert_array_equal(h.placement.matrix, l.placement.matrix)


def test_hgc_lgc_collapse_is_not_universal():
    # one cell, heavy load: the delay-per-bit ranking departs from the
    # popularity-per-bit ranking because delay is nonlinear in the hit ratio
    cat = make_catalog([[0.6, 0.055, 0.345]], sizes=[10.0, 1.0, 1000.0], mean_size=10.0)
    net = NetworkConfig([10.0], [5.0], 0.01, 20.0, 20.0)
    assert lgc(cat, net).placement.matrix.tolist() == [[1, 0, 0]]
    assert hgc(cat, net).placement.matrix.tolist() == [[0, 1, 0]]


def test_brute_force_knapsack_example():
    cat = make_catalog([[0.5, 0.3, 0.2]], sizes=[6.0, 5.0, 4.0], mean_size=5.0)
    net = NetworkConfig([10.0], [LAM], TAU1, 20.0, 20.0)
    assert brute_force_optimal(cat, net).placement.matrix.tolist() == [[1, 0, 1]]


def test_brute_force_zero_capacity(table2_network):
    cat = build_catalog(4, 2, 0.5, 5e6, seed=0)
    res = brute_force_optimal(cat, table2_network(2, capacity=0.0))
    assert not res.placement.matrix.any()
    assert res.system_delay == pytest.approx(2.0)


def test_brute_force_prefers_cooperation():
    cat = make_catalog([[0.6, 0.4], [0.6, 0.4]])
    net = NetworkConfig([1.0, 1.0], [LAM, LAM], TAU1, 1.5, 20.0)
    res = brute_force_optimal(cat, net, "cardinality")
    m = res.placement.matrix
    assert m.sum(axis=1).tolist() == [1, 1]
    assert m[0].tolist() != m[1].tolist()
    # lexicographically smallest of the two mirror optima
    assert m.tolist() == [[0, 1], [1, 0]]


def test_brute_force_rejects_large_instances(table2_network):
    cat = build_catalog(13, 2, 0.5, 5e6, seed=0)
    with pytest.raises(InstanceTooLarge, match="instance too large"):
        brute_force_optimal(cat, table2_network(2))


def test_brute_force_matches_naive_enumeration():
    cat = build_catalog(4, 2, 0.6, 5e6, heterogeneity=1.0, seed=21)
    net = NetworkConfig.uniform(2, 1.1e7, LAM, TAU1, K2, K3)
    best = math.inf
    for bits in itertools.product((0, 1), repeat=8):
        pl = Placement.from_matrix(np.array(bits).reshape(2, 4), cat)
        if pl.is_feasible(cat, net):
            best = min(best, system_delay(pl, cat, net).system_delay)
    assert brute_force_optimal(cat, net).system_delay == pytest.approx(best, rel=1e-12)


def test_lgc_optimal_when_greedy_fill_is_exact():
    rng = np.random.default_rng(3)
    for trial in range(30):
        F = int(rng.integers(3, 9))
        cat = build_catalog(F, 1, float(rng.uniform(0, 1.5)), 1.0, seed=trial)
        ratio = cat.cell_popularity_normalized[0] / cat.sizes
        order = np.argsort(-ratio, kind="stable")
        m = int(rng.integers(1, F))
        # sequential sum, matching the order the greedy accumulates used bits
        capacity = float(np.cumsum(cat.sizes[order])[m - 1])
        net = NetworkConfig([capacity], [LAM], TAU1, K3, K3)
        assert lgc(cat, net).system_delay == pytest.approx(
            brute_force_optimal(cat, net).system_delay, rel=1e-12)


def test_check_guarantee_conventions():
    cat = build_catalog(3, 2, 0.5, 1.0, seed=0)
    net = NetworkConfig([0.0, 0.0], [0.02, 0.02], 1.0, 2.0, 10.0)
    assert check_guarantee(cat, net).ratio == 1.0
    net = NetworkConfig([3.0, 3.0], [0.02, 0.02], 1.0, 2.0, 10.0)
    report = check_guarantee(cat, net)
    assert report.ratio == pytest.approx(1.0) and report.holds


def test_matroid_feasible_examples():
    assert matroid_feasible(set(), MatroidSpec(2, (1, 1)))
    assert not matroid_feasible({(0, 0), (0, 1)}, MatroidSpec(2, (1, 1)))
    assert matroid_feasible({(0, 0), (0, 1), (1, 0)}, MatroidSpec(2, (2, 1)))
    with pytest.raises(IndexError):
        matroid_feasible({(2, 0)}, MatroidSpec(2, (1, 1)))


@given(st.sets(st.tuples(st.integers(0, 2), st.integers(0, 3))),
       st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)), st.data())
def test_matroid_downward_closed(selection, limits, data):
    spec = MatroidSpec(4, limits)
    if matroid_feasible(selection, spec):
        subset = data.draw(st.sets(st.sampled_from(sorted(selection))) if selection
                           else st.just(set()))
        assert matroid_feasible(subset, spec)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.floats(0.05, 0.8))
def test_strategies_feasible_and_traces_nonincreasing(seed, K, ratio):
    cat = build_catalog(25, K, 0.8, 5e6, heterogeneity=1.0, seed=seed)
    net = NetworkConfig.uniform(K, ratio * 5e6 * 25, LAM, TAU1, K2, K3)
    for name in ("mpc", "lgc", "cgc", "hgc"):
        res = run_strategy(name, cat, net)
        assert res.placement.is_feasible(cat, net)
        assert np.all(np.diff(res.objective_trace) <= 1e-12)
    res = cgc(cat, net, "cardinality")
    limits = cardinality_limits(cat, net)
    assert matroid_feasible(res.placement.elements(), MatroidSpec(25, limits))


def test_strategies_deterministic(table2_network):
    cat = build_catalog(50, 3, 0.5, 5e6, heterogeneity=1.0, seed=9)
    net = table2_network(3, capacity=5e7)
    for fn in (mpc, lgc, cgc, hgc):
        a, b = fn(cat, net), fn(cat, net)
        np.testing.assert_array_equal(a.placement.matrix, b.placement.matrix)
        assert a.objective_trace == b.objective_trace


def test_placement_json_roundtrip(table2_network):
    cat = build_catalog(20, 2, 0.5, 5e6, seed=1)
    res = hgc(cat, table2_network(2, capacity=2e7))
    data = res.to_dict()
    assert set(data) == {"strategy", "constraint_mode", "matrix", "used_bits", "system_delay_s"}
    back = StrategyResult.loads(res.dumps(), cat)
    np.testing.assert_array_equal(back.placement.matrix, res.placement.matrix)
    np.testing.assert_array_equal(back.placement.used_bits, res.placement.used_bits)
    assert back.system_delay == res.system_delay and back.strategy == "hgc"


def test_unknown_strategy():
    cat = build_catalog(5, 1, 0.5, 1.0)
    with pytest.raises(ValueError):
        run_strategy("nope", cat, NetworkConfig([1.0], [0.1], 1.0, 2.0, 3.0))
