import random
import time

import pytest
from hypothesis import given, strategies as st

from flowdirector.allocator import (
    RuleEdge,
    TopologyGraph,
    allocate,
    allocate_graph,
    apportion,
    max_lower_bound,
    merge,
)
from flowdirector.model import Site
from support import FIG1_RULES, FIG1_SITES, allocator_violations, random_topology


def test_fig1_pipeline():
    t0 = time.perf_counter()
    result = allocate_graph(TopologyGraph.build(FIG1_RULES, FIG1_SITES), 5)
    assert time.perf_counter() - t0 < 1
    assert result.problem.priorities == (8, 3, 4, 2)
    assert result.lower_bound == 65
    assert result.solution.x == (335, 65, 65, 70)
    assert [a.bandwidth_gbps for a in result.allocations] == [210, 125, 65, 65, 70]


def test_merge_column_order_ignores_rule_order():
    a, _ = merge(TopologyGraph.build(FIG1_RULES, FIG1_SITES))
    b, _ = merge(TopologyGraph.build(list(reversed(FIG1_RULES)), FIG1_SITES))
    assert [m.site_pair for m in a] == [m.site_pair for m in b]


def test_merge_treats_direction_as_irrelevant():
    rules = [RuleEdge("x", "A", "B", 2), RuleEdge("y", "B", "A", 3)]
    merged, problem = merge(TopologyGraph.build(rules, [Site("A", 100), Site("B", 100)]))
    assert len(merged) == 1 and problem.priorities == (5,)


def test_max_lower_bound_fig1():
    _, p = merge(TopologyGraph.build(FIG1_RULES, FIG1_SITES))
    assert max_lower_bound(p.incidence, p.capacities, 5) == 65
    assert max_lower_bound(p.incidence, p.capacities, 1) == 66


def test_apportion_worked_split():
    out = apportion(335, [("p5", 5), ("p3", 3)], 5)
    assert [a.bandwidth_gbps for a in out] == [210, 125]


def test_apportion_tie_goes_to_higher_priority_then_id():
    assert [a.bandwidth_gbps for a in apportion(15, [("a", 1), ("b", 1)], 5)] == [10, 5]
    assert [a.bandwidth_gbps for a in apportion(15, [("b", 1), ("a", 1)], 5)] == [5, 10]
    assert [a.bandwidth_gbps for a in apportion(5, [("lo", 1), ("hi", 2)], 5)] == [0, 5]


def test_apportion_no_member_starves_when_units_suffice():
    out = apportion(15, [("big", 100), ("s1", 1), ("s2", 1)], 5)
    assert [a.bandwidth_gbps for a in out] == [5, 5, 5]


def test_apportion_rejects_off_grid_total():
    with pytest.raises(ValueError):
        apportion(12, [("a", 1)], 5)


@given(st.integers(0, 200), st.lists(st.integers(1, 9), min_size=1, max_size=6), st.integers(1, 10))
def test_apportion_properties(units, priorities, g):
    members = [(f"r{i}", p) for i, p in enumerate(priorities)]
    out = apportion(units * g, members, g)
    counts = [a.bandwidth_gbps // g for a in out]
    assert sum(counts) == units
    assert all(a.bandwidth_gbps % g == 0 for a in out)
    for i, pi in enumerate(priorities):
        for j, pj in enumerate(priorities):
            if pi > pj:
                assert counts[i] >= counts[j]
    if units >= len(members):
        assert min(counts) >= 1
    else:
        # each member stays within one unit of its exact quota
        w = sum(priorities)
        for c, p in zip(counts, priorities):
            assert abs(c - units * p / w) < 1 + 1e-9


def test_empty_rules():
    assert allocate([], FIG1_SITES) == []


def test_reserved_capacity_is_subtracted():
    rules = [RuleEdge("a", "A", "B", 1)]
    sites = [Site("A", 100), Site("B", 100)]
    assert allocate(rules, sites, 5, reserved={"A": 5})[0].bandwidth_gbps == 95


def test_unknown_site_rejected():
    with pytest.raises(ValueError):
        allocate([RuleEdge("a", "A", "Z", 1)], [Site("A", 100), Site("B", 100)])


def check_invariants(rules, sites, g):
    assert allocator_violations(rules, sites, g) == []


@pytest.mark.parametrize("seed", range(50))
def test_allocator_invariants_seeded(seed):
    rng = random.Random(seed)
    rules, sites = random_topology(rng)
    check_invariants(rules, sites, rng.choice([1, 5, 10]))


@given(st.integers(0, 10**9))
def test_allocator_invariants_property(seed):
    rng = random.Random(seed)
    rules, sites = random_topology(rng)
    check_invariants(rules, sites, 5)
