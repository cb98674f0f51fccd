"""Priority-weighted bandwidth allocation over the site/rule topology.

Rules are edges of a multigraph over sites. Parallel edges between the same
pair of sites are merged (priorities summed), the merged graph is turned into
an incidence LP with a fairness lower bound, and each merged edge's bandwidth
is then split back among its rules by largest remainder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from flowdirector.lp import AllocationProblem, AllocationSolution, Infeasible, solve

log = logging.getLogger(__name__)

DEFAULT_GRANULARITY = 5


@dataclass(frozen=True)
class RuleEdge:
    rule_id: str
    src: str
    dst: str
    priority: int


@dataclass(frozen=True)
class TopologyGraph:
    nodes: tuple[tuple[str, int], ...]
    edges: tuple[RuleEdge, ...]

    def __post_init__(self):
        names = {n for n, _ in self.nodes}
        if len(names) != len(self.nodes):
            raise ValueError("duplicate site in topology")
        for e in self.edges:
            if e.src not in names or e.dst not in names:
                raise ValueError(f"rule {e.rule_id} references an unknown site")
            if e.src == e.dst:
                raise ValueError(f"rule {e.rule_id} is not point-to-point")
            if e.priority < 1:
                raise ValueError(f"rule {e.rule_id} has priority < 1")

    @classmethod
    def build(cls, rules: Iterable, sites: Iterable,
              reserved: Optional[Mapping[str, int]] = None) -> TopologyGraph:
        """From TransferRule/Site-like objects; ``reserved`` is subtracted from capacity."""
        reserved = reserved or {}
        nodes = tuple((s.name, max(0, s.port_capacity - reserved.get(s.name, 0))) for s in sites)
        edges = tuple(RuleEdge(r.rule_id, r.src, r.dst, r.priority) for r in rules)
        return cls(nodes, edges)


@dataclass(frozen=True)
class MergedEdge:
    site_pair: tuple[str, str]
    merged_priority: int
    members: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class RuleAllocation:
    rule_id: str
    bandwidth_gbps: int


@dataclass(frozen=True)
class AllocationResult:
    """Everything the pipeline decided, for display and inspection."""

    merged: tuple[MergedEdge, ...]
    problem: AllocationProblem
    solution: AllocationSolution
    allocations: tuple[RuleAllocation, ...]

    @property
    def lower_bound(self) -> int:
        return self.problem.lower_bound

    def by_rule(self) -> dict[str, int]:
        return {a.rule_id: a.bandwidth_gbps for a in self.allocations}


def merge(graph: TopologyGraph) -> tuple[list[MergedEdge], AllocationProblem]:
    """Collapse parallel rules into one edge per unordered site pair.

    Pairs are ordered by the sites' positions in ``graph.nodes``, which makes the
    column order independent of rule arrival order.
    """
    index = {name: i for i, (name, _) in enumerate(graph.nodes)}
    groups: dict[tuple[str, str], list[tuple[str, int]]] = {}
    for e in graph.edges:
        a, b = sorted((e.src, e.dst), key=index.__getitem__)
        groups.setdefault((a, b), []).append((e.rule_id, e.priority))
    pairs = sorted(groups, key=lambda p: (index[p[0]], index[p[1]]))
    merged = [MergedEdge(p, sum(pr for _, pr in groups[p]), tuple(groups[p])) for p in pairs]
    incidence = tuple(
        tuple(int(name in m.site_pair) for m in merged) for name, _ in graph.nodes
    )
    problem = AllocationProblem(
        incidence=incidence,
        capacities=tuple(cap for _, cap in graph.nodes),
        priorities=tuple(m.merged_priority for m in merged),
    )
    return merged, problem


def max_lower_bound(incidence: Sequence[Sequence[int]], capacities: Sequence[int],
                    granularity: int = DEFAULT_GRANULARITY) -> int:
    """Largest multiple of g such that every edge can get it simultaneously."""
    best: Optional[Fraction] = None
    for row, cap in zip(incidence, capacities):
        degree = sum(row)
        if degree:
            share = Fraction(cap, degree)
            best = share if best is None else min(best, share)
    if best is None or best <= 0:
        return 0
    return granularity * int(best // granularity)


def apportion(total: int, members: Sequence[tuple[str, int]],
              granularity: int = DEFAULT_GRANULARITY) -> list[RuleAllocation]:
    """Split ``total`` among members in proportion to priority, in units of g.

    Largest remainder: each member gets the floor of its quota and leftover
    units go to the largest fractional parts (ties: higher priority, then
    rule id). If that leaves a member with nothing while there are enough
    units to go round, it takes one unit from the current largest holder.
    """
    if not members:
        return []
    if total % granularity:
        raise ValueError(f"total {total} is not a multiple of {granularity}")
    units = total // granularity
    weight = sum(p for _, p in members)
    quotas = [Fraction(units * p, weight) for _, p in members]
    count = [int(q) for q in quotas]
    left = units - sum(count)
    order = sorted(range(len(members)),
                   key=lambda i: (-(quotas[i] - int(quotas[i])), -members[i][1], members[i][0]))
    for i in order[:left]:
        count[i] += 1
    if units >= len(members):
        for i in sorted(range(len(members)), key=lambda i: (-members[i][1], members[i][0])):
            if count[i] == 0:
                donor = max(range(len(members)),
                            key=lambda j: (count[j], -members[j][1], members[j][0]))
                count[donor] -= 1
                count[i] = 1
    return [RuleAllocation(rid, n * granularity) for (rid, _), n in zip(members, count)]


def allocate_graph(graph: TopologyGraph, granularity: int = DEFAULT_GRANULARITY,
                   lower_bound: Optional[int] = None) -> AllocationResult:
    """Merge, solve at the fairness bound (relaxing by g until feasible), apportion."""
    merged, skeleton = merge(graph)
    if lower_bound is None:
        lb = max_lower_bound(skeleton.incidence, skeleton.capacities, granularity)
    else:
        lb = lower_bound
    while True:
        problem = AllocationProblem(skeleton.incidence, skeleton.capacities, skeleton.priorities,
                                    lower_bound=lb, granularity=granularity)
        try:
            solution = solve(problem)
            break
        except Infeasible:
            if lb == 0:
                raise
            log.info("lower bound %d infeasible, relaxing", lb)
            lb = max(0, lb - granularity)

    per_rule: dict[str, int] = {}
    for edge, x in zip(merged, solution.x):
        for a in apportion(x, edge.members, granularity):
            per_rule[a.rule_id] = a.bandwidth_gbps
    allocations = tuple(RuleAllocation(e.rule_id, per_rule[e.rule_id]) for e in graph.edges)
    return AllocationResult(tuple(merged), problem, solution, allocations)


def allocate(rules: Sequence, sites: Sequence, granularity: int = DEFAULT_GRANULARITY,
             reserved: Optional[Mapping[str, int]] = None) -> list[RuleAllocation]:
    """Bandwidth per rule, in the order the rules were given."""
    if not rules:
        return []
    graph = TopologyGraph.build(rules, sites, reserved)
    return list(allocate_graph(graph, granularity).allocations)
