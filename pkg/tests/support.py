"""Instance generators and simulator wiring shared by the test modules."""

from __future__ import annotations

import itertools
import random
from collections import defaultdict
from pathlib import Path

from flowdirector.allocator import RuleEdge, TopologyGraph, allocate, allocate_graph, max_lower_bound
from flowdirector.lp import AllocationProblem
from flowdirector.model import Site
from flowdirector.simulator import Scenario, Simulator

# criterion number -> printed PASS/FAIL line, collected for the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, title: str, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title} | {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

FIG1_SITES = [Site("T2_US_UCSD", 400), Site("T2_US_Caltech", 400),
              Site("T1_US_FNAL", 200), Site("T2_US_Nebraska", 100)]
FIG1_RULES = [
    RuleEdge("ucsd-caltech-p5", "T2_US_UCSD", "T2_US_Caltech", 5),
    RuleEdge("ucsd-caltech-p3", "T2_US_UCSD", "T2_US_Caltech", 3),
    RuleEdge("ucsd-fnal-p3", "T2_US_UCSD", "T1_US_FNAL", 3),
    RuleEdge("caltech-fnal-p4", "T2_US_Caltech", "T1_US_FNAL", 4),
    RuleEdge("fnal-nebraska-p2", "T1_US_FNAL", "T2_US_Nebraska", 2),
]


def random_problem(rng: random.Random, g: int = 5, max_sites: int = 4, max_edges: int = 4,
                   lower: str = "fair") -> AllocationProblem:
    """Random incidence LP: capacities multiples of 50 in [50, 400], priorities 1..9."""
    n = rng.randint(2, max_sites)
    pairs = list(itertools.combinations(range(n), 2))
    e = rng.randint(1, min(max_edges, len(pairs)))
    cols = rng.sample(pairs, e)
    A = [[1 if i in col else 0 for col in cols] for i in range(n)]
    b = [50 * rng.randint(1, 8) for _ in range(n)]
    c = [rng.randint(1, 9) for _ in range(e)]
    if lower == "fair":
        l = max_lower_bound(A, b, g)
    elif lower == "zero":
        l = 0
    else:
        l = g * rng.randint(0, max_lower_bound(A, b, g) // g)
    return AllocationProblem(A, b, c, l, g)


def random_topology(rng: random.Random, max_sites: int = 5, max_rules: int = 7):
    n = rng.randint(2, max_sites)
    sites = [Site(f"S{i}", 50 * rng.randint(1, 8)) for i in range(n)]
    rules = []
    for k in range(rng.randint(1, max_rules)):
        a, b = rng.sample(range(n), 2)
        rules.append(RuleEdge(f"r{k}", f"S{a}", f"S{b}", rng.randint(1, 9)))
    return rules, sites


def allocator_violations(rules, sites, g: int) -> list[str]:
    """Names of the allocator properties broken by this instance (empty when all hold)."""
    bad = []
    out = allocate(rules, sites, g)
    by_id = {a.rule_id: a.bandwidth_gbps for a in out}
    cap = {s.name: s.port_capacity for s in sites}
    use = defaultdict(int)
    for r in rules:
        use[r.src] += by_id[r.rule_id]
        use[r.dst] += by_id[r.rule_id]
    if any(use[s] > cap[s] for s in use):
        bad.append("capacity")

    result = allocate_graph(TopologyGraph.build(rules, sites), g)
    for edge, x in zip(result.merged, result.solution.x):
        if sum(by_id[rid] for rid, _ in edge.members) != x:
            bad.append("conservation")
        if any(pa > pb and by_id[ra] < by_id[rb]
               for ra, pa in edge.members for rb, pb in edge.members):
            bad.append("monotonicity")

    scaled = [RuleEdge(r.rule_id, r.src, r.dst, r.priority * 3) for r in rules]
    if allocate(scaled, sites, g) != out:
        bad.append("scaling")
    if allocate(rules, sites, g) != out:
        bad.append("determinism")
    return bad


def scenario(name: str) -> Scenario:
    from flowdirector.config import load_document
    return Scenario.from_dict(load_document(SCENARIOS / name))


def simulator(doc_or_name, tmp_path=None, **kw) -> Simulator:
    sc = scenario(doc_or_name) if isinstance(doc_or_name, str) else Scenario.from_dict(doc_or_name)
    path = None
    if tmp_path is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        path = str(tmp_path / "store.db")
    return Simulator(sc, store_path=path, **kw)


def two_site_doc(events, until=300, **config):
    return {
        "sites": {"SITE_A": {"capacity_gbps": 100, "endpoints": 2, "SITE_B": {"rtt_ms": 20}},
                  "SITE_B": {"capacity_gbps": 100, "endpoints": 2}},
        "config": config, "until": until, "events": events,
    }
