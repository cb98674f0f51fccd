"""Command-line entry points: serve, allocate, simulate, status.

Exit status is 0 on success, 1 on a domain error (for example an infeasible
topology or a failed simulator assertion) and 2 on bad usage or malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from typing import Any, Optional, Sequence

from flowdirector.allocator import RuleEdge, TopologyGraph, allocate_graph
from flowdirector.config import ConfigError, config_from_dict, load_config, load_document
from flowdirector.lp import Infeasible

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class InputError(Exception):
    """Malformed input file; message carries the offending field."""


def load_topology(path: str) -> tuple[TopologyGraph, Optional[int]]:
    try:
        doc = load_document(path)
    except ConfigError as exc:
        raise InputError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a mapping with 'sites' and 'rules'")
    unknown = set(doc) - {"sites", "rules", "granularity"}
    if unknown:
        raise InputError(f"{path}: {sorted(unknown)[0]}: unknown key")
    try:
        sites = config_from_dict({"sites": doc.get("sites")}).sites
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from exc
    rules = doc.get("rules") or []
    if not isinstance(rules, list):
        raise InputError(f"{path}: rules: expected a list")
    edges = []
    for i, r in enumerate(rules):
        where = f"{path}: rules[{i}]"
        if not isinstance(r, dict):
            raise InputError(f"{where}: expected a mapping")
        for key in ("rule", "src", "dst", "priority"):
            if key not in r:
                raise InputError(f"{where}.{key}: required")
        if not isinstance(r["priority"], int) or isinstance(r["priority"], bool):
            raise InputError(f"{where}.priority: expected an integer")
        edges.append(RuleEdge(str(r["rule"]), str(r["src"]), str(r["dst"]), r["priority"]))
    g = doc.get("granularity")
    if g is not None and (not isinstance(g, int) or g < 1):
        raise InputError(f"{path}: granularity: expected a positive integer")
    try:
        graph = TopologyGraph(tuple((s.name, s.capacity_gbps) for s in sites), tuple(edges))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return graph, g


def cmd_allocate(args: argparse.Namespace) -> int:
    graph, file_g = load_topology(args.topology)
    g = args.granularity or file_g or 5
    try:
        result = allocate_graph(graph, g)
    except Infeasible as exc:
        print(f"error: infeasible topology: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    width = max([len("rule_id")] + [len(a.rule_id) for a in result.allocations])
    print(f"{'rule_id':<{width}}  bandwidth_gbps")
    for a in result.allocations:
        print(f"{a.rule_id:<{width}}  {a.bandwidth_gbps}")
    doc = {
        "granularity": g,
        "lower_bound": result.lower_bound,
        "merged": [{"sites": list(m.site_pair), "priority": m.merged_priority,
                    "rules": [rid for rid, _ in m.members]} for m in result.merged],
        "c": list(result.problem.priorities),
        "x": list(result.solution.x),
        "objective": result.solution.objective,
        "allocations": {a.rule_id: a.bandwidth_gbps for a in result.allocations},
    }
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from flowdirector.simulator import Scenario, ScenarioInvalid, Simulator

    try:
        scenario = Scenario.from_dict(load_document(args.scenario))
    except (ConfigError, ScenarioInvalid) as exc:
        raise InputError(f"{args.scenario}: {exc}") from exc
    with Simulator(scenario, seed=args.seed) as sim:
        result = sim.run(args.until)
        for line in result.log:
            print(line)
        print("--")
        for name, ok in result.assertions.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        for name, n in result.counters.items():
            print(f"{name}={n}")
        for rid, t in result.completion_times.items():
            print(f"completed {rid} at {t:g}s")
        if args.json:
            with open(args.json, "w") as fh:
                json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
        for v in sim.violations:
            print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_DOMAIN


def cmd_status(args: argparse.Namespace) -> int:
    import httpx

    try:
        resp = httpx.get(args.url.rstrip("/") + "/api/v1/status", timeout=10)
        resp.raise_for_status()
        doc = resp.json()
    except (httpx.HTTPError, ValueError) as exc:
        print(f"error: cannot read status from {args.url}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(render_status(doc))
    return EXIT_OK


def render_status(doc: dict[str, Any]) -> str:
    lines = ["site  capacity_gbps  allocated_gbps  free_endpoints"]
    for s in doc.get("sites", []):
        lines.append(f"{s['site']}  {s['capacity_gbps']}  {s['allocated_gbps']}  "
                     f"{len(s['free_endpoints'])}")
    lines.append("")
    lines.append("rule_id  src  dst  priority  state  allocated_gbps  circuit")
    for r in doc.get("rules", []):
        lines.append(f"{r['rule_id']}  {r['src']}  {r['dst']}  {r['priority']}  {r['state']}  "
                     f"{r['allocated_gbps']}  {r['circuit_status'] or '-'}")
    return "\n".join(lines)


def cmd_serve(args: argparse.Namespace) -> int:
    from flowdirector.service import Service

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        raise InputError(str(exc)) from exc
    service = Service(config)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    service.start()
    logging.getLogger(__name__).info("listening on %s", service.server.url)
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowdirector", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run daemons and the HTTP API")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_serve)

    a = sub.add_parser("allocate", help="solve one topology offline")
    a.add_argument("topology")
    a.add_argument("--granularity", type=int)
    a.set_defaults(fn=cmd_allocate)

    m = sub.add_parser("simulate", help="run a scenario on the virtual clock")
    m.add_argument("scenario")
    m.add_argument("--seed", type=int)
    m.add_argument("--until", type=float, help="override the scenario end time (s)")
    m.add_argument("--json", metavar="PATH", help="also write the result document here")
    m.set_defaults(fn=cmd_simulate)

    st = sub.add_parser("status", help="print a running service's status")
    st.add_argument("--url", default="http://127.0.0.1:8080")
    st.set_defaults(fn=cmd_status)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "granularity", None) is not None and args.granularity < 1:
        parser.error("--granularity must be >= 1")
    try:
        return args.fn(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
