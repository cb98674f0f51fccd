#!/usr/bin/env python3
"""Provider calls and completion time for a follow-up rule as its arrival gap varies.

Rule A moves 1 TB between two sites; rule B asks for the same pair some
seconds after A finishes. Prints one row per (gap, window) combination.
"""

import argparse
import logging
import sys

from flowdirector.simulator import Scenario, Simulator

SITES = {"SITE_A": {"capacity_gbps": 100, "endpoints": 1, "SITE_B": {"rtt_ms": 20}},
         "SITE_B": {"capacity_gbps": 100, "endpoints": 1}}


def _doc(window: int, provision_delay: float, b_at, until: float) -> dict:
    events = [{"t": 0, "kind": "ADD_RULE", "rule": "A", "src": "SITE_A", "dst": "SITE_B",
               "priority": 1, "bytes": 10**12}]
    if b_at is not None:
        events.append({"t": b_at, "kind": "ADD_RULE", "rule": "B", "src": "SITE_A",
                       "dst": "SITE_B", "priority": 1, "bytes": 10**12})
    return {"sites": SITES,
            "config": {"orchestrator": {"reuse_window_s": window},
                       "mock": {"provision_delay": provision_delay}},
            "until": until, "events": events}


def a_done(provision_delay: float) -> int:
    with Simulator(Scenario.from_dict(_doc(0, provision_delay, None, 600))) as sim:
        return int(sim.run().completion_times["A"])


def run(gap: int, window: int, provision_delay: float, done: int) -> dict:
    b_at = done + gap
    doc = _doc(window, provision_delay, b_at, b_at + 200)
    with Simulator(Scenario.from_dict(doc)) as sim:
        res = sim.run()
    b_time = res.completion_times.get("B")
    return {**res.counters, "b_duration": None if b_time is None else b_time - b_at}


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--gaps", type=int, nargs="+", default=[10, 100, 300, 590, 620, 700])
    p.add_argument("--windows", type=int, nargs="+", default=[0, 600])
    p.add_argument("--provision-delay", type=float, default=2.0,
                   help="seconds a fresh circuit takes to come up")
    args = p.parse_args()
    logging.disable(logging.WARNING)
    done = a_done(args.provision_delay)
    print(f"rule A alone completes at t={done} s")
    print(f"{'gap_s':>6} {'window_s':>9} {'creates':>8} {'modifies':>9} {'teardowns':>10} {'B_s':>7}")
    for window in args.windows:
        for gap in args.gaps:
            r = run(gap, window, args.provision_delay, done)
            dur = "-" if r["b_duration"] is None else f"{r['b_duration']:.1f}"
            print(f"{gap:>6} {window:>9} {r['creates']:>8} {r['modifies']:>9} {r['teardowns']:>10} {dur:>7}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
