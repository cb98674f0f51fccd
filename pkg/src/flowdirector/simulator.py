"""Deterministic virtual-clock harness.

Plays a scripted timeline of rule arrivals, priority edits, cancellations and
faults into the mock adapters, steps every daemon once per one-second tick,
and models how much data each provisioned rule moves.
"""

from __future__ import annotations

import math
import os
import random
import shutil
import tempfile
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from flowdirector.adapters.base import EventKind, RuleEvent, RuleMetadata
from flowdirector.adapters.mock import (
    MockCircuitProvider,
    MockMetricsSource,
    MockRuleSource,
    MockTransferTool,
)
from flowdirector.config import Config, ConfigError, config_from_dict
from flowdirector.model import RuleState, TERMINAL_STATES, VirtualClock
from flowdirector.monitor import Monitor
from flowdirector.orchestrator import Adapters, Orchestrator
from flowdirector.store import Store

TICK_MS = 1000
BYTES_PER_GBIT = 1e9 / 8

EVENT_KINDS = ("ADD_RULE", "SET_PRIORITY", "CANCEL_RULE", "FAULT", "METRICS_SCALE", "RESTART")
FAULT_TARGETS = ("rule_source", "circuit_provider", "transfer_tool", "metrics_source", "jobs")


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    rule: Optional[str] = None
    src: Optional[str] = None
    dst: Optional[str] = None
    sources: tuple[str, ...] = ()
    destinations: tuple[str, ...] = ()
    priority: Optional[int] = None
    bytes: int = 0
    adapter: Optional[str] = None
    op: str = "*"
    count: int = 1
    factor: float = 1.0


@dataclass
class ModelParams:
    per_transfer_rate: float = 2.0
    window_gbit: float = 0.5
    noise_fraction: float = 0.0
    seed: int = 0
    file_size_bytes: int = 10**9


@dataclass
class Scenario:
    config: Config
    events: list[SimEvent]
    model: ModelParams = field(default_factory=ModelParams)
    until: float = 600.0

    @classmethod
    def from_dict(cls, data: Any) -> Scenario:
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ScenarioInvalid("scenario: expected a mapping at top level")
        unknown = set(data) - {"sites", "config", "model", "until", "events"}
        if unknown:
            raise ScenarioInvalid(f"{sorted(unknown)[0]}: unknown scenario key")
        cfg_doc = dict(data.get("config") or {})
        if "sites" in cfg_doc:
            raise ScenarioInvalid("config.sites: declare sites at the top level")
        cfg_doc["sites"] = data.get("sites")
        try:
            config = config_from_dict(cfg_doc)
        except ConfigError as exc:
            raise ScenarioInvalid(str(exc)) from exc
        # daemons step once per tick, so the sample window is one tick
        if "monitor" not in (data.get("config") or {}) or \
                "sample_window_s" not in (data["config"].get("monitor") or {}):
            config.monitor.sample_window_s = TICK_MS / 1000

        model_doc = data.get("model") or {}
        if not isinstance(model_doc, dict):
            raise ScenarioInvalid("model: expected a mapping")
        try:
            model = ModelParams(**model_doc)
        except TypeError as exc:
            raise ScenarioInvalid(f"model: {exc}") from exc
        if not 0 <= model.noise_fraction < 1:
            raise ScenarioInvalid("model.noise_fraction: must be in [0, 1)")

        sites = {s.name for s in config.sites}
        events = []
        raw = data.get("events") or []
        if not isinstance(raw, list):
            raise ScenarioInvalid("events: expected a list")
        for i, ev in enumerate(raw):
            events.append(_parse_event(ev, f"events[{i}]", sites))
        for a, b in zip(events, events[1:]):
            if b.t < a.t:
                raise ScenarioInvalid("events: must be sorted by time")
        until = data.get("until", 600)
        if not isinstance(until, (int, float)) or until < 0:
            raise ScenarioInvalid("until: expected a non-negative number")
        return cls(config, events, model, float(until))


def _parse_event(ev: Any, where: str, sites: set[str]) -> SimEvent:
    if not isinstance(ev, dict):
        raise ScenarioInvalid(f"{where}: expected a mapping")
    kind = ev.get("kind")
    if kind not in EVENT_KINDS:
        raise ScenarioInvalid(f"{where}.kind: expected one of {', '.join(EVENT_KINDS)}")
    t = ev.get("t")
    if not isinstance(t, (int, float)) or t < 0:
        raise ScenarioInvalid(f"{where}.t: expected a non-negative number")

    def need(key: str, typ=str):
        if key not in ev:
            raise ScenarioInvalid(f"{where}.{key}: required for {kind}")
        val = ev[key]
        if typ is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        else:
            ok = isinstance(val, typ) and not (typ is int and isinstance(val, bool))
        if not ok:
            raise ScenarioInvalid(f"{where}.{key}: expected {typ.__name__}")
        return val

    kw: dict[str, Any] = {"t": float(t), "kind": kind}
    if kind == "ADD_RULE":
        kw["rule"] = need("rule")
        if "sources" in ev or "destinations" in ev:
            kw["sources"] = tuple(ev.get("sources") or ())
            kw["destinations"] = tuple(ev.get("destinations") or ())
        else:
            kw["src"], kw["dst"] = need("src"), need("dst")
            kw["sources"], kw["destinations"] = (kw["src"],), (kw["dst"],)
        for s in kw["sources"] + kw["destinations"]:
            if s not in sites:
                raise ScenarioInvalid(f"{where}: unknown site {s!r}")
        kw["priority"] = need("priority", int)
        if kw["priority"] < 1:
            raise ScenarioInvalid(f"{where}.priority: must be >= 1")
        size = ev.get("bytes", 0)
        if not isinstance(size, (int, float)) or size < 0:
            raise ScenarioInvalid(f"{where}.bytes: expected a non-negative number")
        kw["bytes"] = int(size)
    elif kind == "SET_PRIORITY":
        kw["rule"] = need("rule")
        kw["priority"] = need("priority", int)
        if kw["priority"] < 1:
            raise ScenarioInvalid(f"{where}.priority: must be >= 1")
    elif kind == "CANCEL_RULE":
        kw["rule"] = need("rule")
    elif kind == "FAULT":
        kw["adapter"] = need("adapter")
        if kw["adapter"] not in FAULT_TARGETS:
            raise ScenarioInvalid(f"{where}.adapter: expected one of {', '.join(FAULT_TARGETS)}")
        kw["count"] = need("count", int)
        kw["op"] = ev.get("op", "*")
        if kw["adapter"] == "jobs":
            kw["rule"] = need("rule")
    elif kind == "METRICS_SCALE":
        kw["rule"] = need("rule")
        kw["factor"] = float(need("factor", float))
        if kw["factor"] < 0:
            raise ScenarioInvalid(f"{where}.factor: must be >= 0")
    return SimEvent(**kw)


@dataclass
class Flow:
    rule_id: str
    total_bytes: int
    delivered: float = 0.0
    scale: float = 1.0
    done_at: Optional[float] = None
    files_reported: int = 0


@dataclass
class SimResult:
    log: list[str]
    snapshot: dict
    completion_times: dict[str, float]
    assertions: dict[str, bool]
    counters: dict[str, int]

    @property
    def ok(self) -> bool:
        return all(self.assertions.values())

    def to_dict(self) -> dict:
        return {"log": self.log, "snapshot": self.snapshot,
                "completion_times": self.completion_times,
                "assertions": self.assertions, "counters": self.counters}


class Simulator:
    def __init__(self, scenario: Scenario, store_path: Optional[str] = None,
                 seed: Optional[int] = None):
        self.scenario = scenario
        self.config = scenario.config
        self.model = scenario.model
        self.rng = random.Random(self.model.seed if seed is None else seed)
        self.clock = VirtualClock()
        self._tmpdir = None
        if store_path is None:
            self._tmpdir = tempfile.mkdtemp(prefix="flowdirector-sim-")
            store_path = os.path.join(self._tmpdir, "store.db")
        self.store_path = store_path

        inventory = {s.name: list(s.endpoints) for s in self.config.sites}
        self.rule_source = MockRuleSource(self.clock)
        self.provider = MockCircuitProvider(self.clock, inventory,
                                            int(self.config.mock.provision_delay * 1000))
        self.tool = MockTransferTool(self.clock)
        self.metrics = MockMetricsSource(self.clock, [e for eps in inventory.values() for e in eps])
        self.adapters = Adapters(self.rule_source, self.provider, self.tool, self.metrics)

        self.flows: dict[str, Flow] = {}
        self.log: list[str] = []
        self.violations: list[str] = []
        self.restarts = 0
        self.tick_hooks: list[Callable[[Simulator], None]] = []
        self._pending = list(scenario.events)
        self._states: dict[str, str] = {}
        self._calls_seen = 0
        self._boot()

    # -- lifecycle ----------------------------------------------------------

    def _boot(self) -> None:
        self.store = Store(self.store_path, self.clock)
        self.orchestrator = Orchestrator(self.store, self.adapters, self.config, self.clock)
        self.orchestrator.sync_inventory()
        self.monitor = Monitor(self.store, self.metrics, self.tool, self.config.monitor,
                               self.clock, orchestrator=self.orchestrator)

    def restart(self) -> None:
        """Simulated crash: drop every in-memory object and recover from the store file."""
        self.store.close()
        del self.orchestrator, self.monitor, self.store
        self.restarts += 1
        self._boot()

    def close(self) -> None:
        self.store.close()
        if self._tmpdir:
            shutil.rmtree(self._tmpdir, ignore_errors=True)
            self._tmpdir = None

    def __enter__(self) -> Simulator:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def now_s(self) -> float:
        return self.clock.now_ms() / 1000

    def _note(self, msg: str) -> None:
        self.log.append(f"t={self.now_s:g} {msg}")

    # -- one tick -----------------------------------------------------------

    def _deliver_events(self) -> None:
        while self._pending and self._pending[0].t * 1000 <= self.clock.now_ms():
            ev = self._pending.pop(0)
            self._apply(ev)

    def _apply(self, ev: SimEvent) -> None:
        if ev.kind == "ADD_RULE":
            meta = RuleMetadata(ev.rule, ev.sources, ev.destinations, ev.priority, ev.bytes)
            self.rule_source.push(RuleEvent(EventKind.NEW, ev.rule, meta))
            if meta.point_to_point:
                self.flows[ev.rule] = Flow(ev.rule, ev.bytes)
                self.tool.register(ev.rule)
            self._note(f"event ADD_RULE {ev.rule} p={ev.priority} bytes={ev.bytes}")
        elif ev.kind == "SET_PRIORITY":
            self.rule_source.push(RuleEvent(EventKind.PRIORITY_CHANGED, ev.rule, priority=ev.priority))
            self._note(f"event SET_PRIORITY {ev.rule} p={ev.priority}")
        elif ev.kind == "CANCEL_RULE":
            self.rule_source.push(RuleEvent(EventKind.DELETED, ev.rule))
            self._note(f"event CANCEL_RULE {ev.rule}")
        elif ev.kind == "FAULT":
            if ev.adapter == "jobs":
                self.tool.record(ev.rule, failed=ev.count, retried=ev.count)
            else:
                target = {"rule_source": self.rule_source, "circuit_provider": self.provider,
                          "transfer_tool": self.tool, "metrics_source": self.metrics}[ev.adapter]
                target.faults.inject(ev.op, ev.count)
            self._note(f"event FAULT {ev.adapter} op={ev.op} count={ev.count}")
        elif ev.kind == "METRICS_SCALE":
            if ev.rule in self.flows:
                self.flows[ev.rule].scale = ev.factor
            self._note(f"event METRICS_SCALE {ev.rule} x{ev.factor:g}")
        elif ev.kind == "RESTART":
            self._note("event RESTART")
            self.restart()

    def _step_daemons(self) -> None:
        o = self.orchestrator
        o.ingest()
        o.assign_endpoints()
        o.decide()
        o.provision()
        o.finish()
        o.reap()
        self.monitor.sample()

    def _log_changes(self) -> None:
        for rule in self.store.list_rules():
            prev = self._states.get(rule.rule_id)
            cur = f"{rule.state.value}"
            if rule.state in (RuleState.DECIDED, RuleState.PROVISIONED, RuleState.MODIFYING):
                cur += f"@{rule.allocated_gbps}"
            if prev != cur:
                self._note(f"rule {rule.rule_id} {prev or '-'} -> {cur}")
                self._states[rule.rule_id] = cur
        for call in self.provider.calls[self._calls_seen:]:
            if call[0] == "create":
                req = call[1]
                self._note(f"provider create {req.src_endpoint}->{req.dst_endpoint} "
                           f"{req.bandwidth_gbps} key={call[2]}")
            elif call[0] in ("modify", "teardown"):
                self._note("provider " + " ".join(str(a) for a in call))
        self._calls_seen = len(self.provider.calls)

    def _check_capacity(self) -> None:
        usage: dict[str, int] = {}
        for c in self.provider.live_circuits().values():
            for ep in (c.src_endpoint, c.dst_endpoint):
                site = self.provider.site_of(ep)
                usage[site] = usage.get(site, 0) + c.bandwidth_gbps
        for s in self.config.sites:
            if usage.get(s.name, 0) > s.capacity_gbps:
                self.violations.append(
                    f"t={self.now_s:g} capacity at {s.name}: {usage[s.name]} > {s.capacity_gbps}")

    def _advance_flows(self) -> None:
        dt = TICK_MS / 1000
        t_end = self.clock.now_ms() + TICK_MS
        live = self.provider.live_circuits()
        flowing: dict[tuple[str, str], list] = {}
        for rule in self.store.list_rules([RuleState.PROVISIONED, RuleState.MODIFYING]):
            flow = self.flows.get(rule.rule_id)
            pc = live.get(rule.circuit_id or "")
            if flow is None or flow.done_at is not None or pc is None or pc.status != "ACTIVE":
                continue
            bw = min(pc.bandwidth_gbps, rule.allocated_gbps)
            flowing.setdefault((rule.src, rule.dst), []).append((rule, flow, bw))

        nf = self.model.noise_fraction
        for pair in sorted(flowing):
            members = flowing[pair]
            rtt_s = self.config.rtt_ms(*pair) / 1000
            per_transfer = min(self.model.per_transfer_rate, self.model.window_gbit / rtt_s)
            n = self.tool.active.get(pair, 0)
            pair_cap = n * per_transfer
            total_bw = sum(bw for _, _, bw in members) or 1
            for rule, flow, bw in sorted(members, key=lambda m: m[0].rule_id):
                base = min(bw, pair_cap * bw / total_bw)
                noise = self.rng.uniform(-nf, nf) if nf else 0.0
                rate = base * flow.scale * (1 + noise)
                if rate > rule.allocated_gbps * (1 + nf) + 1e-9:
                    self.violations.append(f"t={self.now_s:g} {rule.rule_id} rate {rate} above allocation")
                remaining = flow.total_bytes - flow.delivered
                moved = min(remaining, rate * dt * BYTES_PER_GBIT)
                flow.delivered += moved
                observed = moved / BYTES_PER_GBIT / dt
                self.metrics.record(rule.src_endpoint, observed, at_ms=t_end)
                self.metrics.record(rule.dst_endpoint, observed, at_ms=t_end)
                files = int(flow.delivered // self.model.file_size_bytes)
                if flow.delivered >= flow.total_bytes:
                    files = math.ceil(flow.total_bytes / self.model.file_size_bytes)
                per_file = observed / n if n else 0.0
                self.tool.record(rule.rule_id, finished=files - flow.files_reported,
                                 avg_file_throughput=per_file)
                flow.files_reported = files
                if flow.delivered >= flow.total_bytes:
                    frac = moved / (rate * dt * BYTES_PER_GBIT) if rate > 0 else 0.0
                    flow.done_at = self.now_s + frac * dt
                    self.rule_source.push(RuleEvent(EventKind.COMPLETED, rule.rule_id), at_ms=t_end)
                    self._note(f"rule {rule.rule_id} delivered {flow.total_bytes} bytes "
                               f"(complete at {flow.done_at:g}s)")

    def step(self) -> None:
        self._deliver_events()
        self._step_daemons()
        self._log_changes()
        self._check_capacity()
        for hook in self.tick_hooks:
            hook(self)
        self._advance_flows()
        self.clock.advance(TICK_MS)

    def run(self, until: Optional[float] = None) -> SimResult:
        until = self.scenario.until if until is None else until
        while self.now_s <= until:
            self.step()
        return self.result()

    def run_until(self, predicate: Callable[[Simulator], bool], limit: float) -> bool:
        while self.now_s <= limit:
            if predicate(self):
                return True
            self.step()
        return predicate(self)

    # -- results ------------------------------------------------------------

    def counters(self) -> dict[str, int]:
        return {
            "creates": self.provider.count("create"),
            "circuits_created": self.provider.circuits_created(),
            "modifies": self.provider.count("modify"),
            "teardowns": self.provider.count("teardown"),
            "restarts": self.restarts,
        }

    def result(self) -> SimResult:
        rules = self.store.list_rules()
        settled = all(r.state in TERMINAL_STATES or r.state is RuleState.FAILED for r in rules)
        conserved = all(f.delivered <= f.total_bytes for f in self.flows.values())
        finished = [r.rule_id for r in rules if r.state is RuleState.FINISHED]
        reports = set(self.store.report_ids())
        assertions = {
            "capacity_safety": not self.violations,
            "byte_conservation": conserved,
            "liveness": settled,
            "finished_rules_reported": all(rid in reports for rid in finished),
        }
        completion = {rid: f.done_at for rid, f in sorted(self.flows.items()) if f.done_at is not None}
        return SimResult(list(self.log), self.store.snapshot(), completion, assertions, self.counters())
