"""Deterministic in-process stand-ins for the external services.

All mocks read time from an injected clock, count their calls, and can be
told to fail the next N calls of an operation.
"""

from __future__ import annotations

import threading
from collections import Counter, defaultdict
from typing import Iterable, Optional

from flowdirector.adapters.base import (
    CircuitProvider,
    CircuitRequest,
    EndpointBusy,
    MetricsSource,
    NoData,
    ProviderCircuit,
    ProviderError,
    RuleEvent,
    RuleSource,
    SourceUnavailable,
    ToolUnavailable,
    TransferTool,
    UnknownCircuit,
    UnknownSite,
)
from flowdirector.model import Clock, Endpoint, JobStats, UnknownRule


class Faults:
    """Fail the next ``count`` calls of an operation (``"*"`` matches any)."""

    def __init__(self):
        self._pending: Counter[str] = Counter()

    def inject(self, op: str = "*", count: int = 1) -> None:
        self._pending[op] += count

    def check(self, op: str, exc: type[Exception]) -> None:
        for key in (op, "*"):
            if self._pending[key] > 0:
                self._pending[key] -= 1
                raise exc(f"injected fault on {op}")

    @property
    def pending(self) -> int:
        return sum(self._pending.values())


class MockRuleSource(RuleSource):
    def __init__(self, clock: Clock, script: Iterable[tuple[int, RuleEvent]] = ()):
        self.clock = clock
        self._events: list[tuple[int, RuleEvent]] = sorted(script, key=lambda te: te[0])
        self._cursor = 0
        self.faults = Faults()
        self.polls = 0

    def push(self, event: RuleEvent, at_ms: Optional[int] = None) -> None:
        t = self.clock.now_ms() if at_ms is None else at_ms
        self._events.append((t, event))
        self._events.sort(key=lambda te: te[0])

    def poll(self) -> list[RuleEvent]:
        self.polls += 1
        # a failed poll leaves the cursor alone so nothing is lost
        self.faults.check("poll", SourceUnavailable)
        now = self.clock.now_ms()
        out = []
        while self._cursor < len(self._events) and self._events[self._cursor][0] <= now:
            out.append(self._events[self._cursor][1])
            self._cursor += 1
        return out


class MockCircuitProvider(CircuitProvider):
    def __init__(self, clock: Clock, inventory: dict[str, list[str]],
                 provision_delay_ms: int = 2000):
        self.clock = clock
        self.inventory = {site: sorted(eps) for site, eps in inventory.items()}
        self._site_of = {ep: site for site, eps in self.inventory.items() for ep in eps}
        self.provision_delay_ms = provision_delay_ms
        self._circuits: dict[str, dict] = {}
        self._by_key: dict[str, str] = {}
        self._seq = 0
        self.faults = Faults()
        self.calls: list[tuple] = []

    def list_endpoints(self, site: str) -> list[Endpoint]:
        if site not in self.inventory:
            raise UnknownSite(site)
        return [Endpoint(name, site) for name in self.inventory[site]]

    def _busy(self, endpoint: str) -> bool:
        return any(c["status"] != "TORN_DOWN" and endpoint in (c["src"], c["dst"])
                   for c in self._circuits.values())

    def create(self, req: CircuitRequest, idempotency_key: Optional[str] = None) -> str:
        self.calls.append(("create", req, idempotency_key))
        self.faults.check("create", ProviderError)
        if idempotency_key is not None and idempotency_key in self._by_key:
            cid = self._by_key[idempotency_key]
            if self._circuits[cid]["status"] != "TORN_DOWN":
                return cid
        for ep in (req.src_endpoint, req.dst_endpoint):
            if ep not in self._site_of:
                raise UnknownSite(f"endpoint {ep} is not in the inventory")
            if self._busy(ep):
                raise EndpointBusy(ep)
        if self._site_of[req.src_endpoint] == self._site_of[req.dst_endpoint]:
            raise ProviderError("circuit endpoints must be at distinct sites")
        self._seq += 1
        cid = f"circuit-{self._seq:04d}"
        self._circuits[cid] = {
            "src": req.src_endpoint, "dst": req.dst_endpoint, "bw": req.bandwidth_gbps,
            "status": "PENDING", "ready_at": self.clock.now_ms() + self.provision_delay_ms,
            "key": idempotency_key,
        }
        if idempotency_key is not None:
            self._by_key[idempotency_key] = cid
        return cid

    def _get(self, circuit_id: str) -> dict:
        c = self._circuits.get(circuit_id)
        if c is None or c["status"] == "TORN_DOWN":
            raise UnknownCircuit(circuit_id)
        if c["status"] == "PENDING" and self.clock.now_ms() >= c["ready_at"]:
            c["status"] = "ACTIVE"
        return c

    def status(self, circuit_id: str) -> ProviderCircuit:
        self.calls.append(("status", circuit_id))
        self.faults.check("status", ProviderError)
        c = self._get(circuit_id)
        return ProviderCircuit(circuit_id, c["src"], c["dst"], c["bw"], c["status"])

    def modify(self, circuit_id: str, bandwidth_gbps: int) -> None:
        self.calls.append(("modify", circuit_id, bandwidth_gbps))
        self.faults.check("modify", ProviderError)
        self._get(circuit_id)["bw"] = bandwidth_gbps

    def teardown(self, circuit_id: str) -> None:
        self.calls.append(("teardown", circuit_id))
        self.faults.check("teardown", ProviderError)
        self._get(circuit_id)["status"] = "TORN_DOWN"

    # -- inspection helpers for tests and the simulator ---------------------

    def count(self, op: str) -> int:
        return sum(1 for c in self.calls if c[0] == op)

    def circuits_created(self, key: Optional[str] = None) -> int:
        """Distinct circuits actually created (idempotent replays excluded)."""
        return sum(1 for c in self._circuits.values() if key is None or c["key"] == key)

    def live_circuits(self) -> dict[str, ProviderCircuit]:
        out = {}
        for cid in sorted(self._circuits):
            c = self._circuits[cid]
            if c["status"] != "TORN_DOWN":
                c = self._get(cid)
                out[cid] = ProviderCircuit(cid, c["src"], c["dst"], c["bw"], c["status"])
        return out

    def site_of(self, endpoint: str) -> str:
        return self._site_of[endpoint]


class MockTransferTool(TransferTool):
    def __init__(self, clock: Clock):
        self.clock = clock
        self.active: dict[tuple[str, str], int] = {}
        self._stats: dict[str, JobStats] = {}
        self.faults = Faults()
        self.calls: list[tuple] = []

    def set_active(self, src_site: str, dst_site: str, n: int) -> None:
        if n < 1:
            raise ValueError("active transfer count must be >= 1")
        self.calls.append(("set_active", src_site, dst_site, n))
        self.faults.check("set_active", ToolUnavailable)
        self.active[(src_site, dst_site)] = n

    def register(self, rule_id: str) -> None:
        self._stats.setdefault(rule_id, JobStats(rule_id))

    def record(self, rule_id: str, finished: int = 0, failed: int = 0, retried: int = 0,
               avg_file_throughput: Optional[float] = None) -> None:
        cur = self._stats.get(rule_id, JobStats(rule_id))
        self._stats[rule_id] = JobStats(
            rule_id, cur.finished + finished, cur.failed + failed, cur.retried + retried,
            cur.avg_file_throughput if avg_file_throughput is None else avg_file_throughput)

    def job_stats(self, rule_id: str) -> JobStats:
        self.faults.check("job_stats", ToolUnavailable)
        if rule_id not in self._stats:
            raise UnknownRule(rule_id)
        return self._stats[rule_id]


class MockMetricsSource(MetricsSource):
    """Per-endpoint rate history; safe for concurrent readers."""

    def __init__(self, clock: Clock, endpoints: Iterable[str] = ()):
        self.clock = clock
        self._lock = threading.Lock()
        self._history: dict[str, list[tuple[int, float]]] = defaultdict(list)
        self._known = set(endpoints)
        self.faults = Faults()

    def register(self, endpoint: str) -> None:
        with self._lock:
            self._known.add(endpoint)

    def record(self, endpoint: str, gbps: float, at_ms: Optional[int] = None) -> None:
        t = self.clock.now_ms() if at_ms is None else at_ms
        with self._lock:
            self._known.add(endpoint)
            self._history[endpoint].append((t, gbps))

    def throughput(self, endpoint: str, window_s: float) -> float:
        with self._lock:
            self.faults.check("throughput", NoData)
            if endpoint not in self._known:
                raise NoData(endpoint)
            now = self.clock.now_ms()
            start = now - int(window_s * 1000)
            vals = [v for t, v in self._history[endpoint] if start < t <= now]
        return sum(vals) / len(vals) if vals else 0.0
