"""Lifecycle daemons: ingest, endpoint assignment, decision, provisioning,
finishing and reaping.

Each daemon is a method that does one pass over the store. They coordinate
only through committed state, so they can run on separate threads
(``DaemonRunner``) or be stepped round-robin on a virtual clock by the
simulator with the same results.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from flowdirector import allocator
from flowdirector.adapters.base import (
    AdapterError,
    CircuitProvider,
    CircuitRequest,
    EndpointBusy,
    EventKind,
    MetricsSource,
    RuleEvent,
    RuleSource,
    TransferTool,
    TransientError,
    UnknownCircuit,
    UnknownSite,
)
from flowdirector.config import Config, TuningConfig
from flowdirector.model import (
    Circuit,
    CircuitStatus,
    Clock,
    ConflictError,
    RuleState,
    Site,
    TransferRule,
)
from flowdirector.store import Store

log = logging.getLogger(__name__)

S = RuleState

ACTIVE_STATES = (S.ALLOCATED, S.DECIDED, S.PROVISIONING, S.PROVISIONED, S.MODIFYING)
HOLDING_STATES = (S.DECIDED, S.PROVISIONING, S.PROVISIONED, S.MODIFYING)
DIRTY_KEY = "decision_dirty"


def tune_transfers(bandwidth_gbps: float, rtt_ms: float, cfg: TuningConfig = TuningConfig()) -> int:
    """Number of concurrent transfers needed to fill ``bandwidth_gbps``.

    Each transfer is limited by its own cap and by window/RTT.
    """
    if rtt_ms <= 0:
        raise ValueError("rtt must be positive")
    per_transfer = min(cfg.per_transfer_cap_gbps, cfg.window_gbit / (rtt_ms / 1000))
    n = math.ceil(bandwidth_gbps / per_transfer) if bandwidth_gbps > 0 else 0
    return max(cfg.min_active, min(cfg.max_active, n))


@dataclass
class Adapters:
    rule_source: RuleSource
    circuit_provider: CircuitProvider
    transfer_tool: TransferTool
    metrics_source: MetricsSource


class Orchestrator:
    def __init__(self, store: Store, adapters: Adapters, config: Config, clock: Clock):
        self.store = store
        self.adapters = adapters
        self.config = config
        self.clock = clock
        self.g = config.allocator.granularity_gbps
        self.decision_lock = threading.Lock()
        self._source_retry_at = 0
        self._source_failures = 0
        self._tune_pending: set[tuple[str, str]] = set()
        for r in store.list_rules(HOLDING_STATES):
            self._tune_pending.add((r.src, r.dst))

    # -- helpers ------------------------------------------------------------

    def _backoff_ms(self, failures: int) -> int:
        o = self.config.orchestrator
        delay = min(o.backoff_cap_s, o.backoff_initial_s * o.backoff_factor ** max(0, failures - 1))
        return int(delay * 1000)

    def _mark_dirty(self) -> None:
        self.store.set_meta(DIRTY_KEY, "1")

    def _with_fresh(self, rule_id: str, fn: Callable[[TransferRule], Optional[TransferRule]],
                    attempts: int = 5) -> Optional[TransferRule]:
        """Apply ``fn`` to the latest copy of a rule, re-reading on CAS conflicts."""
        for _ in range(attempts):
            rule = self.store.find_rule(rule_id)
            if rule is None:
                return None
            try:
                return fn(rule)
            except ConflictError:
                continue
        log.warning("rule %s: gave up after repeated conflicts", rule_id)
        return None

    def sites(self) -> list[Site]:
        return self.store.list_sites()

    def sync_inventory(self) -> None:
        """Load configured sites and the provider's endpoint inventory into the store."""
        for sc in self.config.sites:
            try:
                endpoints = tuple(self.adapters.circuit_provider.list_endpoints(sc.name))
            except UnknownSite:
                log.warning("provider does not know site %s; using configured endpoints", sc.name)
                endpoints = sc.to_site().endpoints
            except AdapterError as exc:
                log.warning("inventory for %s unavailable (%s); using configured endpoints", sc.name, exc)
                endpoints = sc.to_site().endpoints
            self.store.put_site(Site(sc.name, sc.capacity_gbps, endpoints))

    # -- ingest -------------------------------------------------------------

    def ingest(self) -> list[RuleEvent]:
        now = self.clock.now_ms()
        if now < self._source_retry_at:
            return []
        try:
            events = self.adapters.rule_source.poll()
        except AdapterError as exc:
            self._source_failures += 1
            self._source_retry_at = now + self._backoff_ms(self._source_failures)
            log.warning("rule source unavailable (%s); retry in %d ms", exc,
                        self._source_retry_at - now)
            return []
        self._source_failures = 0
        for ev in events:
            self._apply_event(ev)
        return events

    def _apply_event(self, ev: RuleEvent) -> None:
        known_sites = {s.name for s in self.store.list_sites()}
        if ev.kind is EventKind.NEW:
            meta = ev.metadata
            if not meta.point_to_point:
                log.info("skipping rule %s: not point-to-point (%d sources, %d destinations)",
                         ev.rule_id, len(meta.sources), len(meta.destinations))
                return
            src, dst = meta.sources[0], meta.destinations[0]
            if src not in known_sites or dst not in known_sites or src == dst:
                log.info("skipping rule %s: sites %s -> %s not managed", ev.rule_id, src, dst)
                return
            if self.store.find_rule(ev.rule_id) is not None:
                return
            try:
                self.store.add_rule(TransferRule(ev.rule_id, src, dst, meta.priority, meta.total_bytes))
            except ConflictError:
                pass
            return

        if ev.kind is EventKind.PRIORITY_CHANGED:
            def bump(rule: TransferRule):
                if rule.state not in ACTIVE_STATES and rule.state is not S.INITIALIZED:
                    return rule
                if rule.priority == ev.priority:
                    return rule
                flag = rule.state in HOLDING_STATES
                return self.store.update_rule(rule, priority=ev.priority,
                                              needs_decision=flag or rule.needs_decision)
            self._with_fresh(ev.rule_id, bump)
            return

        if ev.kind is EventKind.COMPLETED:
            def complete(rule: TransferRule):
                if rule.state is S.PROVISIONED:
                    out = self.store.transition(rule, S.FINISHED, allocated_gbps=0)
                    self._mark_dirty()
                    return out
                if rule.state in (S.DECIDED, S.PROVISIONING, S.MODIFYING):
                    return self.store.update_rule(rule, completion_pending=True)
                if rule.state in (S.INITIALIZED, S.ALLOCATED, S.FAILED):
                    return self._cancel(rule)
                return rule
            self._with_fresh(ev.rule_id, complete)
            return

        if ev.kind is EventKind.DELETED:
            def delete(rule: TransferRule):
                if rule.state in (S.FINISHED, S.CANCELLED):
                    return rule
                return self._cancel(rule)
            self._with_fresh(ev.rule_id, delete)

    def _cancel(self, rule: TransferRule) -> TransferRule:
        out = self.store.transition(rule, S.CANCELLED, allocated_gbps=0)
        if rule.state in HOLDING_STATES:
            self._mark_dirty()
        return out

    # -- endpoints ----------------------------------------------------------

    def _claimed_circuits(self) -> set[str]:
        return {r.circuit_id for r in self.store.list_rules(ACTIVE_STATES) if r.circuit_id}

    def assign_endpoints(self) -> dict[str, tuple[str, str]]:
        assigned = {}
        for rule in self.store.list_rules([S.INITIALIZED]):
            claimed = self._claimed_circuits()
            reuse = None
            for c in self.store.list_circuits([CircuitStatus.STALE]):
                if c.circuit_id in claimed:
                    continue
                if (c.src_site, c.dst_site) == (rule.src, rule.dst):
                    reuse = (c.src_endpoint, c.dst_endpoint, c.circuit_id)
                elif (c.src_site, c.dst_site) == (rule.dst, rule.src):
                    reuse = (c.dst_endpoint, c.src_endpoint, c.circuit_id)
                if reuse:
                    break
            if reuse:
                src_ep, dst_ep, cid = reuse
            else:
                free_src = self._free_or_evict(rule.src, claimed)
                free_dst = self._free_or_evict(rule.dst, claimed)
                if not free_src or not free_dst:
                    log.warning("rule %s: no free endpoint at %s; will retry", rule.rule_id,
                                rule.src if not free_src else rule.dst)
                    continue
                src_ep, dst_ep, cid = free_src[0], free_dst[0], None
            try:
                self.store.assign_endpoints(rule, src_ep, dst_ep, circuit_id=cid)
            except ConflictError:
                log.info("rule %s: lost endpoint race, retrying next cycle", rule.rule_id)
                continue
            assigned[rule.rule_id] = (src_ep, dst_ep)
        return assigned

    def _free_or_evict(self, site: str, claimed: set[str]) -> list[str]:
        """Free endpoints at ``site``, tearing down the oldest idle stale circuit if there are none.

        A stale circuit is only worth keeping while nobody else needs its endpoints.
        """
        free = self.store.free_endpoints(site)
        if free:
            return free
        stale = sorted((c for c in self.store.list_circuits([CircuitStatus.STALE])
                        if c.circuit_id not in claimed and site in (c.src_site, c.dst_site)),
                       key=lambda c: (c.stale_since, c.circuit_id))
        if stale and self._teardown_stale(stale[0]):
            log.info("evicted stale circuit %s to free an endpoint at %s", stale[0].circuit_id, site)
            return self.store.free_endpoints(site)
        return []

    # -- decision -----------------------------------------------------------

    def stale_reservations(self, active: list[TransferRule]) -> dict[str, int]:
        claimed = {r.circuit_id for r in active if r.circuit_id}
        reserved: dict[str, int] = {}
        for c in self.store.list_circuits([CircuitStatus.STALE]):
            if c.circuit_id not in claimed:
                reserved[c.src_site] = reserved.get(c.src_site, 0) + c.bandwidth_gbps
                reserved[c.dst_site] = reserved.get(c.dst_site, 0) + c.bandwidth_gbps
        return reserved

    def compute_allocation(self) -> dict[str, int]:
        """What a decision would assign right now, without committing it."""
        active = self.store.list_rules(ACTIVE_STATES)
        sites = self.sites()
        reserved = self.stale_reservations(active)
        candidates = list(active)
        while True:
            allocs = {a.rule_id: a.bandwidth_gbps
                      for a in allocator.allocate(candidates, sites, self.g, reserved)}
            starved = [r for r in candidates if r.state is S.ALLOCATED and allocs[r.rule_id] < self.g]
            if not starved:
                return allocs
            # not enough room to give every newcomer a unit; admit the rest first
            drop = {r.rule_id for r in starved}
            candidates = [r for r in candidates if r.rule_id not in drop]

    def decide(self) -> dict[str, int]:
        with self.decision_lock:
            waiting = self.store.list_rules([S.ALLOCATED])
            flagged = [r for r in self.store.list_rules(HOLDING_STATES) if r.needs_decision]
            dirty = self.store.get_meta(DIRTY_KEY) == "1"
            if not (waiting or flagged or dirty):
                return {}
            allocs = self.compute_allocation()
            decided = {}
            for rid, bw in allocs.items():
                def apply(rule: TransferRule, bw=bw):
                    if rule.state not in ACTIVE_STATES:
                        return rule
                    if bw < self.g and rule.state is not S.ALLOCATED:
                        log.warning("rule %s: allocation would drop to %d; keeping %d",
                                    rule.rule_id, bw, rule.allocated_gbps)
                        return self.store.update_rule(rule, needs_decision=False)
                    if rule.state is S.ALLOCATED:
                        return self.store.transition(rule, S.DECIDED, allocated_gbps=bw)
                    if rule.state is S.PROVISIONED:
                        if bw != rule.allocated_gbps:
                            return self.store.transition(rule, S.MODIFYING, allocated_gbps=bw,
                                                         needs_decision=False)
                        if rule.needs_decision:
                            return self.store.update_rule(rule, needs_decision=False)
                        return rule
                    if bw != rule.allocated_gbps or rule.needs_decision:
                        return self.store.update_rule(rule, allocated_gbps=bw, needs_decision=False)
                    return rule
                out = self._with_fresh(rid, apply)
                if out is not None:
                    decided[rid] = out.allocated_gbps
            self.store.set_meta(DIRTY_KEY, "0")
            return decided

    # -- provisioning -------------------------------------------------------

    def _site_capacity(self) -> dict[str, int]:
        return {s.name: s.port_capacity for s in self.sites()}

    def _fits(self, rule: TransferRule, delta: int) -> bool:
        if delta <= 0:
            return True
        usage = self.store.site_usage()
        cap = self._site_capacity()
        return all(usage.get(s, 0) + delta <= cap[s] for s in (rule.src, rule.dst))

    def _provider_failed(self, rule: TransferRule, exc: Exception) -> None:
        attempts = rule.attempts + 1
        if attempts > self.config.orchestrator.max_retries:
            log.error("rule %s: giving up after %d failed attempts (%s)", rule.rule_id, attempts, exc)
            self._fail(rule)
            return
        retry_at = self.clock.now_ms() + self._backoff_ms(attempts)
        log.warning("rule %s: provider error (%s); attempt %d, retry at %d",
                    rule.rule_id, exc, attempts, retry_at)
        try:
            self.store.update_rule(rule, attempts=attempts, next_attempt_at=retry_at)
        except ConflictError:
            pass

    def _fail(self, rule: TransferRule) -> None:
        try:
            self.store.transition(rule, S.FAILED, allocated_gbps=0)
        except ConflictError:
            return
        self.store.release_endpoints(rule.rule_id)
        self._mark_dirty()
        self._release_circuit_of(rule)

    def _release_circuit_of(self, rule: TransferRule) -> None:
        if not rule.circuit_id:
            return
        c = self.store.get_circuit(rule.circuit_id)
        if c is None or not c.live or c.status is CircuitStatus.STALE:
            return
        try:
            self.adapters.circuit_provider.teardown(c.circuit_id)
        except UnknownCircuit:
            pass
        except AdapterError as exc:
            log.warning("teardown of %s failed (%s); will retry", c.circuit_id, exc)
            return
        self.store.put_circuit(c.evolve(status=CircuitStatus.TORN_DOWN, stale_since=None))

    def _due(self, rule: TransferRule) -> bool:
        return rule.next_attempt_at <= self.clock.now_ms()

    def provision(self) -> list[str]:
        """Advance DECIDED, PROVISIONING and MODIFYING rules; returns rule ids touched."""
        touched = []
        provider = self.adapters.circuit_provider

        for rule in self.store.list_rules([S.PROVISIONING]):
            if not self._due(rule):
                continue
            try:
                pc = provider.status(rule.circuit_id)
            except UnknownCircuit as exc:
                self._fail_quietly(rule, exc)
                continue
            except AdapterError as exc:
                self._provider_failed(rule, exc)
                continue
            if pc.status != "ACTIVE":
                continue
            c = self.store.get_circuit(rule.circuit_id)
            try:
                with self.store.transaction():
                    self.store.put_circuit(c.evolve(status=CircuitStatus.ACTIVE, stale_since=None))
                    self.store.transition(rule, S.PROVISIONED, attempts=0, next_attempt_at=0)
            except ConflictError:
                continue
            touched.append(rule.rule_id)
            self._tune_pending.add((rule.src, rule.dst))

        # rules whose circuit no longer matches the decision go back through MODIFYING
        for rule in self.store.list_rules([S.PROVISIONED]):
            c = self.store.get_circuit(rule.circuit_id) if rule.circuit_id else None
            if c is not None and c.bandwidth_gbps != rule.allocated_gbps and not rule.completion_pending:
                try:
                    self.store.transition(rule, S.MODIFYING)
                except ConflictError:
                    pass

        modifying = []
        for rule in self.store.list_rules([S.MODIFYING]):
            c = self.store.get_circuit(rule.circuit_id)
            modifying.append((rule, c, rule.allocated_gbps - c.bandwidth_gbps))
        # shrink first so the capacity they free is visible to growth below
        for rule, c, delta in sorted(modifying, key=lambda t: t[2]):
            if delta > 0:
                continue
            if self._due(rule) and self._modify(rule, c):
                touched.append(rule.rule_id)

        growth: list[tuple[TransferRule, Optional[Circuit], int]] = [
            (r, c, d) for r, c, d in modifying if d > 0]
        for rule in self.store.list_rules([S.DECIDED]):
            c = self.store.get_circuit(rule.circuit_id) if rule.circuit_id else None
            base = c.bandwidth_gbps if c is not None and c.status is CircuitStatus.STALE else 0
            growth.append((rule, c, rule.allocated_gbps - base))
        growth.sort(key=lambda t: (-t[0].priority, t[0].created_at, t[0].rule_id))
        for rule, c, delta in growth:
            if not self._due(rule):
                continue
            if not self._fits(rule, delta):
                log.info("rule %s: waiting for capacity (+%d Gbps)", rule.rule_id, delta)
                continue
            if rule.state is S.MODIFYING:
                ok = self._modify(rule, c)
            elif c is not None and c.status is CircuitStatus.STALE:
                ok = self._reuse(rule, c)
            else:
                ok = self._create(rule)
            if ok:
                touched.append(rule.rule_id)

        self.tune_pending()
        return touched

    def _fail_quietly(self, rule: TransferRule, exc: Exception) -> None:
        log.error("rule %s: circuit %s vanished (%s)", rule.rule_id, rule.circuit_id, exc)
        self._fail(rule)

    def _modify(self, rule: TransferRule, c: Circuit) -> bool:
        if c.bandwidth_gbps != rule.allocated_gbps:
            try:
                self.adapters.circuit_provider.modify(c.circuit_id, rule.allocated_gbps)
            except UnknownCircuit as exc:
                self._fail_quietly(rule, exc)
                return False
            except AdapterError as exc:
                self._provider_failed(rule, exc)
                return False
        try:
            with self.store.transaction():
                self.store.put_circuit(c.evolve(bandwidth_gbps=rule.allocated_gbps))
                self.store.transition(rule, S.PROVISIONED, attempts=0, next_attempt_at=0)
        except ConflictError:
            return False
        self._tune_pending.add((rule.src, rule.dst))
        return True

    def _reuse(self, rule: TransferRule, c: Circuit) -> bool:
        try:
            self.adapters.circuit_provider.modify(c.circuit_id, rule.allocated_gbps)
        except UnknownCircuit:
            # reaped underneath us; fall back to a fresh circuit
            self.store.put_circuit(c.evolve(status=CircuitStatus.TORN_DOWN, stale_since=None))
            return self._create(rule)
        except AdapterError as exc:
            self._provider_failed(rule, exc)
            return False
        try:
            with self.store.transaction():
                self.store.put_circuit(c.evolve(bandwidth_gbps=rule.allocated_gbps,
                                                status=CircuitStatus.ACTIVE, stale_since=None))
                mid = self.store.transition(rule, S.PROVISIONING)
                self.store.transition(mid, S.PROVISIONED, attempts=0, next_attempt_at=0)
        except ConflictError:
            return False
        self._tune_pending.add((rule.src, rule.dst))
        return True

    def _create(self, rule: TransferRule) -> bool:
        req = CircuitRequest(rule.src_endpoint, rule.dst_endpoint, rule.allocated_gbps)
        try:
            # keyed by rule id so a replay after a crash returns the same circuit
            cid = self.adapters.circuit_provider.create(req, idempotency_key=rule.rule_id)
        except (EndpointBusy, TransientError) as exc:
            self._provider_failed(rule, exc)
            return False
        except AdapterError as exc:
            log.error("rule %s: create rejected (%s)", rule.rule_id, exc)
            self._fail(rule)
            return False
        circuit = Circuit(cid, rule.src_endpoint, rule.dst_endpoint, rule.allocated_gbps,
                          CircuitStatus.PENDING, None, rule.src, rule.dst)
        try:
            with self.store.transaction():
                self.store.put_circuit(circuit)
                self.store.transition(rule, S.PROVISIONING, circuit_id=cid)
        except ConflictError:
            return False
        return True

    # -- transfer tuning ----------------------------------------------------

    def pair_bandwidth(self, src: str, dst: str) -> int:
        return sum(r.allocated_gbps for r in self.store.list_rules(HOLDING_STATES)
                   if (r.src, r.dst) == (src, dst))

    def tune_pair(self, src: str, dst: str, factor: int = 1) -> Optional[int]:
        cfg = self.config.tuning
        n = tune_transfers(self.pair_bandwidth(src, dst), self.config.rtt_ms(src, dst), cfg)
        n = min(cfg.max_active, n * factor)
        try:
            self.adapters.transfer_tool.set_active(src, dst, n)
        except AdapterError as exc:
            log.warning("could not set active transfers for %s -> %s (%s)", src, dst, exc)
            self._tune_pending.add((src, dst))
            return None
        self.store.set_meta(f"active:{src}:{dst}", str(n))
        return n

    def tune_pending(self) -> None:
        pending, self._tune_pending = sorted(self._tune_pending), set()
        for src, dst in pending:
            self.tune_pair(src, dst)

    # -- finishing and reaping ----------------------------------------------

    def finish(self) -> list[str]:
        """Park circuits of finished rules as STALE; tear down cancelled/failed ones."""
        done = []
        for rule in self.store.list_rules([S.PROVISIONED]):
            if rule.completion_pending:
                try:
                    self.store.transition(rule, S.FINISHED, allocated_gbps=0,
                                          completion_pending=False)
                    self._mark_dirty()
                except ConflictError:
                    pass

        claimed = self._claimed_circuits()
        bound = {e.in_use_by for e in self.store.list_endpoints() if e.in_use_by}
        for rule in self.store.list_rules([S.FINISHED, S.CANCELLED, S.FAILED]):
            c = self.store.get_circuit(rule.circuit_id) if rule.circuit_id else None
            owns = (c is not None and c.circuit_id not in claimed
                    and c.status in (CircuitStatus.PENDING, CircuitStatus.ACTIVE))
            if not owns and rule.rule_id not in bound:
                continue
            if owns and rule.state is S.FINISHED and c.status is CircuitStatus.ACTIVE:
                try:
                    if c.bandwidth_gbps != self.g:
                        self.adapters.circuit_provider.modify(c.circuit_id, self.g)
                except UnknownCircuit:
                    self.store.put_circuit(c.evolve(status=CircuitStatus.TORN_DOWN, stale_since=None))
                except AdapterError as exc:
                    log.warning("could not park circuit %s (%s); will retry", c.circuit_id, exc)
                    continue
                else:
                    self.store.put_circuit(c.evolve(bandwidth_gbps=self.g, status=CircuitStatus.STALE,
                                                    stale_since=self.clock.now_ms()))
            elif owns:
                self._release_circuit_of(rule)
                c2 = self.store.get_circuit(c.circuit_id)
                if c2 is not None and c2.live:
                    continue
            # endpoints go back to the circuit (if stale) or to the pool
            self.store.release_endpoints(rule.rule_id)
            self._mark_dirty()
            self._tune_pending.add((rule.src, rule.dst))
            done.append(rule.rule_id)
        return done

    def reap(self, now: Optional[int] = None) -> list[str]:
        now = self.clock.now_ms() if now is None else now
        window_ms = int(self.config.orchestrator.reuse_window_s * 1000)
        claimed = self._claimed_circuits()
        reaped = []
        for c in self.store.list_circuits([CircuitStatus.STALE]):
            if c.circuit_id in claimed or now - c.stale_since <= window_ms:
                continue
            if self._teardown_stale(c):
                reaped.append(c.circuit_id)
        return reaped

    def _teardown_stale(self, c: Circuit) -> bool:
        try:
            self.adapters.circuit_provider.teardown(c.circuit_id)
        except UnknownCircuit:
            pass
        except AdapterError as exc:
            log.warning("tearing down stale %s failed (%s); will retry", c.circuit_id, exc)
            return False
        self.store.put_circuit(c.evolve(status=CircuitStatus.TORN_DOWN, stale_since=None))
        self._mark_dirty()
        return True

    def retry_failed(self, rule_id: str) -> TransferRule:
        """Send a FAILED rule back to the start of the lifecycle."""
        rule = self.store.get_rule(rule_id)
        return self.store.transition(rule, S.INITIALIZED, src_endpoint=None, dst_endpoint=None,
                                     circuit_id=None, allocated_gbps=0, attempts=0,
                                     next_attempt_at=0, needs_decision=False)

    def step(self) -> None:
        """One pass of every lifecycle daemon in fixed order."""
        self.ingest()
        self.assign_endpoints()
        self.decide()
        self.provision()
        self.finish()
        self.reap()


class DaemonRunner:
    """Runs each daemon pass on its own thread at a fixed interval."""

    def __init__(self, passes: dict[str, Callable[[], object]], interval_s: float):
        self.passes = passes
        self.interval_s = interval_s
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def _loop(self, name: str, fn: Callable[[], object]) -> None:
        while not self._stop.is_set():
            try:
                fn()
            except Exception:
                log.exception("daemon %s pass failed", name)
            self._stop.wait(self.interval_s)

    def start(self) -> None:
        for name, fn in self.passes.items():
            t = threading.Thread(target=self._loop, args=(name, fn), name=f"daemon-{name}", daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self, timeout: float = 5.0) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout)
