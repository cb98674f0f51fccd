"""Read-only HTTP API over the store, plus wiring for the long-running service."""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from flowdirector.config import Config
from flowdirector.model import (
    CircuitStatus,
    NON_TERMINAL_STATES,
    RuleState,
    SystemClock,
)
from flowdirector.store import Store

log = logging.getLogger(__name__)

_ALLOCATION = re.compile(r"^/api/v1/allocation/([^/]+)$")
_REPORT = re.compile(r"^/api/v1/reports/([^/]+)$")
_LIVE = (CircuitStatus.PENDING, CircuitStatus.ACTIVE, CircuitStatus.STALE)


class Api:
    """Route table. Handlers only read the store; they never touch an adapter."""

    def __init__(self, store: Store):
        self.store = store

    def handle(self, method: str, path: str) -> tuple[int, dict]:
        path = path.split("?", 1)[0].rstrip("/") or "/"
        if method != "GET":
            return 405, {"error": "MethodNotAllowed", "detail": method}
        if path == "/api/v1/status":
            return 200, self.status()
        m = _ALLOCATION.match(path)
        if m:
            return self.allocation(m.group(1))
        m = _REPORT.match(path)
        if m:
            return self.report(m.group(1))
        return 404, {"error": "NotFound", "detail": path}

    def allocation(self, rule_id: str) -> tuple[int, dict]:
        rule = self.store.find_rule(rule_id)
        if rule is None:
            return 404, {"error": "UnknownRule", "rule_id": rule_id}
        if rule.state is RuleState.INITIALIZED or rule.src_endpoint is None:
            return 409, {"error": "NotYetAllocated", "rule_id": rule_id, "state": rule.state.value}
        return 200, {"rule_id": rule_id, "source_endpoint": rule.src_endpoint,
                     "dest_endpoint": rule.dst_endpoint}

    def report(self, rule_id: str) -> tuple[int, dict]:
        if self.store.find_rule(rule_id) is None:
            return 404, {"error": "UnknownRule", "rule_id": rule_id}
        report = self.store.get_report(rule_id)
        if report is None:
            return 404, {"error": "NoReport", "rule_id": rule_id}
        return 200, report.to_dict()

    def status(self) -> dict:
        with self.store.read():
            rules = self.store.list_rules(NON_TERMINAL_STATES)
            circuits = {c.circuit_id: c for c in self.store.list_circuits()}
            usage = self.store.site_usage()
            sites = self.store.list_sites()
            free = {s.name: self.store.free_endpoints(s.name) for s in sites}
        out_rules = []
        for r in rules:
            c = circuits.get(r.circuit_id or "")
            out_rules.append({
                "rule_id": r.rule_id, "src": r.src, "dst": r.dst, "priority": r.priority,
                "state": r.state.value, "allocated_gbps": r.allocated_gbps,
                "circuit_id": r.circuit_id,
                "circuit_status": c.status.value if c is not None else None,
            })
        out_sites = [{
            "site": s.name, "capacity_gbps": s.port_capacity,
            "allocated_gbps": usage.get(s.name, 0), "free_endpoints": free[s.name],
        } for s in sites]
        out_circuits = [{
            "circuit_id": c.circuit_id, "src_site": c.src_site, "dst_site": c.dst_site,
            "bandwidth_gbps": c.bandwidth_gbps, "status": c.status.value,
        } for c in circuits.values() if c.status in _LIVE]
        return {"rules": out_rules, "sites": out_sites, "circuits": out_circuits}


class _Handler(BaseHTTPRequestHandler):
    api: Api

    def do_GET(self) -> None:
        try:
            status, body = self.api.handle("GET", self.path)
        except Exception:  # pragma: no cover - last-resort guard
            log.exception("handler failed for %s", self.path)
            status, body = 500, {"error": "Internal"}
        data = json.dumps(body, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)


class ApiServer:
    """Threaded HTTP listener; ``port=0`` picks a free port."""

    def __init__(self, store: Store, host: str = "127.0.0.1", port: int = 8080):
        handler = type("Handler", (_Handler,), {"api": Api(store)})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join()


def parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return host or "127.0.0.1", int(port)


def build_adapters(config: Config, clock):
    """Adapters for ``serve``: HTTP clients, or in-process mocks for a dry run."""
    from flowdirector.adapters import (
        MockCircuitProvider, MockMetricsSource, MockRuleSource, MockTransferTool,
    )
    from flowdirector.orchestrator import Adapters

    if config.adapters.mode == "http":
        from flowdirector.adapters.http import (
            HttpCircuitProvider, HttpMetricsSource, HttpRuleSource, HttpTransferTool,
        )
        a = config.adapters
        return Adapters(HttpRuleSource(a.rule_source_url), HttpCircuitProvider(a.circuit_provider_url),
                        HttpTransferTool(a.transfer_tool_url), HttpMetricsSource(a.metrics_url))
    inventory = {s.name: list(s.endpoints) for s in config.sites}
    return Adapters(MockRuleSource(clock),
                    MockCircuitProvider(clock, inventory, int(config.mock.provision_delay * 1000)),
                    MockTransferTool(clock),
                    MockMetricsSource(clock, [e for eps in inventory.values() for e in eps]))


class Service:
    """Store, daemons and API listener for one configuration."""

    def __init__(self, config: Config):
        from flowdirector.monitor import Monitor
        from flowdirector.orchestrator import DaemonRunner, Orchestrator

        self.config = config
        self.clock = SystemClock()
        self.store = Store(config.store.path, self.clock)
        self.adapters = build_adapters(config, self.clock)
        self.orchestrator = Orchestrator(self.store, self.adapters, config, self.clock)
        self.orchestrator.sync_inventory()
        self.monitor = Monitor(self.store, self.adapters.metrics_source, self.adapters.transfer_tool,
                               config.monitor, self.clock, orchestrator=self.orchestrator)
        o = self.orchestrator
        self.daemons = DaemonRunner({
            "ingest": o.ingest, "endpoint": o.assign_endpoints, "decision": o.decide,
            "provision": o.provision, "finish": o.finish, "reaper": o.reap,
            "sample": self.monitor.sample,
        }, config.orchestrator.poll_interval)
        host, port = parse_listen(config.api.listen)
        self.server = ApiServer(self.store, host, port)

    def start(self) -> None:
        self.daemons.start()
        self.server.start()

    def stop(self) -> None:
        self.server.stop()
        self.daemons.stop()
        self.store.close()
