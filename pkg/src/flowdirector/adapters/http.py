"""HTTP clients for the external services.

Request and response shapes only; they have been exercised against mock
transports, not against production deployments.
"""

from __future__ import annotations

from typing import Optional

import httpx

from flowdirector.adapters.base import (
    AdapterError,
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
from flowdirector.model import Endpoint, JobStats, UnknownRule


def _client(base_url: str, client: Optional[httpx.Client], timeout: float) -> httpx.Client:
    return client if client is not None else httpx.Client(base_url=base_url, timeout=timeout)


class _Http:
    transient: type[Exception] = ProviderError

    def __init__(self, base_url: str = "", client: Optional[httpx.Client] = None,
                 timeout: float = 10.0):
        self.http = _client(base_url, client, timeout)

    def _call(self, method: str, path: str, **kw) -> httpx.Response:
        try:
            resp = self.http.request(method, path, **kw)
        except httpx.HTTPError as exc:
            raise self.transient(str(exc)) from exc
        if resp.status_code >= 500:
            raise self.transient(f"{method} {path}: HTTP {resp.status_code}")
        return resp

    @staticmethod
    def _check(resp: httpx.Response) -> None:
        # any other client error is a permanent rejection, never retried
        if resp.status_code >= 400:
            raise AdapterError(f"{resp.request.method} {resp.request.url.path}: "
                               f"HTTP {resp.status_code}: {resp.text[:200]}")


class HttpRuleSource(_Http, RuleSource):
    transient = SourceUnavailable

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.since = 0

    def poll(self) -> list[RuleEvent]:
        resp = self._call("GET", "/rules", params={"since": self.since})
        self._check(resp)
        body = resp.json()
        events = [RuleEvent.from_dict(e) for e in body.get("events", [])]
        self.since = int(body.get("next", self.since))
        return events


class HttpCircuitProvider(_Http, CircuitProvider):
    def list_endpoints(self, site: str) -> list[Endpoint]:
        resp = self._call("GET", f"/endpoints/{site}")
        if resp.status_code == 404:
            raise UnknownSite(site)
        self._check(resp)
        return [Endpoint(name, site) for name in resp.json()["endpoints"]]

    def create(self, req: CircuitRequest, idempotency_key: Optional[str] = None) -> str:
        body = {"src_endpoint": req.src_endpoint, "dst_endpoint": req.dst_endpoint,
                "bandwidth_gbps": req.bandwidth_gbps}
        headers = {"Idempotency-Key": idempotency_key} if idempotency_key else {}
        resp = self._call("POST", "/circuits", json=body, headers=headers)
        if resp.status_code == 409:
            raise EndpointBusy(resp.text)
        self._check(resp)
        return resp.json()["circuit_id"]

    def status(self, circuit_id: str) -> ProviderCircuit:
        resp = self._call("GET", f"/circuits/{circuit_id}")
        if resp.status_code == 404:
            raise UnknownCircuit(circuit_id)
        self._check(resp)
        d = resp.json()
        return ProviderCircuit(circuit_id, d["src_endpoint"], d["dst_endpoint"],
                               int(d["bandwidth_gbps"]), d["status"])

    def modify(self, circuit_id: str, bandwidth_gbps: int) -> None:
        resp = self._call("PATCH", f"/circuits/{circuit_id}", json={"bandwidth_gbps": bandwidth_gbps})
        if resp.status_code == 404:
            raise UnknownCircuit(circuit_id)
        self._check(resp)

    def teardown(self, circuit_id: str) -> None:
        resp = self._call("DELETE", f"/circuits/{circuit_id}")
        if resp.status_code == 404:
            raise UnknownCircuit(circuit_id)
        self._check(resp)


class HttpTransferTool(_Http, TransferTool):
    transient = ToolUnavailable

    def set_active(self, src_site: str, dst_site: str, n: int) -> None:
        resp = self._call("PUT", f"/links/{src_site}/{dst_site}/active", json={"active": n})
        self._check(resp)

    def job_stats(self, rule_id: str) -> JobStats:
        resp = self._call("GET", f"/jobs/{rule_id}")
        if resp.status_code == 404:
            raise UnknownRule(rule_id)
        self._check(resp)
        d = resp.json()
        return JobStats(rule_id, int(d.get("finished", 0)), int(d.get("failed", 0)),
                        int(d.get("retried", 0)), float(d.get("avg_file_throughput", 0.0)))


class HttpMetricsSource(_Http, MetricsSource):
    transient = NoData

    def throughput(self, endpoint: str, window_s: float) -> float:
        resp = self._call("GET", "/throughput", params={"endpoint": endpoint, "window": window_s})
        if resp.status_code == 404:
            raise NoData(endpoint)
        self._check(resp)
        return float(resp.json()["gbps"])
