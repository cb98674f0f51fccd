import json

import httpx
import pytest

from flowdirector.adapters import (
    AdapterError,
    CircuitRequest,
    EndpointBusy,
    EventKind,
    MockCircuitProvider,
    MockMetricsSource,
    MockRuleSource,
    MockTransferTool,
    NoData,
    ProviderError,
    RuleEvent,
    SourceUnavailable,
    ToolUnavailable,
    UnknownCircuit,
    UnknownSite,
)
from flowdirector.adapters.http import (
    HttpCircuitProvider,
    HttpMetricsSource,
    HttpRuleSource,
    HttpTransferTool,
)
from flowdirector.model import UnknownRule, VirtualClock


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def provider(clock):
    return MockCircuitProvider(clock, {"A": ["a1", "a2"], "B": ["b1"]}, provision_delay_ms=2000)


def test_rule_source_delivers_due_events_once(clock):
    src = MockRuleSource(clock, [(1000, RuleEvent.new("r1", "A", "B", 3))])
    assert src.poll() == []
    clock.advance(1000)
    assert [e.rule_id for e in src.poll()] == ["r1"]
    assert src.poll() == []


def test_failed_poll_loses_nothing(clock):
    src = MockRuleSource(clock)
    src.push(RuleEvent.new("r1", "A", "B", 3))
    src.faults.inject("poll", 2)
    for _ in range(2):
        with pytest.raises(SourceUnavailable):
            src.poll()
    assert [e.rule_id for e in src.poll()] == ["r1"]


def test_event_validation_and_round_trip():
    with pytest.raises(ValueError):
        RuleEvent(EventKind.NEW, "r1")
    with pytest.raises(ValueError):
        RuleEvent(EventKind.PRIORITY_CHANGED, "r1", priority=0)
    ev = RuleEvent.new("r1", "A", "B", 3, 10)
    assert RuleEvent.from_dict(json.loads(json.dumps(ev.to_dict()))) == ev


def test_circuit_lifecycle(clock, provider):
    cid = provider.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    assert provider.status(cid).status == "PENDING"
    clock.advance(2000)
    assert provider.status(cid).status == "ACTIVE"
    provider.modify(cid, 70)
    assert provider.status(cid).bandwidth_gbps == 70
    provider.teardown(cid)
    with pytest.raises(UnknownCircuit):
        provider.status(cid)
    with pytest.raises(UnknownCircuit):
        provider.modify(cid, 5)


def test_create_is_idempotent(provider):
    a = provider.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    b = provider.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    assert a == b
    assert provider.count("create") == 2 and provider.circuits_created("r1") == 1


def test_endpoint_exclusivity(provider):
    provider.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    with pytest.raises(EndpointBusy):
        provider.create(CircuitRequest("a2", "b1", 50), idempotency_key="r2")


def test_inventory_errors(provider):
    assert [e.name for e in provider.list_endpoints("A")] == ["a1", "a2"]
    with pytest.raises(UnknownSite):
        provider.list_endpoints("Z")
    with pytest.raises(UnknownSite):
        provider.create(CircuitRequest("zz", "b1", 5))
    with pytest.raises(ProviderError):
        provider.create(CircuitRequest("a1", "a2", 5))


@pytest.mark.parametrize("op", ["create", "status", "modify", "teardown"])
def test_provider_fault_injection(clock, provider, op):
    cid = provider.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    provider.faults.inject(op, 1)
    call = {"create": lambda: provider.create(CircuitRequest("a1", "b1", 50), "r1"),
            "status": lambda: provider.status(cid),
            "modify": lambda: provider.modify(cid, 10),
            "teardown": lambda: provider.teardown(cid)}[op]
    with pytest.raises(ProviderError):
        call()
    call()  # second call goes through


def test_transfer_tool(clock):
    tool = MockTransferTool(clock)
    with pytest.raises(UnknownRule):
        tool.job_stats("r1")
    tool.register("r1")
    tool.record("r1", finished=3, avg_file_throughput=1.5)
    tool.record("r1", failed=1, retried=1)
    s = tool.job_stats("r1")
    assert (s.finished, s.failed, s.retried, s.avg_file_throughput) == (3, 1, 1, 1.5)
    tool.set_active("A", "B", 7)
    assert tool.active[("A", "B")] == 7
    with pytest.raises(ValueError):
        tool.set_active("A", "B", 0)
    tool.faults.inject("set_active")
    with pytest.raises(ToolUnavailable):
        tool.set_active("A", "B", 3)


def test_metrics_window(clock):
    m = MockMetricsSource(clock, ["a1"])
    assert m.throughput("a1", 10) == 0.0
    with pytest.raises(NoData):
        m.throughput("zz", 10)
    m.record("a1", 10.0, at_ms=1000)
    m.record("a1", 20.0, at_ms=2000)
    clock.advance(2000)
    assert m.throughput("a1", 1) == 20.0
    assert m.throughput("a1", 2) == 15.0


# -- HTTP clients against an in-process transport ---------------------------------


class FakeServices:
    def __init__(self):
        self.requests = []
        self.fail_next = 0

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if self.fail_next:
            self.fail_next -= 1
            return httpx.Response(503)
        path, method = request.url.path, request.method
        if path == "/rules":
            since = int(request.url.params["since"])
            events = [RuleEvent.new("r1", "A", "B", 3).to_dict()] if since == 0 else []
            return httpx.Response(200, json={"events": events, "next": 1})
        if path == "/endpoints/A":
            return httpx.Response(200, json={"endpoints": ["a1", "a2"]})
        if path.startswith("/endpoints/"):
            return httpx.Response(404)
        if path == "/circuits" and method == "POST":
            body = json.loads(request.content)
            if body["src_endpoint"] == "busy":
                return httpx.Response(409, text="busy")
            if body["bandwidth_gbps"] < 0:
                return httpx.Response(400, text="bad bandwidth")
            return httpx.Response(201, json={"circuit_id": "c-" + request.headers["Idempotency-Key"]})
        if path == "/circuits/c-r1":
            if method == "GET":
                return httpx.Response(200, json={"src_endpoint": "a1", "dst_endpoint": "b1",
                                                 "bandwidth_gbps": 50, "status": "ACTIVE"})
            return httpx.Response(204)
        if path.startswith("/circuits/"):
            return httpx.Response(404)
        if path == "/links/A/B/active":
            return httpx.Response(204)
        if path == "/jobs/r1":
            return httpx.Response(200, json={"finished": 2, "failed": 1, "retried": 1,
                                             "avg_file_throughput": 0.5})
        if path.startswith("/jobs/"):
            return httpx.Response(404)
        if path == "/throughput":
            if request.url.params["endpoint"] == "a1":
                return httpx.Response(200, json={"gbps": 42.5})
            return httpx.Response(404)
        return httpx.Response(418)


@pytest.fixture
def fake():
    return FakeServices()


def client(fake):
    return httpx.Client(base_url="http://svc", transport=httpx.MockTransport(fake))


def test_http_rule_source_paging(fake):
    src = HttpRuleSource(client=client(fake))
    assert [e.rule_id for e in src.poll()] == ["r1"]
    assert src.poll() == []
    assert [r.url.params["since"] for r in fake.requests] == ["0", "1"]
    fake.fail_next = 1
    with pytest.raises(SourceUnavailable):
        src.poll()


def test_http_provider(fake):
    p = HttpCircuitProvider(client=client(fake))
    assert [e.name for e in p.list_endpoints("A")] == ["a1", "a2"]
    with pytest.raises(UnknownSite):
        p.list_endpoints("Z")
    cid = p.create(CircuitRequest("a1", "b1", 50), idempotency_key="r1")
    assert cid == "c-r1"
    assert fake.requests[-1].headers["Idempotency-Key"] == "r1"
    assert p.status(cid).status == "ACTIVE"
    p.modify(cid, 60)
    assert json.loads(fake.requests[-1].content) == {"bandwidth_gbps": 60}
    p.teardown(cid)
    assert fake.requests[-1].method == "DELETE"
    with pytest.raises(UnknownCircuit):
        p.status("c-zz")
    with pytest.raises(EndpointBusy):
        p.create(CircuitRequest("busy", "b1", 5), "r2")
    with pytest.raises(AdapterError):
        p.create(CircuitRequest("a1", "b1", -1), "r3")
    fake.fail_next = 1
    with pytest.raises(ProviderError):
        p.modify(cid, 5)


def test_http_provider_transport_error_is_transient():
    def boom(request):
        raise httpx.ConnectError("refused", request=request)
    p = HttpCircuitProvider(client=httpx.Client(base_url="http://svc", transport=httpx.MockTransport(boom)))
    with pytest.raises(ProviderError):
        p.status("c1")


def test_http_transfer_tool(fake):
    t = HttpTransferTool(client=client(fake))
    t.set_active("A", "B", 12)
    assert json.loads(fake.requests[-1].content) == {"active": 12}
    assert fake.requests[-1].method == "PUT"
    assert t.job_stats("r1").finished == 2
    with pytest.raises(UnknownRule):
        t.job_stats("zz")
    fake.fail_next = 1
    with pytest.raises(ToolUnavailable):
        t.set_active("A", "B", 3)


def test_http_metrics(fake):
    m = HttpMetricsSource(client=client(fake))
    assert m.throughput("a1", 60) == 42.5
    with pytest.raises(NoData):
        m.throughput("zz", 60)
