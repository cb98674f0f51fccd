"""Contracts for the external systems the orchestrator talks to."""

from __future__ import annotations

import abc
import enum
from dataclasses import dataclass
from typing import Optional

from flowdirector.model import Endpoint, JobStats


class AdapterError(Exception):
    pass


class TransientError(AdapterError):
    """Retryable; the caller backs off and tries again."""


class SourceUnavailable(TransientError):
    pass


class ProviderError(TransientError):
    pass


class ToolUnavailable(TransientError):
    pass


class UnknownSite(AdapterError):
    pass


class EndpointBusy(AdapterError):
    pass


class UnknownCircuit(AdapterError):
    pass


class NoData(AdapterError):
    pass


class EventKind(str, enum.Enum):
    NEW = "NEW"
    PRIORITY_CHANGED = "PRIORITY_CHANGED"
    COMPLETED = "COMPLETED"
    DELETED = "DELETED"


@dataclass(frozen=True)
class RuleMetadata:
    rule_id: str
    sources: tuple[str, ...]
    destinations: tuple[str, ...]
    priority: int
    total_bytes: int = 0

    @property
    def point_to_point(self) -> bool:
        return len(self.sources) == 1 and len(self.destinations) == 1

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "sources": list(self.sources),
                "destinations": list(self.destinations), "priority": self.priority,
                "total_bytes": self.total_bytes}

    @classmethod
    def from_dict(cls, d: dict) -> RuleMetadata:
        return cls(d["rule_id"], tuple(d["sources"]), tuple(d["destinations"]),
                   int(d["priority"]), int(d.get("total_bytes", 0)))


@dataclass(frozen=True)
class RuleEvent:
    kind: EventKind
    rule_id: str
    metadata: Optional[RuleMetadata] = None
    priority: Optional[int] = None

    def __post_init__(self):
        if self.kind is EventKind.NEW and self.metadata is None:
            raise ValueError("NEW events carry rule metadata")
        if self.kind is EventKind.PRIORITY_CHANGED and (self.priority is None or self.priority < 1):
            raise ValueError("PRIORITY_CHANGED needs a priority >= 1")

    @classmethod
    def new(cls, rule_id: str, src: str, dst: str, priority: int, total_bytes: int = 0) -> RuleEvent:
        return cls(EventKind.NEW, rule_id, RuleMetadata(rule_id, (src,), (dst,), priority, total_bytes))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value, "rule_id": self.rule_id}
        if self.metadata is not None:
            d["metadata"] = self.metadata.to_dict()
        if self.priority is not None:
            d["priority"] = self.priority
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RuleEvent:
        meta = d.get("metadata")
        return cls(EventKind(d["kind"]), d["rule_id"],
                   RuleMetadata.from_dict(meta) if meta else None, d.get("priority"))


@dataclass(frozen=True)
class CircuitRequest:
    src_endpoint: str
    dst_endpoint: str
    bandwidth_gbps: int


@dataclass(frozen=True)
class ProviderCircuit:
    """The provider's own view of a circuit: PENDING, ACTIVE or TORN_DOWN."""

    circuit_id: str
    src_endpoint: str
    dst_endpoint: str
    bandwidth_gbps: int
    status: str


class RuleSource(abc.ABC):
    @abc.abstractmethod
    def poll(self) -> list[RuleEvent]:
        """Events since the previous successful poll, each delivered once."""


class CircuitProvider(abc.ABC):
    @abc.abstractmethod
    def list_endpoints(self, site: str) -> list[Endpoint]: ...

    @abc.abstractmethod
    def create(self, req: CircuitRequest, idempotency_key: Optional[str] = None) -> str: ...

    @abc.abstractmethod
    def status(self, circuit_id: str) -> ProviderCircuit: ...

    @abc.abstractmethod
    def modify(self, circuit_id: str, bandwidth_gbps: int) -> None: ...

    @abc.abstractmethod
    def teardown(self, circuit_id: str) -> None: ...


class TransferTool(abc.ABC):
    @abc.abstractmethod
    def set_active(self, src_site: str, dst_site: str, n: int) -> None: ...

    @abc.abstractmethod
    def job_stats(self, rule_id: str) -> JobStats: ...


class MetricsSource(abc.ABC):
    @abc.abstractmethod
    def throughput(self, endpoint: str, window_s: float) -> float:
        """Mean rate over the trailing window in Gbps; NoData if the endpoint is unknown."""
