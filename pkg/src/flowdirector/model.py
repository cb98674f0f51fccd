"""Domain types and the rule state machine."""

from __future__ import annotations

import enum
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional, Protocol


class RuleState(str, enum.Enum):
    INITIALIZED = "INITIALIZED"
    ALLOCATED = "ALLOCATED"
    DECIDED = "DECIDED"
    PROVISIONING = "PROVISIONING"
    PROVISIONED = "PROVISIONED"
    MODIFYING = "MODIFYING"
    FINISHED = "FINISHED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"


class CircuitStatus(str, enum.Enum):
    PENDING = "PENDING"
    ACTIVE = "ACTIVE"
    STALE = "STALE"
    TORN_DOWN = "TORN_DOWN"


S = RuleState

TERMINAL_STATES = frozenset({S.FINISHED, S.CANCELLED})
# FAILED parks a rule; it can still be retried or cancelled
NON_TERMINAL_STATES = frozenset(s for s in RuleState if s not in TERMINAL_STATES)

_FORWARD = {
    (S.INITIALIZED, S.ALLOCATED),
    (S.ALLOCATED, S.DECIDED),
    (S.DECIDED, S.PROVISIONING),
    (S.PROVISIONING, S.PROVISIONED),
    (S.PROVISIONED, S.MODIFYING),
    (S.MODIFYING, S.PROVISIONED),
    (S.PROVISIONED, S.FINISHED),
    (S.FAILED, S.INITIALIZED),
}

LEGAL_TRANSITIONS: frozenset[tuple[RuleState, RuleState]] = frozenset(
    _FORWARD
    | {(s, S.FAILED) for s in NON_TERMINAL_STATES if s is not S.FAILED}
    | {(s, S.CANCELLED) for s in NON_TERMINAL_STATES}
)

# states in which a rule holds a bandwidth allocation
ALLOCATION_STATES = frozenset({S.DECIDED, S.PROVISIONING, S.PROVISIONED, S.MODIFYING})
# states in which a rule is bound to endpoints
ENDPOINT_STATES = frozenset({S.ALLOCATED, S.DECIDED, S.PROVISIONING, S.PROVISIONED, S.MODIFYING})


def can_transition(current: RuleState, target: RuleState) -> bool:
    return (current, target) in LEGAL_TRANSITIONS


class IllegalTransition(Exception):
    def __init__(self, current: RuleState, target: RuleState):
        super().__init__(f"illegal transition {current.value} -> {target.value}")
        self.current = current
        self.target = target


class ConflictError(Exception):
    """Another writer changed the row first; re-read and retry."""


class UnknownRule(KeyError):
    pass


class Clock(Protocol):
    def now_ms(self) -> int: ...


class SystemClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class VirtualClock:
    """Manually advanced clock; time only moves when the simulator ticks."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> int:
        self._now += ms
        return self._now

    @property
    def seconds(self) -> float:
        return self._now / 1000


@dataclass(frozen=True)
class Endpoint:
    name: str
    site: str
    in_use_by: Optional[str] = None


@dataclass(frozen=True)
class Site:
    name: str
    port_capacity: int
    endpoints: tuple[Endpoint, ...] = ()

    def __post_init__(self):
        if self.port_capacity < 0:
            raise ValueError(f"site {self.name}: port_capacity must be >= 0")
        names = [e.name for e in self.endpoints]
        if len(names) != len(set(names)):
            raise ValueError(f"site {self.name}: duplicate endpoint names")


@dataclass(frozen=True)
class TransferRule:
    rule_id: str
    src: str
    dst: str
    priority: int
    total_bytes: int = 0
    state: RuleState = RuleState.INITIALIZED
    src_endpoint: Optional[str] = None
    dst_endpoint: Optional[str] = None
    allocated_gbps: int = 0
    circuit_id: Optional[str] = None
    created_at: int = 0
    updated_at: int = 0
    # bookkeeping used by the daemons
    needs_decision: bool = False
    completion_pending: bool = False
    attempts: int = 0
    next_attempt_at: int = 0

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"rule {self.rule_id}: src and dst must differ")
        if self.priority < 1:
            raise ValueError(f"rule {self.rule_id}: priority must be >= 1")
        if self.total_bytes < 0:
            raise ValueError(f"rule {self.rule_id}: total_bytes must be >= 0")
        if self.allocated_gbps < 0:
            raise ValueError(f"rule {self.rule_id}: allocated_gbps must be >= 0")
        if isinstance(self.state, str):
            object.__setattr__(self, "state", RuleState(self.state))

    def evolve(self, **changes) -> TransferRule:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state"] = self.state.value
        return d


@dataclass(frozen=True)
class Circuit:
    circuit_id: str
    src_endpoint: str
    dst_endpoint: str
    bandwidth_gbps: int
    status: CircuitStatus = CircuitStatus.PENDING
    stale_since: Optional[int] = None
    src_site: str = ""
    dst_site: str = ""

    def __post_init__(self):
        if isinstance(self.status, str):
            object.__setattr__(self, "status", CircuitStatus(self.status))
        if (self.status is CircuitStatus.STALE) != (self.stale_since is not None):
            raise ValueError(f"circuit {self.circuit_id}: stale_since set iff STALE")

    @property
    def live(self) -> bool:
        return self.status is not CircuitStatus.TORN_DOWN

    def evolve(self, **changes) -> Circuit:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.value
        return d


@dataclass(frozen=True)
class FlowSample:
    rule_id: str
    t: int
    observed_gbps: float
    allocated_gbps: int
    idle: bool = False


@dataclass(frozen=True)
class JobStats:
    rule_id: str
    finished: int = 0
    failed: int = 0
    retried: int = 0
    avg_file_throughput: float = 0.0


class Verdict(str, enum.Enum):
    HEALTHY = "HEALTHY"
    UNDERPERFORMING = "UNDERPERFORMING"
    IDLE = "IDLE"


@dataclass(frozen=True)
class FlowReport:
    rule_id: str
    t_start: int
    t_end: int
    mean_observed_gbps: float
    allocated_gbps: int
    efficiency: float
    job_stats: JobStats
    verdict: Verdict
    n_samples: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        d["window"] = [self.t_start, self.t_end]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FlowReport:
        d = dict(d)
        d.pop("window", None)
        d["job_stats"] = JobStats(**d["job_stats"])
        d["verdict"] = Verdict(d["verdict"])
        return cls(**d)
