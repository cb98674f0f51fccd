from flowdirector.adapters.base import (
    AdapterError,
    CircuitProvider,
    CircuitRequest,
    EndpointBusy,
    EventKind,
    MetricsSource,
    NoData,
    ProviderCircuit,
    ProviderError,
    RuleEvent,
    RuleMetadata,
    RuleSource,
    SourceUnavailable,
    ToolUnavailable,
    TransferTool,
    TransientError,
    UnknownCircuit,
    UnknownSite,
)
from flowdirector.adapters.mock import (
    Faults,
    MockCircuitProvider,
    MockMetricsSource,
    MockRuleSource,
    MockTransferTool,
)

__all__ = [
    "AdapterError", "CircuitProvider", "CircuitRequest", "EndpointBusy", "EventKind",
    "Faults", "MetricsSource", "MockCircuitProvider", "MockMetricsSource", "MockRuleSource",
    "MockTransferTool", "NoData", "ProviderCircuit", "ProviderError", "RuleEvent",
    "RuleMetadata", "RuleSource", "SourceUnavailable", "ToolUnavailable", "TransferTool",
    "TransientError", "UnknownCircuit", "UnknownSite",
]
