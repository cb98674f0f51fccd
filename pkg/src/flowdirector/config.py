"""Service configuration.

One YAML (or JSON) document. Sites carry their capacity, endpoint names and
per-peer round-trip times::

    sites:
      T2_US_UCSD:
        capacity_gbps: 400
        endpoints: [ucsd-ep1, ucsd-ep2]
        T2_US_Caltech: {rtt_ms: 5}
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Optional

import yaml

from flowdirector.model import Endpoint, Site


class ConfigError(ValueError):
    pass


@dataclass
class StoreConfig:
    path: str = "flowdirector.db"


@dataclass
class AllocatorConfig:
    granularity_gbps: int = 5


@dataclass
class TuningConfig:
    per_transfer_cap_gbps: float = 2.0
    window_gbit: float = 0.5
    min_active: int = 2
    max_active: int = 500


@dataclass
class OrchestratorConfig:
    poll_interval: float = 10.0
    reuse_window_s: float = 600.0
    max_retries: int = 3
    backoff_initial_s: float = 1.0
    backoff_factor: float = 2.0
    backoff_cap_s: float = 60.0
    default_rtt_ms: float = 50.0


@dataclass
class MonitorConfig:
    threshold: float = 0.8
    window: int = 3
    idle_epsilon: float = 0.01
    sample_window_s: float = 60.0


@dataclass
class MockConfig:
    provision_delay: float = 2.0


@dataclass
class AdaptersConfig:
    mode: str = "mock"
    rule_source_url: str = ""
    circuit_provider_url: str = ""
    transfer_tool_url: str = ""
    metrics_url: str = ""


@dataclass
class ApiConfig:
    listen: str = "127.0.0.1:8080"


@dataclass
class SiteConfig:
    name: str
    capacity_gbps: int
    endpoints: list[str] = field(default_factory=list)
    rtt_ms: dict[str, float] = field(default_factory=dict)

    def to_site(self) -> Site:
        return Site(self.name, self.capacity_gbps,
                    tuple(Endpoint(e, self.name) for e in sorted(self.endpoints)))


@dataclass
class Config:
    store: StoreConfig = field(default_factory=StoreConfig)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    mock: MockConfig = field(default_factory=MockConfig)
    adapters: AdaptersConfig = field(default_factory=AdaptersConfig)
    api: ApiConfig = field(default_factory=ApiConfig)
    sites: list[SiteConfig] = field(default_factory=list)

    def rtt_ms(self, a: str, b: str) -> float:
        for s in self.sites:
            if s.name == a and b in s.rtt_ms:
                return s.rtt_ms[b]
            if s.name == b and a in s.rtt_ms:
                return s.rtt_ms[a]
        return self.orchestrator.default_rtt_ms

    def site(self, name: str) -> Optional[SiteConfig]:
        return next((s for s in self.sites if s.name == name), None)


def _section(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown key")
        kwargs[key] = value
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    for f in fields(obj):
        default = getattr(cls(), f.name) if not is_dataclass(f.type) else None
        value = getattr(obj, f.name)
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{where}.{f.name}: expected a number, got {value!r}")
    return obj


def _sites(data: Any) -> list[SiteConfig]:
    if data is None:
        return []
    if not isinstance(data, dict):
        raise ConfigError("sites: expected a mapping of site name to settings")
    out = []
    for name, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"sites.{name}: expected a mapping")
        if "capacity_gbps" not in body:
            raise ConfigError(f"sites.{name}.capacity_gbps: required")
        cap = body["capacity_gbps"]
        if not isinstance(cap, int) or cap < 0:
            raise ConfigError(f"sites.{name}.capacity_gbps: expected a non-negative integer")
        endpoints = body.get("endpoints", [])
        if isinstance(endpoints, int):
            endpoints = [f"{name.lower()}-ep{i + 1}" for i in range(endpoints)]
        rtt = {}
        for peer, v in body.items():
            if peer in ("capacity_gbps", "endpoints"):
                continue
            if not isinstance(v, dict) or "rtt_ms" not in v:
                raise ConfigError(f"sites.{name}.{peer}: expected {{rtt_ms: <number>}}")
            rtt[peer] = float(v["rtt_ms"])
        out.append(SiteConfig(name, cap, list(endpoints), rtt))
    names = [ep for s in out for ep in s.endpoints]
    if len(names) != len(set(names)):
        raise ConfigError("sites: endpoint names must be unique")
    return out


def config_from_dict(data: dict) -> Config:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping at top level")
    sections = {f.name: f for f in fields(Config)}
    for key in data:
        if key not in sections:
            raise ConfigError(f"{key}: unknown config section")
    cfg = Config(sites=_sites(data.get("sites")))
    for name in ("store", "allocator", "tuning", "orchestrator", "monitor", "mock", "adapters", "api"):
        cls = type(getattr(cfg, name))
        setattr(cfg, name, _section(cls, data.get(name), name))
    if cfg.adapters.mode not in ("mock", "http"):
        raise ConfigError("adapters.mode: expected 'mock' or 'http'")
    if cfg.allocator.granularity_gbps < 1:
        raise ConfigError("allocator.granularity_gbps: must be >= 1")
    return cfg


def load_document(path: str) -> Any:
    """Parse a YAML/JSON file, turning syntax errors into a line-numbered ConfigError."""
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: {where}: {exc.problem}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc


def load_config(path: str) -> Config:
    return config_from_dict(load_document(path))
