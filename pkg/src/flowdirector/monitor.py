"""Throughput sampling, underperformance detection and per-rule flow reports."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

from flowdirector.adapters.base import AdapterError, MetricsSource, TransferTool
from flowdirector.config import MonitorConfig
from flowdirector.model import (
    Clock,
    FlowReport,
    FlowSample,
    JobStats,
    RuleState,
    UnknownRule,
    Verdict,
)
from flowdirector.store import Store

log = logging.getLogger(__name__)

SAMPLED_STATES = (RuleState.PROVISIONED, RuleState.MODIFYING)
REPORTED_STATES = (RuleState.PROVISIONED, RuleState.MODIFYING, RuleState.FINISHED)


class InsufficientData(Exception):
    pass


def classify(samples: Sequence[FlowSample], threshold: float = 0.8, window: int = 3,
             idle_epsilon: float = 0.01) -> Verdict:
    """Verdict from the last ``window`` samples."""
    if len(samples) < window:
        raise InsufficientData(f"need {window} samples, have {len(samples)}")
    tail = samples[-window:]
    if all(s.observed_gbps < idle_epsilon * s.allocated_gbps or s.observed_gbps == 0 for s in tail):
        return Verdict.IDLE
    if all(s.observed_gbps < threshold * s.allocated_gbps for s in tail):
        return Verdict.UNDERPERFORMING
    return Verdict.HEALTHY


class Monitor:
    def __init__(self, store: Store, metrics: MetricsSource, transfer_tool: TransferTool,
                 config: MonitorConfig, clock: Clock, orchestrator=None):
        self.store = store
        self.metrics = metrics
        self.transfer_tool = transfer_tool
        self.config = config
        self.clock = clock
        self.orchestrator = orchestrator

    def detect(self, rule_id: str, threshold: Optional[float] = None,
               window: Optional[int] = None) -> Verdict:
        c = self.config
        return classify(self.store.samples(rule_id),
                        c.threshold if threshold is None else threshold,
                        c.window if window is None else window, c.idle_epsilon)

    def sample(self) -> list[FlowSample]:
        """One sample per flowing rule, then remediation and report refresh."""
        now = self.clock.now_ms()
        taken = []
        for rule in self.store.list_rules(SAMPLED_STATES):
            try:
                observed, idle = self.metrics.throughput(rule.src_endpoint, self.config.sample_window_s), False
            except AdapterError:
                observed, idle = 0.0, True
            s = FlowSample(rule.rule_id, now, observed, rule.allocated_gbps, idle)
            self.store.add_sample(s)
            taken.append(s)
            self._remediate(rule)
        self.refresh_reports()
        return taken

    def _remediate(self, rule) -> None:
        key = f"remediated:{rule.rule_id}"
        try:
            verdict = self.detect(rule.rule_id)
        except InsufficientData:
            return
        if verdict is Verdict.UNDERPERFORMING:
            if self.store.get_meta(key) != "1":
                log.warning("rule %s underperforming; doubling active transfers", rule.rule_id)
                if self.orchestrator is not None:
                    self.orchestrator.tune_pair(rule.src, rule.dst, factor=2)
                self.store.set_meta(key, "1")
        elif self.store.get_meta(key) == "1":
            self.store.set_meta(key, "0")

    def build_report(self, rule_id: str) -> FlowReport:
        rule = self.store.find_rule(rule_id)
        if rule is None:
            raise UnknownRule(rule_id)
        samples = self.store.samples(rule_id)
        try:
            stats = self.transfer_tool.job_stats(rule_id)
        except (UnknownRule, AdapterError):
            stats = JobStats(rule_id)
        if samples:
            observed = sum(s.observed_gbps for s in samples)
            allocated = sum(s.allocated_gbps for s in samples)
            mean = observed / len(samples)
            efficiency = observed / allocated if allocated else 0.0
            t0, t1 = samples[0].t, samples[-1].t
            last_alloc = samples[-1].allocated_gbps
            window = min(self.config.window, len(samples))
            verdict = classify(samples, self.config.threshold, window, self.config.idle_epsilon)
        else:
            mean = efficiency = 0.0
            t0 = t1 = rule.updated_at
            last_alloc = rule.allocated_gbps
            verdict = Verdict.IDLE
        return FlowReport(rule_id, t0, t1, mean, last_alloc, efficiency, stats, verdict, len(samples))

    def refresh_reports(self) -> None:
        """Persist a report for every flowing rule and every finished rule lacking one."""
        for rule in self.store.list_rules(REPORTED_STATES):
            final_key = f"report_final:{rule.rule_id}"
            if rule.state is RuleState.FINISHED:
                if self.store.get_meta(final_key) == "1":
                    continue
                report = self.build_report(rule.rule_id)
                with self.store.transaction():
                    self.store.put_report(report)
                    self.store.set_meta(final_key, "1")
            else:
                self.store.put_report(self.build_report(rule.rule_id))

    def report(self, rule_id: str) -> FlowReport:
        rule = self.store.find_rule(rule_id)
        if rule is None:
            raise UnknownRule(rule_id)
        stored = self.store.get_report(rule_id)
        if stored is not None and rule.state is RuleState.FINISHED:
            return stored
        return self.build_report(rule_id)
