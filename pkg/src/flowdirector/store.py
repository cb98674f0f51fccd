"""SQLite-backed persistent state.

Every rule, circuit and endpoint binding lives here so that the service can be
killed at any point and resumed from the last commit. State transitions are
compare-and-swap on ``(rule_id, state)``.
"""

from __future__ import annotations

import json
import logging
import os
import sqlite3
import threading
from contextlib import contextmanager
from typing import Iterable, Iterator, Optional

from flowdirector.model import (
    Circuit,
    CircuitStatus,
    Clock,
    ConflictError,
    Endpoint,
    FlowReport,
    FlowSample,
    IllegalTransition,
    RuleState,
    Site,
    SystemClock,
    TransferRule,
    UnknownRule,
    can_transition,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE sites (name TEXT PRIMARY KEY, port_capacity INTEGER NOT NULL, ord INTEGER NOT NULL);
CREATE TABLE endpoints (
    name TEXT PRIMARY KEY,
    site TEXT NOT NULL REFERENCES sites(name),
    in_use_by TEXT
);
CREATE TABLE rules (
    rule_id TEXT PRIMARY KEY,
    src TEXT NOT NULL,
    dst TEXT NOT NULL,
    priority INTEGER NOT NULL,
    total_bytes INTEGER NOT NULL,
    state TEXT NOT NULL,
    src_endpoint TEXT,
    dst_endpoint TEXT,
    allocated_gbps INTEGER NOT NULL,
    circuit_id TEXT,
    created_at INTEGER NOT NULL,
    updated_at INTEGER NOT NULL,
    needs_decision INTEGER NOT NULL,
    completion_pending INTEGER NOT NULL,
    attempts INTEGER NOT NULL,
    next_attempt_at INTEGER NOT NULL
);
CREATE TABLE circuits (
    circuit_id TEXT PRIMARY KEY,
    src_endpoint TEXT NOT NULL,
    dst_endpoint TEXT NOT NULL,
    src_site TEXT NOT NULL,
    dst_site TEXT NOT NULL,
    bandwidth_gbps INTEGER NOT NULL,
    status TEXT NOT NULL,
    stale_since INTEGER
);
CREATE TABLE samples (
    rule_id TEXT NOT NULL,
    t INTEGER NOT NULL,
    observed_gbps REAL NOT NULL,
    allocated_gbps INTEGER NOT NULL,
    idle INTEGER NOT NULL
);
CREATE INDEX samples_rule ON samples(rule_id, t);
CREATE TABLE reports (rule_id TEXT PRIMARY KEY, body TEXT NOT NULL);
"""

_RULE_COLUMNS = (
    "rule_id", "src", "dst", "priority", "total_bytes", "state", "src_endpoint",
    "dst_endpoint", "allocated_gbps", "circuit_id", "created_at", "updated_at",
    "needs_decision", "completion_pending", "attempts", "next_attempt_at",
)
_CIRCUIT_COLUMNS = (
    "circuit_id", "src_endpoint", "dst_endpoint", "src_site", "dst_site",
    "bandwidth_gbps", "status", "stale_since",
)


class StorageCorrupt(Exception):
    """The store file exists but cannot be trusted. Never reinitialized silently."""


def _rule_from_row(row: sqlite3.Row) -> TransferRule:
    d = dict(row)
    d["state"] = RuleState(d["state"])
    d["needs_decision"] = bool(d["needs_decision"])
    d["completion_pending"] = bool(d["completion_pending"])
    return TransferRule(**d)


def _rule_to_row(rule: TransferRule) -> tuple:
    d = rule.to_dict()
    d["needs_decision"] = int(rule.needs_decision)
    d["completion_pending"] = int(rule.completion_pending)
    return tuple(d[c] for c in _RULE_COLUMNS)


def _circuit_from_row(row: sqlite3.Row) -> Circuit:
    return Circuit(**dict(row))


class Store:
    def __init__(self, path: str | os.PathLike, clock: Clock | None = None):
        self.path = os.fspath(path)
        self.clock = clock or SystemClock()
        self._local = threading.local()
        self._check_and_init()

    # -- connection handling ------------------------------------------------

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, timeout=30, isolation_level=None, check_same_thread=False)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA synchronous=FULL")
        return conn

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
            self._local.depth = 0
        return conn

    def _check_and_init(self) -> None:
        existed = os.path.exists(self.path) and os.path.getsize(self.path) > 0
        try:
            conn = self._conn()
            version = conn.execute("PRAGMA user_version").fetchone()[0]
            if existed:
                status = conn.execute("PRAGMA quick_check").fetchone()[0]
                if status != "ok":
                    raise StorageCorrupt(f"{self.path}: integrity check failed: {status}")
                if version != SCHEMA_VERSION:
                    raise StorageCorrupt(
                        f"{self.path}: schema version {version}, expected {SCHEMA_VERSION}")
            elif version == 0:
                conn.execute("BEGIN IMMEDIATE")
                conn.executescript(_SCHEMA)
                conn.execute(f"PRAGMA user_version={SCHEMA_VERSION}")
                conn.execute("COMMIT") if conn.in_transaction else None
        except sqlite3.DatabaseError as exc:
            self.close()
            raise StorageCorrupt(f"{self.path}: {exc}") from exc
        except StorageCorrupt:
            self.close()
            raise

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    @contextmanager
    def transaction(self) -> Iterator[sqlite3.Connection]:
        """Write transaction. Nested use joins the outer transaction."""
        conn = self._conn()
        if self._local.depth:
            self._local.depth += 1
            try:
                yield conn
            finally:
                self._local.depth -= 1
            return
        conn.execute("BEGIN IMMEDIATE")
        self._local.depth = 1
        try:
            yield conn
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        else:
            conn.execute("COMMIT")
        finally:
            self._local.depth = 0

    @contextmanager
    def read(self) -> Iterator[sqlite3.Connection]:
        """Consistent read snapshot."""
        conn = self._conn()
        if self._local.depth:
            yield conn
            return
        conn.execute("BEGIN")
        self._local.depth = 1
        try:
            yield conn
        finally:
            conn.execute("COMMIT")
            self._local.depth = 0

    # -- meta ---------------------------------------------------------------

    def get_meta(self, key: str, default: Optional[str] = None) -> Optional[str]:
        row = self._conn().execute("SELECT value FROM meta WHERE key=?", (key,)).fetchone()
        return row[0] if row else default

    def set_meta(self, key: str, value: str) -> None:
        with self.transaction() as conn:
            conn.execute("INSERT OR REPLACE INTO meta(key, value) VALUES (?, ?)", (key, value))

    # -- sites and endpoints ------------------------------------------------

    def put_site(self, site: Site) -> None:
        with self.transaction() as conn:
            row = conn.execute("SELECT ord FROM sites WHERE name=?", (site.name,)).fetchone()
            if row is None:
                ord_ = conn.execute("SELECT COALESCE(MAX(ord), -1) + 1 FROM sites").fetchone()[0]
                conn.execute("INSERT INTO sites(name, port_capacity, ord) VALUES (?, ?, ?)",
                             (site.name, site.port_capacity, ord_))
            else:
                conn.execute("UPDATE sites SET port_capacity=? WHERE name=?",
                             (site.port_capacity, site.name))
            for ep in site.endpoints:
                conn.execute("INSERT OR IGNORE INTO endpoints(name, site) VALUES (?, ?)",
                             (ep.name, site.name))

    def list_sites(self) -> list[Site]:
        with self.read() as conn:
            sites = conn.execute("SELECT name, port_capacity FROM sites ORDER BY ord").fetchall()
            eps = self.list_endpoints()
        return [Site(s["name"], s["port_capacity"], tuple(e for e in eps if e.site == s["name"]))
                for s in sites]

    def list_endpoints(self, site: Optional[str] = None) -> list[Endpoint]:
        q = "SELECT name, site, in_use_by FROM endpoints"
        args: tuple = ()
        if site is not None:
            q += " WHERE site=?"
            args = (site,)
        rows = self._conn().execute(q + " ORDER BY name", args).fetchall()
        return [Endpoint(r["name"], r["site"], r["in_use_by"]) for r in rows]

    def free_endpoints(self, site: str) -> list[str]:
        """Endpoints neither held by a rule nor bound to a live circuit."""
        rows = self._conn().execute(
            """SELECT name FROM endpoints e WHERE site=? AND in_use_by IS NULL
               AND NOT EXISTS (SELECT 1 FROM circuits c WHERE c.status != 'TORN_DOWN'
                               AND (c.src_endpoint = e.name OR c.dst_endpoint = e.name))
               ORDER BY name""", (site,)).fetchall()
        return [r[0] for r in rows]

    def release_endpoints(self, rule_id: str) -> None:
        with self.transaction() as conn:
            conn.execute("UPDATE endpoints SET in_use_by=NULL WHERE in_use_by=?", (rule_id,))

    # -- rules --------------------------------------------------------------

    def add_rule(self, rule: TransferRule) -> TransferRule:
        now = self.clock.now_ms()
        rule = rule.evolve(created_at=rule.created_at or now, updated_at=now)
        cols = ", ".join(_RULE_COLUMNS)
        marks = ", ".join("?" * len(_RULE_COLUMNS))
        with self.transaction() as conn:
            try:
                conn.execute(f"INSERT INTO rules({cols}) VALUES ({marks})", _rule_to_row(rule))
            except sqlite3.IntegrityError as exc:
                raise ConflictError(f"rule {rule.rule_id} already stored") from exc
        return rule

    def get_rule(self, rule_id: str) -> TransferRule:
        row = self._conn().execute("SELECT * FROM rules WHERE rule_id=?", (rule_id,)).fetchone()
        if row is None:
            raise UnknownRule(rule_id)
        return _rule_from_row(row)

    def find_rule(self, rule_id: str) -> Optional[TransferRule]:
        try:
            return self.get_rule(rule_id)
        except UnknownRule:
            return None

    def list_rules(self, states: Optional[Iterable[RuleState]] = None) -> list[TransferRule]:
        q = "SELECT * FROM rules"
        args: tuple = ()
        if states is not None:
            states = [RuleState(s).value for s in states]
            q += f" WHERE state IN ({', '.join('?' * len(states))})"
            args = tuple(states)
        rows = self._conn().execute(q + " ORDER BY created_at, rule_id", args).fetchall()
        return [_rule_from_row(r) for r in rows]

    def _cas_update(self, rule: TransferRule, new: TransferRule) -> TransferRule:
        new = new.evolve(updated_at=self.clock.now_ms())
        sets = ", ".join(f"{c}=?" for c in _RULE_COLUMNS[1:])
        with self.transaction() as conn:
            cur = conn.execute(
                f"UPDATE rules SET {sets} WHERE rule_id=? AND state=?",
                _rule_to_row(new)[1:] + (rule.rule_id, rule.state.value))
            if cur.rowcount != 1:
                raise ConflictError(f"rule {rule.rule_id} is no longer {rule.state.value}")
        return new

    def transition(self, rule: TransferRule, target: RuleState, **changes) -> TransferRule:
        """Move ``rule`` to ``target`` if it is still in ``rule.state``."""
        target = RuleState(target)
        if not can_transition(rule.state, target):
            raise IllegalTransition(rule.state, target)
        return self._cas_update(rule, rule.evolve(state=target, **changes))

    def update_rule(self, rule: TransferRule, **changes) -> TransferRule:
        """Change fields without a state change, guarded by the current state."""
        if "state" in changes:
            raise ValueError("use transition() to change state")
        return self._cas_update(rule, rule.evolve(**changes))

    def assign_endpoints(self, rule: TransferRule, src_endpoint: str, dst_endpoint: str,
                         circuit_id: Optional[str] = None) -> TransferRule:
        """Bind both endpoints and move INITIALIZED -> ALLOCATED in one commit."""
        with self.transaction() as conn:
            for ep in (src_endpoint, dst_endpoint):
                cur = conn.execute(
                    "UPDATE endpoints SET in_use_by=? WHERE name=? AND in_use_by IS NULL",
                    (rule.rule_id, ep))
                if cur.rowcount != 1:
                    raise ConflictError(f"endpoint {ep} already taken")
            return self.transition(rule, RuleState.ALLOCATED, src_endpoint=src_endpoint,
                                   dst_endpoint=dst_endpoint, circuit_id=circuit_id)

    # -- circuits -----------------------------------------------------------

    def put_circuit(self, circuit: Circuit) -> Circuit:
        cols = ", ".join(_CIRCUIT_COLUMNS)
        marks = ", ".join("?" * len(_CIRCUIT_COLUMNS))
        d = circuit.to_dict()
        with self.transaction() as conn:
            conn.execute(f"INSERT OR REPLACE INTO circuits({cols}) VALUES ({marks})",
                         tuple(d[c] for c in _CIRCUIT_COLUMNS))
        return circuit

    def get_circuit(self, circuit_id: str) -> Optional[Circuit]:
        row = self._conn().execute("SELECT * FROM circuits WHERE circuit_id=?",
                                   (circuit_id,)).fetchone()
        return _circuit_from_row(row) if row else None

    def list_circuits(self, statuses: Optional[Iterable[CircuitStatus]] = None) -> list[Circuit]:
        q = "SELECT * FROM circuits"
        args: tuple = ()
        if statuses is not None:
            statuses = [CircuitStatus(s).value for s in statuses]
            q += f" WHERE status IN ({', '.join('?' * len(statuses))})"
            args = tuple(statuses)
        rows = self._conn().execute(q + " ORDER BY circuit_id", args).fetchall()
        return [_circuit_from_row(r) for r in rows]

    def site_usage(self) -> dict[str, int]:
        """Sum of live circuit bandwidth touching each site."""
        usage = {s.name: 0 for s in self.list_sites()}
        for c in self.list_circuits([CircuitStatus.PENDING, CircuitStatus.ACTIVE,
                                     CircuitStatus.STALE]):
            usage[c.src_site] = usage.get(c.src_site, 0) + c.bandwidth_gbps
            usage[c.dst_site] = usage.get(c.dst_site, 0) + c.bandwidth_gbps
        return usage

    # -- samples and reports ------------------------------------------------

    def add_sample(self, sample: FlowSample) -> None:
        with self.transaction() as conn:
            conn.execute("INSERT INTO samples VALUES (?, ?, ?, ?, ?)",
                         (sample.rule_id, sample.t, sample.observed_gbps,
                          sample.allocated_gbps, int(sample.idle)))

    def samples(self, rule_id: str) -> list[FlowSample]:
        rows = self._conn().execute(
            "SELECT * FROM samples WHERE rule_id=? ORDER BY t, rowid", (rule_id,)).fetchall()
        return [FlowSample(r["rule_id"], r["t"], r["observed_gbps"], r["allocated_gbps"],
                           bool(r["idle"])) for r in rows]

    def put_report(self, report: FlowReport) -> None:
        with self.transaction() as conn:
            conn.execute("INSERT OR REPLACE INTO reports(rule_id, body) VALUES (?, ?)",
                         (report.rule_id, json.dumps(report.to_dict(), sort_keys=True)))

    def get_report(self, rule_id: str) -> Optional[FlowReport]:
        row = self._conn().execute("SELECT body FROM reports WHERE rule_id=?",
                                   (rule_id,)).fetchone()
        return FlowReport.from_dict(json.loads(row[0])) if row else None

    def report_ids(self) -> list[str]:
        return [r[0] for r in self._conn().execute("SELECT rule_id FROM reports ORDER BY rule_id")]

    # -- whole-state views --------------------------------------------------

    def snapshot(self) -> dict:
        """Canonical dump of every table, taken inside one read transaction."""
        with self.read() as conn:
            out = {}
            for table, order in (("meta", "key"), ("sites", "ord"), ("endpoints", "name"),
                                 ("rules", "rule_id"), ("circuits", "circuit_id"),
                                 ("samples", "rowid"), ("reports", "rule_id")):
                rows = conn.execute(f"SELECT * FROM {table} ORDER BY {order}").fetchall()
                out[table] = [dict(r) for r in rows]
        return out
