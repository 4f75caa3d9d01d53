"""Environment-state service: the attacker's partial, evolving view.

A :class:`KnowledgeBase` is fed exclusively by task events and answers the
enumerated structured queries. Facts are append-only within a trial; nothing
is ever deleted. The event log is exportable as newline-delimited JSON and
replaying it from an empty knowledge base reproduces every fact set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .netmodel import (
    Credential,
    Environment,
    Goal,
    GOAL_EXFILTRATE,
    GOAL_ROOT,
    ROOT,
    Service,
    USER,
    subnets_reachable_from,
)
from .tasks import (
    ESCALATE_PRIVILEGE,
    FIND_INFORMATION,
    OK,
    SCAN,
    TaskInvocation,
    TaskResult,
)

HOST_DISCOVERED = "HostDiscovered"
SERVICE_DISCOVERED = "ServiceDiscovered"
VULN_DISCOVERED = "VulnDiscovered"
CREDENTIAL_FOUND = "CredentialFound"
DATA_FOUND = "DataFound"
SESSION_ESTABLISHED = "SessionEstablished"
PRIVILEGE_ESCALATED = "PrivilegeEscalated"
DATA_EXFILTRATED = "DataExfiltrated"
TASK_ERROR = "TaskError"

EVENT_KINDS = (
    HOST_DISCOVERED,
    SERVICE_DISCOVERED,
    VULN_DISCOVERED,
    CREDENTIAL_FOUND,
    DATA_FOUND,
    SESSION_ESTABLISHED,
    PRIVILEGE_ESCALATED,
    DATA_EXFILTRATED,
    TASK_ERROR,
)

QUERY_KINDS = (
    "external_networks",
    "hosts_on_network",
    "infected_hosts",
    "known_vulns",
    "harvested_credentials",
    "known_data",
    "sessions",
    "goal_progress",
)

#: Required parameter names per query kind.
QUERY_PARAMS = {
    "external_networks": set(),
    "hosts_on_network": {"subnet"},
    "infected_hosts": set(),
    "known_vulns": {"host"},
    "harvested_credentials": set(),
    "known_data": {"unexfiltrated_only"},
    "sessions": {"host"},
    "goal_progress": set(),
}

DEFAULT_OBSERVATION_CAP = 8000


class ConsistencyError(ValueError):
    """An event referenced state the knowledge base has never seen."""


class QueryError(ValueError):
    """A query named an unknown kind, host or subnet."""


@dataclass(frozen=True)
class Query:
    kind: str
    params: tuple[tuple[str, str], ...] = ()

    @classmethod
    def make(cls, kind: str, **params: str) -> "Query":
        return cls(kind=kind, params=tuple(sorted((k, str(v)) for k, v in params.items())))

    def param(self, name: str) -> Optional[str]:
        for key, value in self.params:
            if key == name:
                return value
        return None

    def to_payload(self) -> dict[str, str]:
        payload = {"kind": self.kind}
        payload.update(dict(self.params))
        return payload

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "Query":
        kind = payload.get("kind")
        if kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {kind!r}")
        params = {k: v for k, v in payload.items() if k != "kind"}
        missing = QUERY_PARAMS[kind] - set(params)
        if missing:
            raise ValueError(f"{kind}: missing parameter {sorted(missing)[0]!r}")
        unknown = set(params) - QUERY_PARAMS[kind]
        if unknown:
            raise ValueError(f"{kind}: unknown parameter {sorted(unknown)[0]!r}")
        return cls.make(kind, **params)


@dataclass(frozen=True)
class EventRecord:
    sim_time: int
    task: Optional[TaskInvocation]
    kind: str
    payload: dict

    def to_json(self) -> str:
        doc = {
            "sim_time": self.sim_time,
            "task": None if self.task is None else self.task.to_payload(),
            "kind": self.kind,
            "payload": self.payload,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        doc = json.loads(line)
        task = doc.get("task")
        return cls(
            sim_time=int(doc["sim_time"]),
            task=None if task is None else TaskInvocation.from_payload(task),
            kind=doc["kind"],
            payload=doc["payload"],
        )


@dataclass(frozen=True)
class KnownData:
    asset: str
    host: str
    requires_root: bool
    size_units: int = 1


class KnowledgeBase:
    """Structured store of everything the red team has learned this trial.

    Single writer per trial (the orchestrator records between planner
    steps); reads may interleave freely between writes. Each trial gets its
    own instance.
    """

    def __init__(self, goals: Iterable[Goal] = ()) -> None:
        self.goals: tuple[Goal, ...] = tuple(goals)
        self.known_subnets: dict[str, Optional[bool]] = {}
        self.known_hosts: dict[str, Optional[str]] = {}
        self.known_services: dict[str, dict[int, Service]] = {}
        self.known_vulns: dict[str, dict[str, str]] = {}
        self.harvested_credentials: dict[str, Credential] = {}
        self.known_data: dict[str, KnownData] = {}
        self.sessions: set[tuple[str, str]] = set()
        self.exfiltrated: set[str] = set()
        self.event_log: list[EventRecord] = []
        # Attempt bookkeeping; not an event-derived fact set (a scan of an
        # empty subnet legitimately yields zero events) and excluded from
        # replay equality. Consumed by the attack graph to prune exhausted
        # exploration actions.
        self.scanned_pairs: set[tuple[str, str]] = set()
        self.searched: set[tuple[str, str]] = set()
        self.escalation_attempted: set[str] = set()

    # -- construction -------------------------------------------------------

    @classmethod
    def bootstrap(cls, env: Environment) -> "KnowledgeBase":
        """Initial view: the attacker's own host, subnet and root session."""
        kb = cls(goals=env.goals)
        attacker = env.host(env.attacker_host)
        kb._ingest(
            None,
            [
                (HOST_DISCOVERED, {"host": attacker.id, "subnet": attacker.subnet, "external": True}),
                (
                    SESSION_ESTABLISHED,
                    {
                        "host": attacker.id,
                        "privilege": ROOT,
                        "subnet": attacker.subnet,
                        "routes": list(subnets_reachable_from(env, attacker.id)),
                    },
                ),
            ],
            sim_time=0,
        )
        return kb

    @classmethod
    def replay(cls, events: Iterable[EventRecord], goals: Iterable[Goal] = ()) -> "KnowledgeBase":
        """Rebuild the fact sets by folding an exported event log."""
        kb = cls(goals=goals)
        for record in events:
            if record.sim_time < (kb.event_log[-1].sim_time if kb.event_log else 0):
                raise ConsistencyError("event log sim_time not nondecreasing")
            kb._fold(record.kind, record.payload)
            kb.event_log.append(record)
        return kb

    # -- recording ----------------------------------------------------------

    def record(self, result: TaskResult, sim_time: int) -> "KnowledgeBase":
        """Fold a task result into the fact sets and append to the log.

        Folding is idempotent per fact; the log keeps every event. Failed
        tasks carry exactly one TaskError event.
        """
        if self.event_log and sim_time < self.event_log[-1].sim_time:
            raise ConsistencyError("sim_time must be nondecreasing")
        self._ingest(result.invocation, result.events, sim_time)
        self._note_attempt(result)
        return self

    def _ingest(self, task: Optional[TaskInvocation], events: Iterable[tuple[str, dict]], sim_time: int) -> None:
        for kind, payload in events:
            self._fold(kind, payload)
            self.event_log.append(EventRecord(sim_time=sim_time, task=task, kind=kind, payload=payload))

    def _note_attempt(self, result: TaskResult) -> None:
        inv = result.invocation
        if inv.kind == SCAN and result.status == OK:
            self.scanned_pairs.add((inv.param("source"), inv.param("subnet")))
        elif inv.kind == FIND_INFORMATION and result.status == OK:
            host = inv.param("host")
            # A root-level search sees everything a user-level one would.
            self.searched.add((host, USER))
            if (host, ROOT) in self.sessions:
                self.searched.add((host, ROOT))
        elif inv.kind == ESCALATE_PRIVILEGE:
            # A failed escalation is permanent: local vulns are static.
            self.escalation_attempted.add(inv.param("host"))

    def _fold(self, kind: str, payload: dict) -> None:
        if kind == HOST_DISCOVERED:
            host, subnet = payload["host"], payload.get("subnet")
            if self.known_hosts.get(host) is None:
                self.known_hosts[host] = subnet
            if subnet is not None:
                external = payload.get("external")
                if subnet not in self.known_subnets or self.known_subnets[subnet] is None:
                    self.known_subnets[subnet] = external
        elif kind == SERVICE_DISCOVERED:
            host = payload["host"]
            self.known_hosts.setdefault(host, None)
            svc = Service(
                protocol=payload["protocol"],
                port=int(payload["port"]),
                vuln=payload.get("vuln"),
                banner=payload.get("banner", ""),
            )
            self.known_services.setdefault(host, {})[svc.port] = svc
        elif kind == VULN_DISCOVERED:
            host = payload["host"]
            self.known_hosts.setdefault(host, None)
            self.known_vulns.setdefault(host, {})[payload["vuln"]] = payload["kind"]
        elif kind == CREDENTIAL_FOUND:
            cred = Credential(
                id=payload["cred"],
                stored_on=payload["stored_on"],
                targets=tuple(sorted(payload["targets"])),
                requires_root_to_read=bool(payload.get("requires_root_to_read", False)),
            )
            self.harvested_credentials[cred.id] = cred
            for target in cred.targets:
                self.known_hosts.setdefault(target, None)
        elif kind == DATA_FOUND:
            self.known_data[payload["asset"]] = KnownData(
                asset=payload["asset"],
                host=payload["host"],
                requires_root=bool(payload.get("requires_root", False)),
                size_units=int(payload.get("size_units", 1)),
            )
            self.known_hosts.setdefault(payload["host"], None)
        elif kind == SESSION_ESTABLISHED:
            host, subnet = payload["host"], payload.get("subnet")
            if subnet is not None:
                self.known_hosts[host] = subnet
                self.known_subnets.setdefault(subnet, payload.get("external"))
            else:
                self.known_hosts.setdefault(host, None)
            for route in payload.get("routes", []):
                self.known_subnets.setdefault(route, None)
            self.sessions.add((host, payload["privilege"]))
        elif kind == PRIVILEGE_ESCALATED:
            host = payload["host"]
            if not self.has_session(host, USER):
                raise ConsistencyError(f"PrivilegeEscalated on {host} without a session")
            self.sessions.add((host, ROOT))
        elif kind == DATA_EXFILTRATED:
            asset = payload["asset"]
            if asset not in self.known_data:
                raise ConsistencyError(f"DataExfiltrated for unknown asset {asset}")
            self.exfiltrated.add(asset)
        elif kind == TASK_ERROR:
            pass  # log-only; no fact changes
        else:
            raise ConsistencyError(f"unknown event kind {kind}")

    # -- session helpers ----------------------------------------------------

    def has_session(self, host: str, privilege: str = USER) -> bool:
        """Root sessions also satisfy user-level capability."""
        if (host, privilege) in self.sessions:
            return True
        return privilege == USER and (host, ROOT) in self.sessions

    def infected_hosts(self) -> list[str]:
        return sorted({host for host, _ in self.sessions})

    def goal_satisfied(self, goal: Goal) -> bool:
        if goal.kind == GOAL_EXFILTRATE:
            return goal.target in self.exfiltrated
        if goal.kind == GOAL_ROOT:
            return (goal.target, ROOT) in self.sessions
        return False

    def unsatisfied_goals(self) -> list[Goal]:
        return [g for g in self.goals if not self.goal_satisfied(g)]

    # -- queries ------------------------------------------------------------

    def query(self, q: Query) -> dict:
        """Answer one structured query from kb facts only; stable ordering."""
        if q.kind not in QUERY_KINDS:
            raise QueryError(f"unknown query kind {q.kind!r}")
        handler = getattr(self, f"_query_{q.kind}")
        return {"kind": q.kind, "result": handler(q)}

    def _query_external_networks(self, q: Query) -> list[str]:
        return sorted(s for s, ext in self.known_subnets.items() if ext is True)

    def _query_hosts_on_network(self, q: Query) -> list[str]:
        subnet = q.param("subnet")
        if subnet not in self.known_subnets:
            raise QueryError(f"unknown subnet {subnet!r}")
        return sorted(h for h, s in self.known_hosts.items() if s == subnet)

    def _query_infected_hosts(self, q: Query) -> list[str]:
        return self.infected_hosts()

    def _query_known_vulns(self, q: Query) -> list[dict]:
        host = q.param("host")
        if host not in self.known_hosts:
            raise QueryError(f"unknown host {host!r}")
        vulns = self.known_vulns.get(host, {})
        return [{"id": vid, "kind": kind} for vid, kind in sorted(vulns.items())]

    def _query_harvested_credentials(self, q: Query) -> list[dict]:
        return [
            {
                "id": c.id,
                "stored_on": c.stored_on,
                "targets": list(c.targets),
                "requires_root_to_read": c.requires_root_to_read,
            }
            for _, c in sorted(self.harvested_credentials.items())
        ]

    def _query_known_data(self, q: Query) -> list[dict]:
        unexfiltrated_only = (q.param("unexfiltrated_only") or "false").lower() == "true"
        rows = []
        for asset, info in sorted(self.known_data.items()):
            if unexfiltrated_only and asset in self.exfiltrated:
                continue
            rows.append({"asset": asset, "host": info.host, "requires_root": info.requires_root})
        return rows

    def _query_sessions(self, q: Query) -> list[str]:
        host = q.param("host")
        if host not in self.known_hosts:
            raise QueryError(f"unknown host {host!r}")
        return sorted(priv for h, priv in self.sessions if h == host)

    def _query_goal_progress(self, q: Query) -> list[dict]:
        return [
            {"goal": g.id, "kind": g.kind, "target": g.target, "satisfied": self.goal_satisfied(g)}
            for g in self.goals
        ]

    # -- snapshots ----------------------------------------------------------

    def fact_counts(self) -> dict[str, int]:
        return {
            "subnets": len(self.known_subnets),
            "hosts": len(self.known_hosts),
            "services": sum(len(v) for v in self.known_services.values()),
            "vulns": sum(len(v) for v in self.known_vulns.values()),
            "credentials": len(self.harvested_credentials),
            "data_assets": len(self.known_data),
            "sessions": len(self.sessions),
            "exfiltrated": len(self.exfiltrated),
        }

    def facts_snapshot(self) -> dict:
        """Canonical dump of every fact set, for equality checks."""
        return {
            "known_subnets": {k: self.known_subnets[k] for k in sorted(self.known_subnets)},
            "known_hosts": {k: self.known_hosts[k] for k in sorted(self.known_hosts)},
            "known_services": {
                h: [svc.__dict__ for _, svc in sorted(ports.items())]
                for h, ports in sorted(self.known_services.items())
            },
            "known_vulns": {h: dict(sorted(v.items())) for h, v in sorted(self.known_vulns.items())},
            "harvested_credentials": {
                k: self.harvested_credentials[k].__dict__ for k in sorted(self.harvested_credentials)
            },
            "known_data": {k: self.known_data[k].__dict__ for k in sorted(self.known_data)},
            "sessions": sorted(self.sessions),
            "exfiltrated": sorted(self.exfiltrated),
        }


def record(kb: KnowledgeBase, result: TaskResult, sim_time: int) -> KnowledgeBase:
    return kb.record(result, sim_time)


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass
class Observation:
    """Bounded summary handed to planners: outcomes, counts and affordances.

    Deliberately not a transcript; detail is pulled on demand through
    queries so long exercises cannot bloat the planner's context.
    """

    last_results: list[dict] = field(default_factory=list)
    fact_counts: dict[str, int] = field(default_factory=dict)
    goal_progress: list[dict] = field(default_factory=list)
    infected: list[str] = field(default_factory=list)
    query_kinds: tuple[str, ...] = QUERY_KINDS
    query_reply: Optional[dict] = None
    budget: Optional[dict] = None
    cap: int = DEFAULT_OBSERVATION_CAP

    def to_payload(self) -> dict:
        payload: dict[str, Any] = {
            "last_results": self.last_results,
            "fact_counts": self.fact_counts,
            "goal_progress": self.goal_progress,
            "infected": self.infected,
            "query_kinds": list(self.query_kinds),
        }
        if self.query_reply is not None:
            payload["query_reply"] = self.query_reply
        if self.budget is not None:
            payload["budget"] = self.budget
        return payload

    def to_text(self) -> str:
        lines = []
        if self.budget:
            lines.append(
                f"budget: {self.budget.get('minutes_left')} simulated minutes, "
                f"{self.budget.get('steps_left')} steps remaining"
            )
        done = sum(1 for g in self.goal_progress if g["satisfied"])
        lines.append(f"goals: {done}/{len(self.goal_progress)} satisfied")
        for g in self.goal_progress:
            mark = "done" if g["satisfied"] else "open"
            lines.append(f"  [{mark}] {g['goal']}")
        counts = ", ".join(f"{k}={v}" for k, v in self.fact_counts.items())
        lines.append(f"known facts: {counts}")
        lines.append(f"infected hosts: {', '.join(self.infected) if self.infected else '(none)'}")
        if self.last_results:
            lines.append("last task results:")
            for r in self.last_results:
                summary = f"  {r['task']} -> {r['status']}"
                if r.get("error"):
                    summary += f": {r['error']}"
                if r.get("events"):
                    summary += " (" + ", ".join(f"{k} x{n}" for k, n in sorted(r["events"].items())) + ")"
                lines.append(summary)
        if self.query_reply is not None:
            lines.append("query reply: " + json.dumps(self.query_reply, sort_keys=True))
        lines.append("queries available: " + ", ".join(self.query_kinds))
        text = "\n".join(lines)
        if len(text) > self.cap:
            # Drop the per-goal listing first, then hard-truncate.
            compact = [line for line in lines if not line.startswith("  [")]
            text = "\n".join(compact)
            if len(text) > self.cap:
                text = text[: self.cap - 4] + "\n..."
        return text


def summarize_result(result: TaskResult) -> dict:
    counts: dict[str, int] = {}
    for kind, _ in result.events:
        counts[kind] = counts.get(kind, 0) + 1
    summary: dict[str, Any] = {"task": result.invocation.signature, "status": result.status, "events": counts}
    if result.error:
        summary["error"] = result.error
    return summary


def render_observation(
    kb: KnowledgeBase,
    last_results: Iterable[TaskResult] = (),
    query_reply: Optional[dict] = None,
    budget: Optional[dict] = None,
    cap: int = DEFAULT_OBSERVATION_CAP,
) -> Observation:
    """Compact view of the current knowledge plus the previous step's outcomes."""
    return Observation(
        last_results=[summarize_result(r) for r in last_results],
        fact_counts=kb.fact_counts(),
        goal_progress=kb._query_goal_progress(Query.make("goal_progress")),
        infected=kb.infected_hosts(),
        query_reply=query_reply,
        budget=budget,
        cap=cap,
    )
