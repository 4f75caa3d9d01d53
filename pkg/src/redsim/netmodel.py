"""Ground-truth network model: the simulated enterprise every other module reads.

An :class:`Environment` is immutable once built. It bundles subnets, hosts
(with their services, stored credentials, data assets and local privilege
escalation vulns), firewall-style reachability rules, and the exercise goals.
Scenario files are strict JSON documents; see ``load_scenario`` and the
schema section of the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Optional

PROTOCOLS = ("db", "http", "other", "ssh")
WILDCARD = "*"

RCE = "remote_code_execution"
PRIVESC = "privilege_escalation"

GOAL_EXFILTRATE = "exfiltrate_data"
GOAL_ROOT = "root_access"

USER = "user"
ROOT = "root"


class ScenarioError(ValueError):
    """A scenario document failed to parse or violated an invariant."""


class InputError(ValueError):
    """An operation was called with an unknown id or malformed argument."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vulnerability:
    id: str
    kind: str  # RCE or PRIVESC


@dataclass(frozen=True)
class Service:
    protocol: str
    port: int
    vuln: Optional[str] = None  # RCE-kind vulnerability id
    banner: str = ""


@dataclass(frozen=True)
class Credential:
    id: str
    stored_on: str
    targets: tuple[str, ...]
    requires_root_to_read: bool = False


@dataclass(frozen=True)
class DataAsset:
    id: str
    host: str
    requires_root: bool = False
    size_units: int = 1


@dataclass(frozen=True)
class Goal:
    kind: str  # GOAL_EXFILTRATE or GOAL_ROOT
    target: str  # asset id for exfiltrate, host id for root access

    @property
    def id(self) -> str:
        return f"{self.kind}:{self.target}"


@dataclass(frozen=True)
class ReachabilityRule:
    """Allow rule matched first-to-last; no matching rule means deny."""

    src_subnet: str
    dst_subnet: str
    protocol: str = WILDCARD
    src_hosts: Optional[tuple[str, ...]] = None
    dst_hosts: Optional[tuple[str, ...]] = None
    verdict: str = "allow"


@dataclass(frozen=True)
class Subnet:
    id: str
    external: bool
    hosts: tuple[str, ...]


@dataclass(frozen=True)
class Host:
    id: str
    subnet: str
    services: tuple[Service, ...] = ()
    stored_credentials: tuple[Credential, ...] = ()
    data_assets: tuple[DataAsset, ...] = ()
    privesc_vulns: tuple[str, ...] = ()
    is_attacker: bool = False


@dataclass(frozen=True)
class Environment:
    name: str
    subnets: tuple[Subnet, ...]
    hosts: tuple[Host, ...]
    reachability: tuple[ReachabilityRule, ...]
    goals: tuple[Goal, ...]
    attacker_host: str

    @cached_property
    def hosts_by_id(self) -> dict[str, Host]:
        return {h.id: h for h in self.hosts}

    @cached_property
    def subnets_by_id(self) -> dict[str, Subnet]:
        return {s.id: s for s in self.subnets}

    @cached_property
    def assets_by_id(self) -> dict[str, DataAsset]:
        return {a.id: a for h in self.hosts for a in h.data_assets}

    @cached_property
    def credentials_by_id(self) -> dict[str, Credential]:
        return {c.id: c for h in self.hosts for c in h.stored_credentials}

    @cached_property
    def vuln_catalog(self) -> dict[str, str]:
        """Vulnerability id -> kind, derived from where ids are used.

        Ids attached to services are RCE-kind; ids listed in privesc_vulns
        are privilege-escalation-kind. validate() flags ids used as both.
        """
        catalog: dict[str, str] = {}
        for h in self.hosts:
            for svc in h.services:
                if svc.vuln:
                    catalog.setdefault(svc.vuln, RCE)
            for v in h.privesc_vulns:
                catalog.setdefault(v, PRIVESC)
        return catalog

    def host(self, host_id: str) -> Host:
        try:
            return self.hosts_by_id[host_id]
        except KeyError:
            raise InputError(f"unknown host {host_id!r}") from None

    def subnet(self, subnet_id: str) -> Subnet:
        try:
            return self.subnets_by_id[subnet_id]
        except KeyError:
            raise InputError(f"unknown subnet {subnet_id!r}") from None

    def external_subnets(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.subnets if s.external)

    def critical_assets(self) -> frozenset[str]:
        """C_e: the ids whose capture defines success (asset or host ids)."""
        return frozenset(g.target for g in self.goals)


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------


def _rule_matches(rule: ReachabilityRule, src: Host, dst: Host, protocol: str) -> bool:
    if rule.src_subnet != src.subnet or rule.dst_subnet != dst.subnet:
        return False
    if rule.protocol != WILDCARD and rule.protocol != protocol:
        return False
    if rule.src_hosts is not None and src.id not in rule.src_hosts:
        return False
    if rule.dst_hosts is not None and dst.id not in rule.dst_hosts:
        return False
    return True


def reachable(env: Environment, src: str, dst: str, protocol: str) -> bool:
    """True iff src may open a connection to dst on the given protocol.

    Same-host traffic is always allowed; otherwise the first matching allow
    rule wins and no match means deny.
    """
    if protocol not in PROTOCOLS:
        raise InputError(f"unknown protocol {protocol!r}")
    src_host = env.host(src)
    dst_host = env.host(dst)
    if src == dst:
        return True
    return any(_rule_matches(r, src_host, dst_host, protocol) for r in env.reachability)


def reachable_any(env: Environment, src: str, dst: str) -> bool:
    """True iff some protocol is allowed from src to dst."""
    src_host = env.host(src)
    dst_host = env.host(dst)
    if src == dst:
        return True
    for rule in env.reachability:
        if rule.src_subnet != src_host.subnet or rule.dst_subnet != dst_host.subnet:
            continue
        if rule.src_hosts is not None and src not in rule.src_hosts:
            continue
        if rule.dst_hosts is not None and dst not in rule.dst_hosts:
            continue
        return True
    return False


def subnets_reachable_from(env: Environment, host_id: str) -> tuple[str, ...]:
    """Subnet ids the host can open connections into (its routing view)."""
    host = env.host(host_id)
    out = set()
    for rule in env.reachability:
        if rule.src_subnet != host.subnet:
            continue
        if rule.src_hosts is not None and host_id not in rule.src_hosts:
            continue
        out.add(rule.dst_subnet)
    return tuple(sorted(out))


def hop_chain(env: Environment, allowed: Iterable[str], src: str, dst: str) -> Optional[list[str]]:
    """Shortest hop chain src -> ... -> dst through `allowed` hosts.

    Every node of the chain (including the endpoints) must be in `allowed`,
    and consecutive hops must be reachable on some protocol. Returns the
    host list, or None when no chain exists. Deterministic: BFS expanding
    neighbours in sorted order.
    """
    allowed_set = set(allowed)
    if src not in allowed_set or dst not in allowed_set:
        return None
    if src == dst:
        return [src]
    frontier = [src]
    parents: dict[str, str] = {src: src}
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            for cand in sorted(allowed_set):
                if cand in parents or not reachable_any(env, node, cand):
                    continue
                parents[cand] = node
                if cand == dst:
                    chain = [dst]
                    while chain[-1] != src:
                        chain.append(parents[chain[-1]])
                    return chain[::-1]
                nxt.append(cand)
        frontier = nxt
    return None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(env: Environment) -> list[str]:
    """All invariant violations, each naming the type, entity and rule.

    An empty list means the environment is well formed. Violations are data,
    not exceptions: callers that require validity raise on a nonempty result.
    """
    problems: list[str] = []

    seen_subnets: set[str] = set()
    for s in env.subnets:
        if s.id in seen_subnets:
            problems.append(f"Subnet: duplicate id {s.id}")
        seen_subnets.add(s.id)

    seen_hosts: set[str] = set()
    for h in env.hosts:
        if h.id in seen_hosts:
            problems.append(f"Host: duplicate id {h.id}")
        seen_hosts.add(h.id)

    host_ids = {h.id for h in env.hosts}
    subnet_ids = {s.id for s in env.subnets}

    if not any(s.external for s in env.subnets):
        problems.append("Subnet: no external subnet")

    membership: dict[str, list[str]] = {}
    for s in env.subnets:
        for hid in s.hosts:
            if hid not in host_ids:
                problems.append(f"Subnet: {s.id} lists unknown host {hid}")
            membership.setdefault(hid, []).append(s.id)
    for h in env.hosts:
        owners = membership.get(h.id, [])
        if len(owners) == 0:
            problems.append(f"Host: {h.id} not listed in any subnet")
        elif len(owners) > 1:
            problems.append(f"Host: {h.id} listed in multiple subnets {sorted(owners)}")
        if h.subnet not in subnet_ids:
            problems.append(f"Host: {h.id} references unknown subnet {h.subnet}")
        elif owners and h.subnet not in owners:
            problems.append(f"Host: {h.id} subnet field {h.subnet} disagrees with subnet listing")

    if env.attacker_host not in host_ids:
        problems.append(f"Environment: no attacker host {env.attacker_host}")
    else:
        attacker = env.hosts_by_id[env.attacker_host]
        if not attacker.is_attacker:
            problems.append(f"Environment: attacker host {attacker.id} lacks is_attacker flag")
        owner = env.subnets_by_id.get(attacker.subnet)
        if owner is not None and not owner.external:
            problems.append(f"Environment: attacker host {attacker.id} not on an external subnet")
    for h in env.hosts:
        if h.is_attacker and h.id != env.attacker_host:
            problems.append(f"Host: {h.id} flagged is_attacker but attacker_host is {env.attacker_host}")

    # Vulnerability catalog consistency: an id may carry one kind only.
    rce_ids = {svc.vuln for h in env.hosts for svc in h.services if svc.vuln}
    pe_ids = {v for h in env.hosts for v in h.privesc_vulns}
    for vid in sorted(rce_ids & pe_ids):
        problems.append(f"Vulnerability: {vid} used as both remote_code_execution and privilege_escalation")

    seen_assets: set[str] = set()
    seen_creds: set[str] = set()
    for h in env.hosts:
        ports = [svc.port for svc in h.services]
        for port in sorted({p for p in ports if ports.count(p) > 1}):
            problems.append(f"Service: duplicate port {port} on host {h.id}")
        for svc in h.services:
            if not (1 <= svc.port <= 65535):
                problems.append(f"Service: port {svc.port} on host {h.id} out of range")
            if svc.protocol not in PROTOCOLS:
                problems.append(f"Service: unknown protocol {svc.protocol} on host {h.id}")
        for cred in h.stored_credentials:
            if cred.id in seen_creds:
                problems.append(f"Credential: duplicate id {cred.id}")
            seen_creds.add(cred.id)
            if cred.stored_on != h.id:
                problems.append(f"Credential: {cred.id} stored_on {cred.stored_on} but listed on {h.id}")
            if not cred.targets:
                problems.append(f"Credential: {cred.id} has no targets")
            for t in cred.targets:
                if t not in host_ids:
                    problems.append(f"Credential: {cred.id} targets unknown host {t}")
                elif not any(svc.protocol == "ssh" for svc in env.hosts_by_id[t].services):
                    problems.append(f"Credential: {cred.id} target {t} runs no ssh service")
        for asset in h.data_assets:
            if asset.id in seen_assets:
                problems.append(f"DataAsset: duplicate id {asset.id}")
            seen_assets.add(asset.id)
            if asset.host != h.id:
                problems.append(f"DataAsset: {asset.id} host {asset.host} but listed on {h.id}")
            if asset.size_units < 1:
                problems.append(f"DataAsset: {asset.id} size_units must be positive")

    assets = {a.id for h in env.hosts for a in h.data_assets}
    for g in env.goals:
        if g.kind == GOAL_EXFILTRATE:
            if g.target not in assets:
                problems.append(f"Goal: unknown asset {g.target}")
        elif g.kind == GOAL_ROOT:
            if g.target not in host_ids:
                problems.append(f"Goal: unknown host {g.target}")
        else:
            problems.append(f"Goal: unknown kind {g.kind}")

    for i, rule in enumerate(env.reachability):
        where = f"rule {i}"
        if rule.src_subnet not in subnet_ids:
            problems.append(f"ReachabilityRule: {where} unknown src_subnet {rule.src_subnet}")
        if rule.dst_subnet not in subnet_ids:
            problems.append(f"ReachabilityRule: {where} unknown dst_subnet {rule.dst_subnet}")
        if rule.protocol != WILDCARD and rule.protocol not in PROTOCOLS:
            problems.append(f"ReachabilityRule: {where} unknown protocol {rule.protocol}")
        if rule.verdict != "allow":
            problems.append(f"ReachabilityRule: {where} unknown verdict {rule.verdict}")
        for hid in (rule.src_hosts or ()) + (rule.dst_hosts or ()):
            if hid not in host_ids:
                problems.append(f"ReachabilityRule: {where} unknown host {hid}")

    return problems


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------

_TOP_KEYS = {"name", "subnets", "hosts", "reachability", "goals", "attacker_host"}


def _require(obj: Any, typ: type, where: str) -> Any:
    if not isinstance(obj, typ):
        raise ScenarioError(f"{where}: expected {typ.__name__}, got {type(obj).__name__}")
    return obj


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_service(obj: Any, where: str) -> Service:
    _require(obj, dict, where)
    _reject_unknown(obj, {"protocol", "port", "vuln", "banner"}, where)
    for key in ("protocol", "port"):
        if key not in obj:
            raise ScenarioError(f"{where}: missing {key}")
    return Service(
        protocol=_require(obj["protocol"], str, f"{where}.protocol"),
        port=_require(obj["port"], int, f"{where}.port"),
        vuln=obj.get("vuln"),
        banner=obj.get("banner", ""),
    )


def _parse_credential(obj: Any, host_id: str, where: str) -> Credential:
    _require(obj, dict, where)
    _reject_unknown(obj, {"id", "targets", "requires_root_to_read"}, where)
    for key in ("id", "targets"):
        if key not in obj:
            raise ScenarioError(f"{where}: missing {key}")
    targets = _require(obj["targets"], list, f"{where}.targets")
    return Credential(
        id=_require(obj["id"], str, f"{where}.id"),
        stored_on=host_id,
        targets=tuple(sorted(_require(t, str, f"{where}.targets[]") for t in targets)),
        requires_root_to_read=bool(obj.get("requires_root_to_read", False)),
    )


def _parse_asset(obj: Any, host_id: str, where: str) -> DataAsset:
    _require(obj, dict, where)
    _reject_unknown(obj, {"id", "requires_root", "size_units"}, where)
    if "id" not in obj:
        raise ScenarioError(f"{where}: missing id")
    return DataAsset(
        id=_require(obj["id"], str, f"{where}.id"),
        host=host_id,
        requires_root=bool(obj.get("requires_root", False)),
        size_units=_require(obj.get("size_units", 1), int, f"{where}.size_units"),
    )


def _parse_host(obj: Any, where: str) -> Host:
    _require(obj, dict, where)
    allowed = {"id", "subnet", "services", "stored_credentials", "data_assets", "privesc_vulns", "is_attacker"}
    _reject_unknown(obj, allowed, where)
    for key in ("id", "subnet"):
        if key not in obj:
            raise ScenarioError(f"{where}: missing {key}")
    hid = _require(obj["id"], str, f"{where}.id")
    return Host(
        id=hid,
        subnet=_require(obj["subnet"], str, f"{where}.subnet"),
        services=tuple(
            _parse_service(s, f"{where}.services[{i}]")
            for i, s in enumerate(_require(obj.get("services", []), list, f"{where}.services"))
        ),
        stored_credentials=tuple(
            _parse_credential(c, hid, f"{where}.stored_credentials[{i}]")
            for i, c in enumerate(_require(obj.get("stored_credentials", []), list, f"{where}.stored_credentials"))
        ),
        data_assets=tuple(
            _parse_asset(a, hid, f"{where}.data_assets[{i}]")
            for i, a in enumerate(_require(obj.get("data_assets", []), list, f"{where}.data_assets"))
        ),
        privesc_vulns=tuple(
            _require(v, str, f"{where}.privesc_vulns[]")
            for v in _require(obj.get("privesc_vulns", []), list, f"{where}.privesc_vulns")
        ),
        is_attacker=bool(obj.get("is_attacker", False)),
    )


def _parse_rule(obj: Any, where: str) -> ReachabilityRule:
    _require(obj, dict, where)
    allowed = {"src_subnet", "dst_subnet", "protocol", "src_hosts", "dst_hosts", "verdict"}
    _reject_unknown(obj, allowed, where)
    for key in ("src_subnet", "dst_subnet"):
        if key not in obj:
            raise ScenarioError(f"{where}: missing {key}")
    src_hosts = obj.get("src_hosts")
    dst_hosts = obj.get("dst_hosts")
    return ReachabilityRule(
        src_subnet=_require(obj["src_subnet"], str, f"{where}.src_subnet"),
        dst_subnet=_require(obj["dst_subnet"], str, f"{where}.dst_subnet"),
        protocol=_require(obj.get("protocol", WILDCARD), str, f"{where}.protocol"),
        src_hosts=None if src_hosts is None else tuple(sorted(src_hosts)),
        dst_hosts=None if dst_hosts is None else tuple(sorted(dst_hosts)),
        verdict=_require(obj.get("verdict", "allow"), str, f"{where}.verdict"),
    )


def _parse_goal(obj: Any, where: str) -> Goal:
    _require(obj, dict, where)
    kind = obj.get("kind")
    if kind == GOAL_EXFILTRATE:
        _reject_unknown(obj, {"kind", "asset"}, where)
        if "asset" not in obj:
            raise ScenarioError(f"{where}: missing asset")
        return Goal(kind=GOAL_EXFILTRATE, target=_require(obj["asset"], str, f"{where}.asset"))
    if kind == GOAL_ROOT:
        _reject_unknown(obj, {"kind", "host"}, where)
        if "host" not in obj:
            raise ScenarioError(f"{where}: missing host")
        return Goal(kind=GOAL_ROOT, target=_require(obj["host"], str, f"{where}.host"))
    raise ScenarioError(f"{where}: unknown goal kind {kind!r}")


def environment_from_dict(doc: dict) -> Environment:
    """Build an Environment from a parsed scenario document, then validate it."""
    _require(doc, dict, "document")
    _reject_unknown(doc, _TOP_KEYS, "document")
    for key in sorted(_TOP_KEYS):
        if key not in doc:
            raise ScenarioError(f"document: missing {key}")

    subnets = []
    for i, s in enumerate(_require(doc["subnets"], list, "subnets")):
        _require(s, dict, f"subnets[{i}]")
        _reject_unknown(s, {"id", "external", "hosts"}, f"subnets[{i}]")
        if "id" not in s:
            raise ScenarioError(f"subnets[{i}]: missing id")
        subnets.append(
            Subnet(
                id=_require(s["id"], str, f"subnets[{i}].id"),
                external=bool(s.get("external", False)),
                hosts=tuple(sorted(_require(s.get("hosts", []), list, f"subnets[{i}].hosts"))),
            )
        )

    env = Environment(
        name=_require(doc["name"], str, "name"),
        subnets=tuple(subnets),
        hosts=tuple(_parse_host(h, f"hosts[{i}]") for i, h in enumerate(_require(doc["hosts"], list, "hosts"))),
        reachability=tuple(
            _parse_rule(r, f"reachability[{i}]")
            for i, r in enumerate(_require(doc["reachability"], list, "reachability"))
        ),
        goals=tuple(_parse_goal(g, f"goals[{i}]") for i, g in enumerate(_require(doc["goals"], list, "goals"))),
        attacker_host=_require(doc["attacker_host"], str, "attacker_host"),
    )
    problems = validate(env)
    if problems:
        raise ScenarioError("invalid scenario: " + "; ".join(problems))
    return env


def load_scenario(document: str) -> Environment:
    """Parse a scenario JSON document into a validated Environment."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return environment_from_dict(doc)


def environment_to_dict(env: Environment) -> dict:
    """Scenario document for env. Canonical: load(serialize(env)) == env."""
    hosts = []
    for h in env.hosts:
        entry: dict[str, Any] = {"id": h.id, "subnet": h.subnet}
        if h.is_attacker:
            entry["is_attacker"] = True
        if h.services:
            entry["services"] = [
                {k: v for k, v in (("protocol", s.protocol), ("port", s.port), ("vuln", s.vuln), ("banner", s.banner)) if v not in (None, "")}
                for s in h.services
            ]
        if h.stored_credentials:
            entry["stored_credentials"] = [
                {"id": c.id, "targets": list(c.targets), "requires_root_to_read": c.requires_root_to_read}
                for c in h.stored_credentials
            ]
        if h.data_assets:
            entry["data_assets"] = [
                {"id": a.id, "requires_root": a.requires_root, "size_units": a.size_units}
                for a in h.data_assets
            ]
        if h.privesc_vulns:
            entry["privesc_vulns"] = list(h.privesc_vulns)
        hosts.append(entry)

    rules = []
    for r in env.reachability:
        entry = {"src_subnet": r.src_subnet, "dst_subnet": r.dst_subnet, "protocol": r.protocol, "verdict": r.verdict}
        if r.src_hosts is not None:
            entry["src_hosts"] = list(r.src_hosts)
        if r.dst_hosts is not None:
            entry["dst_hosts"] = list(r.dst_hosts)
        rules.append(entry)

    goals = []
    for g in env.goals:
        if g.kind == GOAL_EXFILTRATE:
            goals.append({"kind": g.kind, "asset": g.target})
        else:
            goals.append({"kind": g.kind, "host": g.target})

    return {
        "name": env.name,
        "attacker_host": env.attacker_host,
        "subnets": [{"id": s.id, "external": s.external, "hosts": list(s.hosts)} for s in env.subnets],
        "hosts": hosts,
        "reachability": rules,
        "goals": goals,
    }


def serialize_scenario(env: Environment) -> str:
    return json.dumps(environment_to_dict(env), indent=2, sort_keys=True) + "\n"


def with_goals(env: Environment, goals: Iterable[Goal]) -> Environment:
    return replace(env, goals=tuple(goals))
