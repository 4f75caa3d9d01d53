"""Algorithmic environment generation with planted attack paths.

Topology: 2-4 subnets (one external, holding the attacker), randomly
connected but guaranteed connected, bidirectional allow-all rules between
connected subnets. Each subnet gets 7-15 hosts; 30% of the non-external
hosts (rounded to nearest, at least one) become goals. For every goal a
path from the attacker is planted edge by edge: lateral edges get either a
remote-code-execution service vuln or a plaintext credential on the edge's
source host, and privilege-escalation edges (root-access goals, root-gated
assets) get a local privesc vuln. A verifier then proves every goal
reachable before an environment is ever used.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from . import attackgraph
from .netmodel import (
    Credential,
    DataAsset,
    Environment,
    Goal,
    GOAL_EXFILTRATE,
    GOAL_ROOT,
    Host,
    InputError,
    PRIVESC,
    RCE,
    ReachabilityRule,
    Service,
    Subnet,
    validate,
    Vulnerability,
    WILDCARD,
)

GOAL_KIND_EXFILTRATE = "exfiltrate"
GOAL_KIND_ROOT = "root_access"

#: Catalog is data: the two real-world ids the scenarios model, plus two
#: synthetic ids per kind for variety.
DEFAULT_VULN_CATALOG = (
    Vulnerability("CVE-2017-5638", RCE),
    Vulnerability("CVE-2099-1001", RCE),
    Vulnerability("CVE-2099-1002", RCE),
    Vulnerability("CVE-2021-3156", PRIVESC),
    Vulnerability("CVE-2099-2001", PRIVESC),
    Vulnerability("CVE-2099-2002", PRIVESC),
)


@dataclass(frozen=True)
class GenParams:
    subnet_count_range: tuple[int, int] = (2, 4)
    hosts_per_subnet_range: tuple[int, int] = (7, 15)
    goal_fraction: float = 0.30
    goal_kind: str = GOAL_KIND_EXFILTRATE
    vuln_catalog: tuple[Vulnerability, ...] = DEFAULT_VULN_CATALOG
    seed: int = 0

    def check(self) -> None:
        for name, (lo, hi) in (
            ("subnet_count_range", self.subnet_count_range),
            ("hosts_per_subnet_range", self.hosts_per_subnet_range),
        ):
            if lo < 1 or hi < lo:
                raise InputError(f"{name} is empty: {lo}..{hi}")
        if not (0 < self.goal_fraction <= 1):
            raise InputError(f"goal_fraction out of range: {self.goal_fraction}")
        if self.goal_kind not in (GOAL_KIND_EXFILTRATE, GOAL_KIND_ROOT):
            raise InputError(f"unknown goal_kind {self.goal_kind!r}")


@dataclass(frozen=True)
class GoalCheck:
    goal: Goal
    reachable: bool
    witness: Optional[attackgraph.AttackPath]

    def to_payload(self) -> dict:
        return {
            "goal": self.goal.id,
            "reachable": self.reachable,
            "witness": None if self.witness is None else self.witness.to_payload(),
        }


@dataclass(frozen=True)
class VerificationReport:
    entries: tuple[GoalCheck, ...]

    @property
    def all_reachable(self) -> bool:
        return all(e.reachable for e in self.entries)

    def unreachable_goals(self) -> list[Goal]:
        return [e.goal for e in self.entries if not e.reachable]

    def to_payload(self) -> dict:
        return {"all_reachable": self.all_reachable, "goals": [e.to_payload() for e in self.entries]}


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def format_name(env: Environment) -> str:
    """"N{subnets}-H{hosts excluding attacker}-G{goals}"."""
    hosts = sum(1 for h in env.hosts if not h.is_attacker)
    return f"N{len(env.subnets)}-H{hosts}-G{len(env.goals)}"


def generate(params: GenParams) -> Environment:
    """Deterministic environment for (params, seed); verified goals planted."""
    params.check()
    rng = random.Random(f"topology:{params.seed}")

    lo, hi = params.subnet_count_range
    subnet_count = rng.randint(lo, hi)
    subnet_ids = [f"s{i}" for i in range(subnet_count)]
    external = subnet_ids[rng.randrange(subnet_count)]

    # Random spanning tree keeps the subnet graph connected; every other
    # pair joins with probability one half.
    order = list(range(subnet_count))
    rng.shuffle(order)
    connected: set[tuple[int, int]] = set()
    for i in range(1, subnet_count):
        other = order[rng.randrange(i)]
        connected.add(tuple(sorted((order[i], other))))
    for i in range(subnet_count):
        for j in range(i + 1, subnet_count):
            if (i, j) not in connected and rng.random() < 0.5:
                connected.add((i, j))

    h_lo, h_hi = params.hosts_per_subnet_range
    hosts: list[Host] = []
    members: dict[str, list[str]] = {sid: [] for sid in subnet_ids}
    attacker_id = "attacker"
    hosts.append(Host(id=attacker_id, subnet=external, is_attacker=True))
    members[external].append(attacker_id)
    for sid in subnet_ids:
        for k in range(rng.randint(h_lo, h_hi)):
            hid = f"{sid}-h{k:02d}"
            hosts.append(
                Host(id=hid, subnet=sid, services=(Service(protocol="ssh", port=22, banner="OpenSSH 8.2"),))
            )
            members[sid].append(hid)

    rules = [
        ReachabilityRule(src_subnet=sid, dst_subnet=sid, protocol=WILDCARD) for sid in subnet_ids
    ]
    for i, j in sorted(connected):
        rules.append(ReachabilityRule(src_subnet=subnet_ids[i], dst_subnet=subnet_ids[j], protocol=WILDCARD))
        rules.append(ReachabilityRule(src_subnet=subnet_ids[j], dst_subnet=subnet_ids[i], protocol=WILDCARD))
    rules.sort(key=lambda r: (r.src_subnet, r.dst_subnet))

    internal_hosts = sorted(h.id for h in hosts if h.subnet != external and not h.is_attacker)
    goal_count = max(1, _round_half_up(params.goal_fraction * len(internal_hosts)))
    goal_hosts = sorted(rng.sample(internal_hosts, min(goal_count, len(internal_hosts))))

    goals: list[Goal] = []
    if params.goal_kind == GOAL_KIND_EXFILTRATE:
        by_id = {h.id: h for h in hosts}
        for ghost in goal_hosts:
            asset = DataAsset(
                id=f"data-{ghost}",
                host=ghost,
                requires_root=rng.random() < 0.5,
                size_units=1,
            )
            node = by_id[ghost]
            by_id[ghost] = replace(node, data_assets=node.data_assets + (asset,))
            goals.append(Goal(kind=GOAL_EXFILTRATE, target=asset.id))
        hosts = [by_id[h.id] for h in hosts]
    else:
        goals = [Goal(kind=GOAL_ROOT, target=ghost) for ghost in goal_hosts]

    env = Environment(
        name="unnamed",
        subnets=tuple(
            Subnet(id=sid, external=(sid == external), hosts=tuple(sorted(members[sid])))
            for sid in subnet_ids
        ),
        hosts=tuple(hosts),
        reachability=tuple(rules),
        goals=tuple(sorted(goals, key=lambda g: g.id)),
        attacker_host=attacker_id,
    )
    env = plant_attack_paths(env, params.seed, params.vuln_catalog)
    return replace(env, name=format_name(env))


# ---------------------------------------------------------------------------
# Attack-path planting
# ---------------------------------------------------------------------------


def _subnet_adjacency(env: Environment) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {s.id: set() for s in env.subnets}
    for rule in env.reachability:
        if rule.src_subnet != rule.dst_subnet and rule.src_hosts is None and rule.dst_hosts is None:
            adj[rule.src_subnet].add(rule.dst_subnet)
    return adj


def _subnet_path(adj: dict[str, set[str]], start: str, end: str) -> Optional[list[str]]:
    if start == end:
        return [start]
    parents = {start: start}
    frontier = [start]
    while frontier:
        nxt = []
        for node in frontier:
            for neighbour in sorted(adj[node]):
                if neighbour in parents:
                    continue
                parents[neighbour] = node
                if neighbour == end:
                    path = [end]
                    while path[-1] != start:
                        path.append(parents[path[-1]])
                    return path[::-1]
                nxt.append(neighbour)
        frontier = nxt
    return None


def plant_attack_paths(
    env: Environment, seed: int, vuln_catalog: tuple[Vulnerability, ...] = DEFAULT_VULN_CATALOG
) -> Environment:
    """Plant one viable path from the attacker to every goal.

    Each lateral edge gets an RCE service vuln on its target or a plaintext
    credential on its source (uniform choice, uniform catalog draw); the
    first edge is always an exploit since nothing is ever discovered on the
    attacker's own host. Privesc vulns land exactly where root is required:
    root-access goal hosts and hosts of root-gated assets. Edges already
    viable (overlapping paths) are left alone, so one host may end up
    carrying several planted vulns.
    """
    if not env.goals:
        return env
    if not vuln_catalog:
        raise InputError("empty vuln_catalog")
    rce_ids = sorted(v.id for v in vuln_catalog if v.kind == RCE)
    pe_ids = sorted(v.id for v in vuln_catalog if v.kind == PRIVESC)
    if not rce_ids:
        raise InputError("vuln_catalog has no remote_code_execution entries")

    rng = random.Random(f"plant:{seed}")
    adj = _subnet_adjacency(env)
    by_id = {h.id: h for h in env.hosts}
    attacker = env.attacker_host
    attacker_subnet = by_id[attacker].subnet

    def has_rce(host: Host) -> bool:
        return any(svc.vuln for svc in host.services)

    def has_cred(source: Host, target: str) -> bool:
        return any(target in c.targets for c in source.stored_credentials)

    def plant_rce(target: str) -> None:
        node = by_id[target]
        used_ports = {svc.port for svc in node.services}
        port = 8080
        while port in used_ports:
            port += 1
        vuln_id = rng.choice(rce_ids)
        svc = Service(protocol="http", port=port, vuln=vuln_id, banner="Apache Struts2")
        by_id[target] = replace(node, services=node.services + (svc,))

    def plant_cred(source: str, target: str) -> None:
        node = by_id[source]
        cred = Credential(
            id=f"cred-{source}-{target}",
            stored_on=source,
            targets=(target,),
            requires_root_to_read=False,
        )
        by_id[source] = replace(node, stored_credentials=node.stored_credentials + (cred,))

    def plant_privesc(host_id: str) -> None:
        node = by_id[host_id]
        if node.privesc_vulns:
            return
        if not pe_ids:
            raise InputError("vuln_catalog has no privilege_escalation entries")
        by_id[host_id] = replace(node, privesc_vulns=(rng.choice(pe_ids),))

    for goal in sorted(env.goals, key=lambda g: g.id):
        if goal.kind == GOAL_EXFILTRATE:
            goal_host = env.assets_by_id[goal.target].host
        else:
            goal_host = goal.target
        subnet_path = _subnet_path(adj, attacker_subnet, by_id[goal_host].subnet)
        if subnet_path is None:
            raise InputError(f"no subnet route from {attacker_subnet} toward goal {goal.id}")

        nodes = [attacker]
        for sid in subnet_path[1:-1]:
            stepping = sorted(
                h for h in env.subnet(sid).hosts if h != attacker and h != goal_host
            )
            nodes.append(rng.choice(stepping))
        if goal_host != attacker:
            nodes.append(goal_host)

        for source, target in zip(nodes, nodes[1:]):
            src_node, dst_node = by_id[source], by_id[target]
            if has_rce(dst_node) or has_cred(src_node, target):
                continue
            can_cred = source != attacker and any(s.protocol == "ssh" for s in dst_node.services)
            if can_cred and rng.random() < 0.5:
                plant_cred(source, target)
            else:
                plant_rce(target)

        if goal.kind == GOAL_ROOT:
            plant_privesc(goal_host)
        elif env.assets_by_id[goal.target].requires_root:
            plant_privesc(goal_host)

    hosts = tuple(by_id[h.id] for h in env.hosts)
    return replace(env, hosts=hosts)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def verify(env: Environment, max_depth: int = attackgraph.DEFAULT_DEPTH) -> VerificationReport:
    """Per-goal ground-truth reachability with witness paths.

    Raises InputError listing validate() violations when the environment is
    structurally broken; an unreachable goal is a report entry, not an error.
    """
    problems = validate(env)
    if problems:
        raise InputError("invalid environment: " + "; ".join(problems))
    graph = attackgraph.build(env, attackgraph.GROUND_TRUTH)
    entries = []
    for goal in sorted(env.goals, key=lambda g: g.id):
        ok, witness = attackgraph.goal_reachable(env, goal, max_depth, graph=graph)
        entries.append(GoalCheck(goal=goal, reachable=ok, witness=witness))
    return VerificationReport(entries=tuple(entries))
