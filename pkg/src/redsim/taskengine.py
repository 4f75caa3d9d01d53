"""Executes the five kill-chain tasks against the simulated environment.

Every task runs through the simulated C&C session registry: scans and
exploits originate from infected hosts, successful lateral moves install an
implant (a new session), and exfiltration relays data hop by hop through
infected stepping stones back to the attacker.

Command-name vocabulary used in traces: scan, exploit, login, implant,
enum_local, read_file, copy_hop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, TYPE_CHECKING

from .netmodel import (
    Environment,
    PRIVESC,
    PROTOCOLS,
    RCE,
    ROOT,
    USER,
    hop_chain,
    reachable,
    reachable_any,
    subnets_reachable_from,
)
from .tasks import (
    Command,
    ESCALATE_PRIVILEGE,
    EXFILTRATE_DATA,
    FAILED,
    FIND_INFORMATION,
    LATERAL_MOVE,
    OK,
    SCAN,
    TaskInvocation,
    TaskResult,
)
from . import knowledge as kn

if TYPE_CHECKING:
    from .knowledge import KnowledgeBase


class ImplantRegistry:
    """C&C view of live sessions; the attacker host always has root."""

    def __init__(self, attacker_host: str) -> None:
        self.attacker_host = attacker_host
        self.sessions: set[tuple[str, str]] = {(attacker_host, ROOT)}

    def add(self, host: str, privilege: str) -> None:
        self.sessions.add((host, privilege))

    def has(self, host: str, privilege: str = USER) -> bool:
        if (host, privilege) in self.sessions:
            return True
        return privilege == USER and (host, ROOT) in self.sessions

    def privilege_on(self, host: str) -> Optional[str]:
        if (host, ROOT) in self.sessions:
            return ROOT
        if (host, USER) in self.sessions:
            return USER
        return None

    def infected_hosts(self) -> list[str]:
        return sorted({host for host, _ in self.sessions})


@dataclass(frozen=True)
class EngineConfig:
    """Simulated task costs in minutes, charged to the trial clock.

    No-op tasks (e.g. a lateral move to an already-infected host) cost
    nothing; failed attempts are charged in full. Exploits always succeed
    when exploit_success_rate is 1.0, which keeps runs deterministic.
    """

    scan_minutes: int = 2
    lateral_move_minutes: int = 3
    escalate_minutes: int = 2
    find_information_minutes: int = 1
    exfiltrate_base_minutes: int = 1
    exfiltrate_minutes_per_unit_hop: int = 1
    exploit_success_rate: float = 1.0


def _session_payload(env: Environment, host: str, privilege: str) -> dict:
    h = env.host(host)
    return {
        "host": host,
        "privilege": privilege,
        "subnet": h.subnet,
        "external": env.subnet(h.subnet).external,
        "routes": list(subnets_reachable_from(env, host)),
    }


class TaskEngine:
    """Executes task invocations; one engine per trial, strictly sequential."""

    def __init__(
        self,
        env: Environment,
        registry: Optional[ImplantRegistry] = None,
        config: EngineConfig = EngineConfig(),
        rng: Optional[random.Random] = None,
    ) -> None:
        self.env = env
        self.registry = registry if registry is not None else ImplantRegistry(env.attacker_host)
        self.config = config
        self.rng = rng

    # -- dispatch ------------------------------------------------------------

    def execute(self, invocation: TaskInvocation, kb: "KnowledgeBase") -> TaskResult:
        kind = invocation.kind
        if kind == SCAN:
            return self.scan(invocation.param("source"), invocation.param("subnet"))
        if kind == LATERAL_MOVE:
            return self.lateral_move(kb, invocation.param("target"), invocation.param("method"))
        if kind == ESCALATE_PRIVILEGE:
            return self.escalate_privilege(invocation.param("host"))
        if kind == FIND_INFORMATION:
            return self.find_information(invocation.param("host"))
        if kind == EXFILTRATE_DATA:
            return self.exfiltrate(kb, invocation.param("asset"))
        return self._failed(invocation, f"unknown task kind {kind}", 0)

    def _failed(self, invocation: TaskInvocation, message: str, duration: int) -> TaskResult:
        return TaskResult(
            invocation=invocation,
            status=FAILED,
            events=[(kn.TASK_ERROR, {"message": message})],
            error=message,
            duration=duration,
        )

    def _exploit_succeeds(self) -> bool:
        rate = self.config.exploit_success_rate
        if rate >= 1.0 or self.rng is None:
            return True
        return self.rng.random() < rate

    # -- Scan -----------------------------------------------------------------

    def scan(self, source: str, subnet: str) -> TaskResult:
        """Discover hosts, services and RCE service vulns visible from source.

        Scanning is location dependent: hosts the source cannot reach on any
        protocol stay invisible, so the same subnet scanned from different
        hosts can yield different results.
        """
        invocation = TaskInvocation.make(SCAN, source=source, subnet=subnet)
        duration = self.config.scan_minutes
        if not self.registry.has(source, USER):
            return self._failed(invocation, "no session", duration)
        if subnet not in self.env.subnets_by_id:
            return self._failed(invocation, "unknown subnet", duration)

        events: list[tuple[str, dict]] = []
        discovered = 0
        external = self.env.subnet(subnet).external
        for host_id in sorted(self.env.subnet(subnet).hosts):
            if not reachable_any(self.env, source, host_id):
                continue
            discovered += 1
            events.append((kn.HOST_DISCOVERED, {"host": host_id, "subnet": subnet, "external": external}))
            host = self.env.host(host_id)
            for svc in sorted(host.services, key=lambda s: s.port):
                payload = {"host": host_id, "protocol": svc.protocol, "port": svc.port}
                if svc.banner:
                    payload["banner"] = svc.banner
                if svc.vuln:
                    payload["vuln"] = svc.vuln
                events.append((kn.SERVICE_DISCOVERED, payload))
                if svc.vuln:
                    events.append((kn.VULN_DISCOVERED, {"host": host_id, "vuln": svc.vuln, "kind": RCE}))
        commands = [Command(source, "scan", (subnet,), output=f"{discovered} hosts up")]
        return TaskResult(invocation=invocation, events=events, commands=commands, duration=duration)

    # -- LateralMove ----------------------------------------------------------

    def _lateral_candidates(self, kb: "KnowledgeBase", target: str) -> list[tuple[str, str, str, str]]:
        """(method_id, method_kind, detail, protocol) options, preferred first.

        Credentials are tried before exploits; ties break on credential or
        vuln id. Only methods the knowledge base actually holds qualify.
        """
        creds: list[tuple[str, str, str, str]] = []
        for cred_id, cred in sorted(kb.harvested_credentials.items()):
            if target in cred.targets and self._source_for(target, "ssh") is not None:
                creds.append((f"cred:{cred_id}", "cred", cred_id, "ssh"))
        vulns: list[tuple[str, str, str, str]] = []
        seen: set[str] = set()
        for _, svc in sorted(kb.known_services.get(target, {}).items()):
            if not svc.vuln or svc.vuln in seen:
                continue
            seen.add(svc.vuln)
            if self._source_for(target, svc.protocol) is not None:
                vulns.append((f"vuln:{svc.vuln}", "vuln", svc.vuln, svc.protocol))
        vulns.sort(key=lambda o: o[2])
        return creds + vulns

    def _source_for(self, target: str, protocol: str) -> Optional[str]:
        for source in self.registry.infected_hosts():
            if source != target and reachable(self.env, source, target, protocol):
                return source
        return None

    def lateral_move(self, kb: "KnowledgeBase", target: str, method: Optional[str] = None) -> TaskResult:
        invocation = TaskInvocation.make(LATERAL_MOVE, target=target, method=method)
        duration = self.config.lateral_move_minutes
        if self.registry.has(target, USER):
            return TaskResult(invocation=invocation, duration=0)  # idempotent no-op
        if target not in self.env.hosts_by_id:
            return self._failed(invocation, "unknown target", duration)
        if target not in kb.known_hosts:
            # A host nobody has discovered yet is indistinguishable from an
            # unroutable one: there is no method to pick either way.
            return self._failed(invocation, "no path to target", duration)

        options = self._lateral_candidates(kb, target)
        if method is not None:
            options = [o for o in options if o[0] == method]
            if not options:
                return self._failed(invocation, "method not applicable", duration)
        if not options:
            return self._failed(invocation, "no path to target", duration)

        method_id, method_kind, detail, protocol = options[0]
        source = self._source_for(target, protocol)
        if method_kind == "vuln" and not self._exploit_succeeds():
            return self._failed(invocation, "exploit failed", duration)
        if method_kind == "cred":
            commands = [Command(source, "login", (target, "ssh", detail), output="authenticated")]
        else:
            commands = [Command(source, "exploit", (target, detail, protocol), output="code execution")]
        commands.append(Command(target, "implant", (), output="implant installed, beaconing"))
        self.registry.add(target, USER)
        events = [(kn.SESSION_ESTABLISHED, _session_payload(self.env, target, USER))]
        return TaskResult(
            invocation=invocation,
            events=events,
            commands=commands,
            duration=duration,
            resolved_method=method_id,
        )

    # -- EscalatePrivilege ------------------------------------------------------

    def escalate_privilege(self, host: str) -> TaskResult:
        invocation = TaskInvocation.make(ESCALATE_PRIVILEGE, host=host)
        duration = self.config.escalate_minutes
        if self.registry.has(host, ROOT):
            return TaskResult(invocation=invocation, duration=0)  # already root
        if not self.registry.has(host, USER):
            return self._failed(invocation, "no session", duration)
        vulns = sorted(self.env.host(host).privesc_vulns)
        if not vulns:
            return self._failed(invocation, "no privilege escalation available", duration)
        if not self._exploit_succeeds():
            return self._failed(invocation, "exploit failed", duration)

        self.registry.add(host, ROOT)
        events: list[tuple[str, dict]] = [
            (kn.VULN_DISCOVERED, {"host": host, "vuln": v, "kind": PRIVESC}) for v in vulns
        ]
        events.append((kn.PRIVILEGE_ESCALATED, {"host": host}))
        commands = [
            Command(host, "enum_local", ("privesc",), output=", ".join(vulns)),
            Command(host, "exploit", (host, vulns[0], "local"), output="euid=0(root)"),
        ]
        return TaskResult(invocation=invocation, events=events, commands=commands, duration=duration)

    # -- FindInformation --------------------------------------------------------

    def find_information(self, host: str) -> TaskResult:
        """Search the host for credentials and data visible at our privilege."""
        invocation = TaskInvocation.make(FIND_INFORMATION, host=host)
        duration = self.config.find_information_minutes
        privilege = self.registry.privilege_on(host)
        if privilege is None:
            return self._failed(invocation, "no session", duration)
        if host not in self.env.hosts_by_id:
            return self._failed(invocation, "unknown host", duration)

        node = self.env.host(host)
        events: list[tuple[str, dict]] = []
        commands = [Command(host, "enum_local", ("files",), output="search complete")]
        for cred in sorted(node.stored_credentials, key=lambda c: c.id):
            if cred.requires_root_to_read and privilege != ROOT:
                continue
            events.append(
                (
                    kn.CREDENTIAL_FOUND,
                    {
                        "cred": cred.id,
                        "stored_on": host,
                        "targets": list(cred.targets),
                        "requires_root_to_read": cred.requires_root_to_read,
                    },
                )
            )
            commands.append(Command(host, "read_file", (cred.id,), output=f"credentials for {len(cred.targets)} hosts"))
        for asset in sorted(node.data_assets, key=lambda a: a.id):
            if asset.requires_root and privilege != ROOT:
                continue
            events.append(
                (
                    kn.DATA_FOUND,
                    {
                        "asset": asset.id,
                        "host": host,
                        "requires_root": asset.requires_root,
                        "size_units": asset.size_units,
                    },
                )
            )
            commands.append(Command(host, "read_file", (asset.id,), output=f"{asset.size_units} units"))
        return TaskResult(invocation=invocation, events=events, commands=commands, duration=duration)

    # -- ExfiltrateData -----------------------------------------------------------

    def exfiltrate(self, kb: "KnowledgeBase", asset: str) -> TaskResult:
        """Relay the asset along the shortest infected-host chain to the attacker."""
        invocation = TaskInvocation.make(EXFILTRATE_DATA, asset=asset)
        if asset not in kb.known_data or asset not in self.env.assets_by_id:
            return self._failed(invocation, "unknown asset", self.config.exfiltrate_base_minutes)
        record = self.env.assets_by_id[asset]
        base = self.config.exfiltrate_base_minutes
        if not self.registry.has(record.host, USER):
            return self._failed(invocation, "no session", base)
        if record.requires_root and not self.registry.has(record.host, ROOT):
            return self._failed(invocation, "privilege required", base)

        chain = hop_chain(self.env, self.registry.infected_hosts(), record.host, self.env.attacker_host)
        if chain is None:
            return self._failed(invocation, "no exfiltration path", base)
        hops = len(chain) - 1
        duration = base + self.config.exfiltrate_minutes_per_unit_hop * record.size_units * hops
        commands = [
            Command(chain[i], "copy_hop", (chain[i + 1], asset), output=f"{record.size_units} units copied")
            for i in range(hops)
        ]
        events = [(kn.DATA_EXFILTRATED, {"asset": asset})]
        return TaskResult(invocation=invocation, events=events, commands=commands, duration=duration)
