"""Declarative kill-chain task types shared by the engine, planners and logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

SCAN = "Scan"
LATERAL_MOVE = "LateralMove"
ESCALATE_PRIVILEGE = "EscalatePrivilege"
FIND_INFORMATION = "FindInformation"
EXFILTRATE_DATA = "ExfiltrateData"

TASK_KINDS = (SCAN, LATERAL_MOVE, ESCALATE_PRIVILEGE, FIND_INFORMATION, EXFILTRATE_DATA)

#: Required / optional parameter names per task kind.
TASK_PARAMS = {
    SCAN: ({"source", "subnet"}, set()),
    LATERAL_MOVE: ({"target"}, {"method"}),
    ESCALATE_PRIVILEGE: ({"host"}, set()),
    FIND_INFORMATION: ({"host"}, set()),
    EXFILTRATE_DATA: ({"asset"}, set()),
}

OK = "ok"
FAILED = "failed"


@dataclass(frozen=True)
class TaskInvocation:
    """One declarative task: a kind plus its string parameters."""

    kind: str
    params: tuple[tuple[str, str], ...]

    @classmethod
    def make(cls, kind: str, **params: str) -> "TaskInvocation":
        return cls(kind=kind, params=tuple(sorted((k, str(v)) for k, v in params.items() if v is not None)))

    def param(self, name: str, default: Optional[str] = None) -> Optional[str]:
        for key, value in self.params:
            if key == name:
                return value
        return default

    @property
    def signature(self) -> str:
        return self.kind + "(" + ", ".join(f"{k}={v}" for k, v in self.params) + ")"

    def to_payload(self) -> dict[str, str]:
        payload = {"kind": self.kind}
        payload.update(dict(self.params))
        return payload

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "TaskInvocation":
        kind = payload.get("kind")
        if kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {kind!r}")
        required, optional = TASK_PARAMS[kind]
        params = {k: v for k, v in payload.items() if k != "kind"}
        missing = required - set(params)
        if missing:
            raise ValueError(f"{kind}: missing parameter {sorted(missing)[0]!r}")
        unknown = set(params) - required - optional
        if unknown:
            raise ValueError(f"{kind}: unknown parameter {sorted(unknown)[0]!r}")
        for key, value in params.items():
            if not isinstance(value, str):
                raise ValueError(f"{kind}: parameter {key!r} must be a string")
        return cls.make(kind, **params)


def scan(source: str, subnet: str) -> TaskInvocation:
    return TaskInvocation.make(SCAN, source=source, subnet=subnet)


def lateral_move(target: str, method: Optional[str] = None) -> TaskInvocation:
    return TaskInvocation.make(LATERAL_MOVE, target=target, method=method)


def escalate_privilege(host: str) -> TaskInvocation:
    return TaskInvocation.make(ESCALATE_PRIVILEGE, host=host)


def find_information(host: str) -> TaskInvocation:
    return TaskInvocation.make(FIND_INFORMATION, host=host)


def exfiltrate_data(asset: str) -> TaskInvocation:
    return TaskInvocation.make(EXFILTRATE_DATA, asset=asset)


@dataclass(frozen=True)
class Command:
    """One low-level command in a task's trace: runs on a host, yields output."""

    host: str
    name: str
    params: tuple[str, ...] = ()
    output: str = ""

    def to_payload(self) -> dict[str, Any]:
        return {"host": self.host, "name": self.name, "params": list(self.params), "output": self.output}


@dataclass
class TaskResult:
    """Outcome of executing one task: events for the knowledge base plus a trace."""

    invocation: TaskInvocation
    status: str = OK
    events: list[tuple[str, dict]] = field(default_factory=list)
    commands: list[Command] = field(default_factory=list)
    error: Optional[str] = None
    duration: int = 0
    resolved_method: Optional[str] = None  # lateral moves: the method actually used

    @property
    def ok(self) -> bool:
        return self.status == OK
