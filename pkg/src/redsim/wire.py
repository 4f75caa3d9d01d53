"""Length-delimited JSON wire protocol for external planners.

Framing: ASCII decimal byte count, a newline, then exactly that many bytes
of UTF-8 JSON. One request, one step reply, strictly alternating; the
onboarding document rides only on the first request of a trial.

Reply grammar (exactly one variant per message):
    {"tasks": [{"kind": "Scan", "source": ..., "subnet": ...}, ...]}
    {"query": {"kind": "hosts_on_network", "subnet": ...}}
    {"finished": {"reason": ...}}
"""

from __future__ import annotations

import json
from typing import Any, BinaryIO, Optional

from .knowledge import Query
from .tasks import TaskInvocation

MAX_FRAME_BYTES = 16 * 1024 * 1024


class DecodeError(ValueError):
    """Malformed wire payload; `field` names the offending part."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------


def write_frame(stream: BinaryIO, payload: dict) -> None:
    data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    stream.write(str(len(data)).encode("ascii") + b"\n" + data)
    stream.flush()


def read_frame(stream: BinaryIO) -> Optional[dict]:
    """Next frame, or None at a clean end of stream."""
    header = bytearray()
    while True:
        byte = stream.read(1)
        if not byte:
            if header:
                raise DecodeError("frame", "stream ended inside a frame header")
            return None
        if byte == b"\n":
            break
        header += byte
        if len(header) > 20:
            raise DecodeError("frame", "oversized frame header")
    try:
        length = int(header.decode("ascii"))
    except ValueError:
        raise DecodeError("frame", f"invalid frame length {header!r}") from None
    if length < 0 or length > MAX_FRAME_BYTES:
        raise DecodeError("frame", f"frame length {length} out of bounds")
    data = bytearray()
    while len(data) < length:
        chunk = stream.read(length - len(data))
        if not chunk:
            raise DecodeError("frame", "stream ended inside a frame body")
        data += chunk
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError("frame", f"frame body is not JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise DecodeError("frame", "frame body must be a JSON object")
    return payload


# ---------------------------------------------------------------------------
# Requests (orchestrator -> planner)
# ---------------------------------------------------------------------------


def encode_request(observation: dict, budget: dict, onboarding: Optional[dict] = None) -> dict:
    request: dict[str, Any] = {"observation": observation, "budget": budget}
    if onboarding is not None:
        request["onboarding"] = onboarding
    return request


def decode_request(payload: dict) -> dict:
    if not isinstance(payload, dict):
        raise DecodeError("request", "must be a JSON object")
    unknown = set(payload) - {"observation", "budget", "onboarding"}
    if unknown:
        raise DecodeError(sorted(unknown)[0], "unknown request key")
    for key in ("observation", "budget"):
        if key not in payload:
            raise DecodeError(key, "missing")
        if not isinstance(payload[key], dict):
            raise DecodeError(key, "must be an object")
    return payload


# ---------------------------------------------------------------------------
# Steps (planner -> orchestrator)
# ---------------------------------------------------------------------------


def encode_step(step) -> dict:
    """Wire payload for a PlannerStep (the codec half of decode_step)."""
    if step.kind == "tasks":
        return {"tasks": [t.to_payload() for t in step.tasks]}
    if step.kind == "query":
        return {"query": step.query.to_payload()}
    if step.kind == "finished":
        return {"finished": {"reason": step.reason}}
    raise DecodeError("step", f"unknown step kind {step.kind!r}")


def decode_step(payload: Any):
    """Parse one step reply; raises DecodeError naming the offending field."""
    from .planner import PlannerStep  # local import: planner builds on this module

    if isinstance(payload, (bytes, bytearray)):
        try:
            payload = json.loads(bytes(payload).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DecodeError("message", f"not JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise DecodeError("message", "must be a JSON object")

    variants = [k for k in ("tasks", "query", "finished") if k in payload]
    unknown = set(payload) - {"tasks", "query", "finished"}
    if unknown:
        raise DecodeError(sorted(unknown)[0], "unknown step key")
    if len(variants) == 0:
        raise DecodeError("message", "one of tasks, query or finished is required")
    if len(variants) > 1:
        raise DecodeError("message", f"multiple step variants present: {variants}")

    variant = variants[0]
    body = payload[variant]
    if variant == "tasks":
        if not isinstance(body, list):
            raise DecodeError("tasks", "must be a list")
        if not body:
            raise DecodeError("tasks", "batch must not be empty")
        tasks = []
        for i, entry in enumerate(body):
            if not isinstance(entry, dict):
                raise DecodeError(f"tasks[{i}]", "must be an object")
            try:
                tasks.append(TaskInvocation.from_payload(entry))
            except ValueError as exc:
                raise DecodeError(f"tasks[{i}]", str(exc)) from None
        return PlannerStep.batch(tasks)
    if variant == "query":
        if not isinstance(body, dict):
            raise DecodeError("query", "must be an object")
        try:
            return PlannerStep.query_step(Query.from_payload(body))
        except ValueError as exc:
            raise DecodeError("query", str(exc)) from None
    if not isinstance(body, dict):
        raise DecodeError("finished", "must be an object")
    if set(body) - {"reason"}:
        raise DecodeError("finished", f"unknown keys {sorted(set(body) - {'reason'})}")
    reason = body.get("reason")
    if reason is not None and not isinstance(reason, str):
        raise DecodeError("finished.reason", "must be a string or null")
    return PlannerStep.finished(reason)
