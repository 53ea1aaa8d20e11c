"""Task pack persistence with per-task integrity digests."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence, Union

from schemabench.sandbox.tasks import TaskInstance, sha256
from schemabench.contracts import canonical_json

PACK_VERSION = 1


class TaskPackError(ValueError):
    """Malformed pack document."""


class TaskPackIntegrityError(TaskPackError):
    def __init__(self, task_id: str, what: str):
        super().__init__(f"task {task_id}: {what} digest mismatch")
        self.task_id = task_id
        self.what = what


def dump_task_pack(tasks: Sequence[TaskInstance]) -> str:
    return json.dumps({"version": PACK_VERSION, "tasks": [t.to_dict() for t in tasks]}, indent=1, sort_keys=True) + "\n"


def save_task_pack(tasks: Sequence[TaskInstance], path: Union[str, Path]) -> str:
    """Write the pack and return its digest."""
    text = dump_task_pack(tasks)
    Path(path).write_text(text, encoding="utf-8")
    return sha256(text)


def verify_task_dict(d: dict) -> list[str]:
    """Names of the digests in a serialized task that no longer match its content."""
    bad = []
    task = TaskInstance.from_dict(d)
    fresh = task.to_dict()
    for name, digest in d.get("artifact_digests", {}).items():
        if fresh["artifact_digests"].get(name) != digest:
            bad.append(f"artifact {name}")
    if set(d.get("artifact_digests", {})) != set(fresh["artifact_digests"]):
        bad.append("artifact set")
    if d.get("oracle_digest") != fresh["oracle_digest"]:
        bad.append("oracle")
    body = {k: v for k, v in d.items() if k != "digest"}
    if d.get("digest") != sha256(canonical_json(body)):
        bad.append("task")
    return bad


def loads_task_pack(text: Union[str, bytes]) -> list[TaskInstance]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaskPackError(f"task pack is not JSON: {exc.msg} at offset {exc.pos}") from None
    if not isinstance(doc, dict) or doc.get("version") != PACK_VERSION or not isinstance(doc.get("tasks"), list):
        raise TaskPackError("expected {\"version\": 1, \"tasks\": [...]}")
    tasks = []
    for d in doc["tasks"]:
        try:
            bad = verify_task_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise TaskPackError(f"malformed task entry: {exc}") from None
        if bad:
            raise TaskPackIntegrityError(d.get("task_id", "?"), bad[0])
        tasks.append(TaskInstance.from_dict(d))
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise TaskPackError("duplicate task ids")
    return tasks


def load_task_pack(path: Union[str, Path]) -> list[TaskInstance]:
    return loads_task_pack(Path(path).read_bytes())
