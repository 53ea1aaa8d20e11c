"""Deterministic executors for the seven sandbox tools.

Executors assume the call already passed interface validation; anything
that can still go wrong is a runtime precondition and comes back as a
``runtime_error`` with fixed text that never depends on the interface
condition.
"""

from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass
from typing import Any, Callable

from schemabench.sandbox import microlang
from schemabench.sandbox.tasks import ArtifactState
from schemabench.tools.unidiff import PatchError, apply_diff
from schemabench.validate import ToolCall

LOG_CAP = 50
GREP_CAP = 100

PATH_NOT_FOUND = "path not found"
METRIC_NOT_AVAILABLE = "metric not available"


@dataclass(frozen=True)
class ToolResult:
    status: str  # ok | runtime_error
    payload: Any
    calls_mutated_state: bool = False

    def observation(self) -> str:
        """Text appended to the agent history."""
        if self.status == "ok":
            return "tool_result: " + json.dumps(self.payload, sort_keys=True, ensure_ascii=False)
        return "runtime_error: " + self.payload["error"]


def _error(text: str) -> ToolResult:
    return ToolResult("runtime_error", {"error": text})


def _normalize(path: str) -> str:
    while path.startswith("./"):
        path = path[2:]
    path = path.strip("/")
    return "" if path == "." else path


def search_logs(args: dict, state: ArtifactState) -> ToolResult:
    query = args["query"].lower()
    start, end = args["time_range"]["start"], args["time_range"]["end"]
    options = args.get("options", {})
    level = options.get("filter", {}).get("level")
    cap = min(LOG_CAP, options.get("limit", LOG_CAP))
    hits = [
        line
        for line in state.logs
        if line.service == args["service"]
        and start <= line.timestamp <= end
        and query in f"{line.level} {line.message}".lower()
        and (level is None or line.level == level)
    ]
    if options.get("order") == "desc":
        hits = hits[::-1]
    return ToolResult("ok", {"lines": [h.to_dict() for h in hits[:cap]], "truncated": len(hits) > cap})


def get_metric(args: dict, state: ArtifactState) -> ToolResult:
    minutes = int(args["window"]["minutes"])
    key = (args["service"], args["metric_key"], minutes)
    if key not in state.metrics:
        return _error(METRIC_NOT_AVAILABLE)
    return ToolResult(
        "ok",
        {"metric_key": key[1], "service": key[0], "window_minutes": minutes, "value": state.metrics[key]},
    )


def list_dir(args: dict, state: ArtifactState) -> ToolResult:
    path = _normalize(args["path"])
    prefix = path + "/" if path else ""
    entries = set()
    for name in state.files:
        if name.startswith(prefix):
            rest = name[len(prefix):]
            head, sep, _ = rest.partition("/")
            entries.add(head + "/" if sep else head)
    if not entries:
        return _error(PATH_NOT_FOUND)
    return ToolResult("ok", {"path": path, "entries": sorted(entries)})


def read_file(args: dict, state: ArtifactState) -> ToolResult:
    path = _normalize(args["path"])
    if path not in state.files:
        return _error(PATH_NOT_FOUND)
    return ToolResult("ok", {"path": path, "content": state.files[path]})


def grep_repo(args: dict, state: ArtifactState) -> ToolResult:
    pattern = args["pattern"]
    glob = args.get("glob", "*")
    hits = []
    for path in sorted(p for p in state.files if p.startswith("repo/")):
        if not fnmatch.fnmatchcase(path.rsplit("/", 1)[-1], glob):
            continue
        for lineno, line in enumerate(state.files[path].splitlines(), start=1):
            if pattern in line:
                hits.append({"file": path, "line": lineno, "text": line})
    return ToolResult("ok", {"matches": hits[:GREP_CAP], "truncated": len(hits) > GREP_CAP})


def run_tests_detail(state: ArtifactState, selector: str = "*") -> ToolResult:
    try:
        report = microlang.run_suite(state.sources(), state.test_files(), selector)
    except microlang.MicroSyntaxError as exc:
        return _error(f"malformed repository file: {exc.file} line {exc.line}")
    return ToolResult("ok", report.to_dict())


def run_tests(args: dict, state: ArtifactState) -> ToolResult:
    selector = "*" if args.get("mode") == "all" else args.get("selector", "*")
    return run_tests_detail(state, selector)


def apply_patch_detail(state: ArtifactState, file: str, diff: str) -> ToolResult:
    path = _normalize(file)
    if path not in state.files:
        return _error(PATH_NOT_FOUND)
    try:
        new_text = apply_diff(state.files[path], diff)
    except PatchError as exc:
        return _error(str(exc))
    state.files[path] = new_text
    return ToolResult("ok", {"file": path, "applied": True}, calls_mutated_state=True)


def apply_patch(args: dict, state: ArtifactState) -> ToolResult:
    return apply_patch_detail(state, args["file"], args["diff"])


EXECUTORS: dict[str, Callable[[dict, ArtifactState], ToolResult]] = {
    "search_logs": search_logs,
    "get_metric": get_metric,
    "list_dir": list_dir,
    "read_file": read_file,
    "grep_repo": grep_repo,
    "run_tests": run_tests,
    "apply_patch": apply_patch,
}
READ_ONLY = frozenset(EXECUTORS) - {"apply_patch"}


def execute_tool(call: ToolCall, state: ArtifactState) -> ToolResult:
    """Dispatch a schema-valid call. Unknown tool names are a programming error."""
    try:
        executor = EXECUTORS[call.name]
    except KeyError:
        raise ValueError(f"no executor for tool {call.name!r}") from None
    return executor(call.args, state)
