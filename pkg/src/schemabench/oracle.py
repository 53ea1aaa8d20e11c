"""Trace oracles for labeling schema-valid calls as aligned or semantic misuse.

An oracle is a small automaton over evidence states. Each state lists the
call classes admissible in it and where each leads. Classification tracks a
*set* of current states, which gives branching strategies and partial
orders without a dedicated partial-order checker. A call aligned in any
current state moves the set to the union of its targets; a misaligned call
leaves the set unchanged. States have no self-loops unless the oracle
declares one, so repeating an aligned call that gained nothing is misuse.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence

from schemabench.contracts import canonical_json, json_equal, split_path

MODERATE_BUDGET = 8
ALIGNED = "aligned"
MISUSE = "semantic_misuse"
_OPS = ("eq", "in", "any")


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class ArgPredicate:
    path: str
    op: str  # eq | in | any
    value: Any = None

    def __post_init__(self) -> None:
        if self.op == "in":
            object.__setattr__(self, "value", tuple(self.value))

    def holds(self, args: Any) -> bool:
        node = args
        for part in split_path(self.path):
            if not isinstance(node, dict) or part not in node:
                return False
            node = node[part]
        if self.op == "any":
            return True
        if self.op == "eq":
            return json_equal(node, self.value)
        if self.op == "in":
            return any(json_equal(node, v) for v in self.value)
        raise OracleError(f"unknown predicate op {self.op!r}")


@dataclass(frozen=True)
class CallClass:
    tool: str
    predicates: tuple[ArgPredicate, ...] = ()

    def matches(self, tool: str, args: Any) -> bool:
        return tool == self.tool and all(p.holds(args) for p in self.predicates)


@dataclass(frozen=True)
class Transition:
    call_class: CallClass
    target: str


@dataclass(frozen=True)
class EvidenceState:
    state_id: str
    transitions: tuple[Transition, ...] = ()
    stop: bool = False
    note: str = ""

    @property
    def admissible_classes(self) -> tuple[CallClass, ...]:
        return tuple(t.call_class for t in self.transitions)


@dataclass(frozen=True)
class TraceOracle:
    oracle_id: str
    start: str
    states: tuple[EvidenceState, ...]

    def state(self, state_id: str) -> EvidenceState:
        for s in self.states:
            if s.state_id == state_id:
                return s
        raise OracleError(f"unknown state {state_id!r}")

    @property
    def stop_states(self) -> frozenset[str]:
        return frozenset(s.state_id for s in self.states if s.stop)

    def initial(self) -> frozenset[str]:
        return frozenset({self.start})

    def to_dict(self) -> dict:
        return {
            "oracle_id": self.oracle_id,
            "start": self.start,
            "states": [
                {
                    "state_id": s.state_id,
                    "note": s.note,
                    "stop": s.stop,
                    "classes": [
                        {
                            "tool": t.call_class.tool,
                            "arg_predicates": [
                                {"path": p.path, "op": p.op, "value": list(p.value) if p.op == "in" else p.value} for p in t.call_class.predicates
                            ],
                            "next": t.target,
                        }
                        for t in s.transitions
                    ],
                }
                for s in self.states
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TraceOracle":
        states = []
        for s in d["states"]:
            transitions = []
            for c in s["classes"]:
                preds = []
                for p in c["arg_predicates"]:
                    if p["op"] not in _OPS:
                        raise OracleError(f"unknown predicate op {p['op']!r}")
                    preds.append(ArgPredicate(p["path"], p["op"], p.get("value")))
                transitions.append(Transition(CallClass(c["tool"], tuple(preds)), c["next"]))
            states.append(EvidenceState(s["state_id"], tuple(transitions), bool(s["stop"]), s.get("note", "")))
        return cls(d["oracle_id"], d["start"], tuple(states))

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()


def classify_call(
    oracle: TraceOracle, current: Iterable[str], tool: str, args: Any
) -> tuple[str, frozenset[str]]:
    """Label one schema-valid, executable call and advance the state set."""
    current = frozenset(current)
    targets: set[str] = set()
    for state_id in sorted(current):
        for t in oracle.state(state_id).transitions:
            if t.call_class.matches(tool, args):
                targets.add(t.target)
    if targets:
        return ALIGNED, frozenset(targets)
    return MISUSE, current


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class OracleFinding:
    rule: str
    detail: str = ""


def shortest_path(oracle: TraceOracle) -> Optional[list[Transition]]:
    """Fewest transitions from start to any stop state (BFS)."""
    ids = {s.state_id for s in oracle.states}
    if oracle.start not in ids:
        return None
    prev: dict[str, tuple[str, Transition]] = {}
    seen = {oracle.start}
    queue = deque([oracle.start])
    while queue:
        sid = queue.popleft()
        state = oracle.state(sid)
        if state.stop:
            path = []
            while sid != oracle.start:
                sid, t = prev[sid]
                path.append(t)
            return path[::-1]
        for t in state.transitions:
            if t.target in ids and t.target not in seen:
                seen.add(t.target)
                prev[t.target] = (sid, t)
                queue.append(t.target)
    return None


def enumerate_traces(oracle: TraceOracle, max_len: int = MODERATE_BUDGET) -> list[tuple[str, ...]]:
    """Distinct state paths from start that end in a stop state."""
    out = []

    def walk(sid: str, path: tuple[str, ...]) -> None:
        state = oracle.state(sid)
        if state.stop:
            out.append(path)
        if len(path) - 1 >= max_len:
            return
        for t in state.transitions:
            walk(t.target, path + (t.target,))

    walk(oracle.start, (oracle.start,))
    return out


def check_structure(oracle: TraceOracle) -> list[OracleFinding]:
    findings: list[OracleFinding] = []
    ids = [s.state_id for s in oracle.states]
    if len(set(ids)) != len(ids):
        findings.append(OracleFinding("duplicate-state"))
    idset = set(ids)
    if oracle.start not in idset:
        return findings + [OracleFinding("unknown-start", oracle.start)]
    for s in oracle.states:
        for t in s.transitions:
            if t.target not in idset:
                findings.append(OracleFinding("unknown-target", f"{s.state_id}->{t.target}"))
            if t.target == s.state_id:
                findings.append(OracleFinding("self-loop", s.state_id))
        if not s.stop and not s.transitions:
            findings.append(OracleFinding("dead-state", s.state_id))
    reach = {oracle.start}
    queue = deque([oracle.start])
    while queue:
        for t in oracle.state(queue.popleft()).transitions:
            if t.target in idset and t.target not in reach:
                reach.add(t.target)
                queue.append(t.target)
    for sid in ids:
        if sid not in reach:
            findings.append(OracleFinding("unreachable-state", sid))
    if not oracle.stop_states:
        findings.append(OracleFinding("no-stop-state"))
    path = shortest_path(oracle)
    if path is None:
        findings.append(OracleFinding("no-path-to-stop"))
    elif len(path) + 1 > MODERATE_BUDGET:
        # trace steps = calls plus the final answer
        findings.append(OracleFinding("exceeds-moderate-budget", str(len(path) + 1)))
    return findings


def validate_oracle(oracle: TraceOracle, task: Any) -> list[OracleFinding]:
    """Structural checks plus a replay of the task's reference solution.

    The reference calls must be aligned in sequence, end in a stop state,
    be as short as the shortest oracle path, and leave the sandbox in a
    state the checker accepts.
    """
    findings = check_structure(oracle)
    if findings:
        return findings
    from schemabench.sandbox.tasks import check_final_answer, reset
    from schemabench.tools.executors import execute_tool
    from schemabench.validate import ToolCall

    solution = task.reference_solution
    states = oracle.initial()
    state = reset(task)
    for i, call in enumerate(solution["calls"]):
        verdict, states = classify_call(oracle, states, call["tool"], call["args"])
        if verdict != ALIGNED:
            findings.append(OracleFinding("replay-misaligned", f"call {i + 1}"))
            return findings
        result = execute_tool(ToolCall(call["tool"], call["args"], ""), state)
        if result.status != "ok":
            findings.append(OracleFinding("replay-runtime-error", f"call {i + 1}: {result.payload}"))
            return findings
    if not states & oracle.stop_states:
        findings.append(OracleFinding("replay-not-stopped"))
    shortest = shortest_path(oracle)
    if shortest is not None and len(solution["calls"]) != len(shortest):
        findings.append(OracleFinding("replay-not-shortest", f"{len(solution['calls'])} vs {len(shortest)}"))
    answer = solution["final_answer"]
    text = answer if isinstance(answer, str) else canonical_json(answer)
    verdict = check_final_answer(text, task, state)
    if not verdict.success:
        findings.append(OracleFinding("replay-checker-failed", verdict.reason))
    return findings


# ---------------------------------------------------------------------------
# agreement


def cohen_kappa(labels_a: Sequence[str], labels_b: Sequence[str]) -> float:
    """Two-rater Cohen's kappa; 1.0 when chance agreement is 1 and raters agree."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label lists differ in length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("need at least one label")
    categories = sorted(set(labels_a) | set(labels_b))
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    p_e = sum((labels_a.count(c) / n) * (labels_b.count(c) / n) for c in categories)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)
