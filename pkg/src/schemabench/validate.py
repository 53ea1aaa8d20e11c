"""Agent-output parsing, interface validation and graded diagnostics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, Union

from schemabench.contracts import FieldSpec, ToolContract, json_equal, split_path

GENERIC_MESSAGE = "invalid tool call"
GRANULARITIES = ("C1", "C2", "C3")
CONDITIONS = ("A", "B", "C")

# violation rule -> failure-taxonomy subcategory
RULE_SUBCATEGORY = {
    "required": "missing_required",
    "conditional_required": "missing_required",
    "type": "type_mismatch",
    "enum": "enum_violation",
    "minimum": "constraint_violation",
    "maximum": "constraint_violation",
    "pattern": "constraint_violation",
    "min_length": "constraint_violation",
    "max_length": "constraint_violation",
}

# violation rule -> category shown at C2
_RULE_CATEGORY = {
    "required": "required",
    "conditional_required": "required",
    "enum": "enum",
    "minimum": "bound",
    "maximum": "bound",
    "pattern": "pattern",
    "min_length": "length",
    "max_length": "length",
}


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: Any
    raw_text: str


@dataclass(frozen=True)
class FinalAnswer:
    value: Any
    raw_text: str

    @property
    def text(self) -> str:
        """Answer as text handed to the checker."""
        if isinstance(self.value, str):
            return self.value
        return json.dumps(self.value, sort_keys=True)


@dataclass(frozen=True)
class ParseFailure:
    reason: str  # no-json | truncated | wrong-shape
    raw_text: str


ParseResult = Union[ToolCall, FinalAnswer, ParseFailure]


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    expected: str
    found: Any
    allowed: Optional[tuple] = None

    @property
    def category(self) -> str:
        return _RULE_CATEGORY.get(self.rule, self.expected)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"path": self.path, "expected": self.expected}
        if self.allowed is not None:
            d["allowed"] = list(self.allowed)
        d["found"] = self.found
        return d


@dataclass(frozen=True)
class ValidationReport:
    verdict: str  # valid | interface_invalid | unparseable | unknown_tool
    tool: Optional[str] = None
    violations: tuple[Violation, ...] = ()
    reason: Optional[str] = None
    known_tools: tuple[str, ...] = ()

    @property
    def category(self) -> Optional[str]:
        """Failure-taxonomy subcategory; ``None`` for valid calls."""
        if self.verdict == "unparseable":
            return "malformed_json"
        if self.verdict == "unknown_tool":
            return "wrong_tool_name"
        if self.violations:
            return RULE_SUBCATEGORY[self.violations[0].rule]
        return None

    @classmethod
    def unparseable(cls, reason: str) -> "ValidationReport":
        return cls("unparseable", reason=reason)


# ---------------------------------------------------------------------------
# parsing


def _balanced_end(text: str, start: int) -> Optional[int]:
    """Index one past the ``}`` closing the ``{`` at ``start``; None if open."""
    depth = 0
    in_str = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def parse_agent_output(raw: str) -> ParseResult:
    """Extract the first complete top-level JSON object from ``raw``.

    Balanced ``{...}`` spans that are not valid JSON are skipped; an opening
    brace that never closes makes the output ``truncated``.
    """
    pos = 0
    while True:
        start = raw.find("{", pos)
        if start < 0:
            return ParseFailure("no-json", raw)
        end = _balanced_end(raw, start)
        if end is None:
            return ParseFailure("truncated", raw)
        try:
            obj = json.loads(raw[start:end])
        except json.JSONDecodeError:
            pos = end
            continue
        break
    if isinstance(obj.get("tool"), str) and "args" in obj:
        return ToolCall(obj["tool"], obj["args"], raw)
    if "final_answer" in obj:
        return FinalAnswer(obj["final_answer"], raw)
    return ParseFailure("wrong-shape", raw)


# ---------------------------------------------------------------------------
# validation


def _type_ok(spec: FieldSpec, value: Any) -> bool:
    kind = spec.kind
    if kind == "string":
        return isinstance(value, str)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "integer":
        if isinstance(value, bool):
            return False
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "object":
        return isinstance(value, dict)
    if kind == "array":
        return isinstance(value, list)
    return True  # enum: membership decides


def _fmt_bound(value: Any) -> str:
    return json.dumps(value)


def _check_value(spec: FieldSpec, value: Any, path: str, out: list[Violation]) -> None:
    if not _type_ok(spec, value):
        out.append(Violation(path, "type", spec.kind, value))
        return
    kind = spec.kind
    if kind == "enum":
        if not any(json_equal(value, m) for m in spec.enum_members):
            out.append(Violation(path, "enum", "enum", value, tuple(spec.enum_members)))
    elif kind in ("integer", "number"):
        if spec.minimum is not None and value < spec.minimum:
            out.append(Violation(path, "minimum", f"{kind} >= {_fmt_bound(spec.minimum)}", value))
        if spec.maximum is not None and value > spec.maximum:
            out.append(Violation(path, "maximum", f"{kind} <= {_fmt_bound(spec.maximum)}", value))
    elif kind == "string":
        if spec.pattern is not None and re.search(spec.pattern, value) is None:
            out.append(Violation(path, "pattern", f"string matching {spec.pattern}", value))
        if spec.min_length is not None and len(value) < spec.min_length:
            out.append(Violation(path, "min_length", f"string length >= {spec.min_length}", value))
        if spec.max_length is not None and len(value) > spec.max_length:
            out.append(Violation(path, "max_length", f"string length <= {spec.max_length}", value))
    elif kind == "object":
        _check_object(spec.children, value, path, out)
    elif kind == "array":
        if spec.min_length is not None and len(value) < spec.min_length:
            out.append(Violation(path, "min_length", f"array length >= {spec.min_length}", value))
        if spec.max_length is not None and len(value) > spec.max_length:
            out.append(Violation(path, "max_length", f"array length <= {spec.max_length}", value))
        for i, item in enumerate(value):
            _check_value(spec.item, item, f"{path}[{i}]", out)


def _check_object(specs: Sequence[FieldSpec], obj: dict, prefix: str, out: list[Violation]) -> None:
    for spec in specs:
        path = f"{prefix}.{spec.name}"
        if spec.name in obj:
            _check_value(spec, obj[spec.name], path, out)
        elif spec.required:
            out.append(Violation(path, "required", "required", "missing"))


_MISSING = object()


def _lookup(args: Any, path: str) -> Any:
    node = args
    for part in split_path(path):
        if not isinstance(node, dict) or part not in node:
            return _MISSING
        node = node[part]
    return node


def check_args(contract: ToolContract, args: Any) -> list[Violation]:
    """Every violation of ``contract`` by ``args``, sorted by (path, rule)."""
    out: list[Violation] = []
    if not isinstance(args, dict):
        out.append(Violation("$", "type", "object", args))
        return out
    _check_object(contract.fields, args, "$", out)
    for rule in contract.conditional_rules:
        trigger = _lookup(args, rule.if_path)
        if trigger is _MISSING or not json_equal(trigger, rule.if_equals):
            continue
        for target in rule.then_required:
            if _lookup(args, target) is not _MISSING:
                continue
            flagged = {v.path for v in out}
            parts = split_path(target)
            ancestors = {"$." + ".".join(parts[:k]) for k in range(1, len(parts) + 1)}
            if flagged & ancestors:
                continue
            expected = f"required when {rule.if_path} == {json.dumps(rule.if_equals)}"
            out.append(Violation(target, "conditional_required", expected, "missing"))
    out.sort(key=lambda v: (v.path, v.rule))
    return out


def validate_args(
    call: ToolCall, contracts: Union[Sequence[ToolContract], Mapping[str, ToolContract]]
) -> ValidationReport:
    """Interface validity of ``call``: known tool, then all contract rules."""
    by_name = contracts if isinstance(contracts, Mapping) else {c.name: c for c in contracts}
    known = tuple(by_name)
    contract = by_name.get(call.name)
    if contract is None:
        return ValidationReport("unknown_tool", tool=call.name, known_tools=known)
    violations = tuple(check_args(contract, call.args))
    verdict = "interface_invalid" if violations else "valid"
    return ValidationReport(verdict, tool=call.name, violations=violations, known_tools=known)


# ---------------------------------------------------------------------------
# diagnostics


def _payload(report: ValidationReport, full: bool) -> dict:
    if report.verdict == "unparseable":
        v = {"path": "$", "expected": 'JSON object {"tool": ..., "args": {...}}'}
        if full:
            v["found"] = report.reason
        else:
            v["expected"] = "json object"
        return {"error_type": "MALFORMED_JSON", "tool": None, "violations": [v]}
    if report.verdict == "unknown_tool":
        if full:
            v = {"path": "$.tool", "expected": "enum", "allowed": list(report.known_tools), "found": report.tool}
        else:
            v = {"path": "$.tool", "expected": "enum"}
        return {"error_type": "UNKNOWN_TOOL", "tool": report.tool, "violations": [v]}
    if full:
        items = [v.to_dict() for v in report.violations]
    else:
        items = [{"path": v.path, "expected": v.category} for v in report.violations]
    return {"error_type": "SCHEMA_VALIDATION", "tool": report.tool, "violations": items}


def corrective_hint(v: Violation) -> str:
    if v.allowed is not None:
        return f"set {v.path} to one of {json.dumps(list(v.allowed))}"
    if v.found == "missing" and v.rule in ("required", "conditional_required"):
        return f"set {v.path}; it is {v.expected}"
    return f"set {v.path} to satisfy {v.expected}"


def format_diagnostics(report: ValidationReport, condition: str, granularity: Optional[str] = "C3") -> str:
    """Feedback text shown to the agent for an invalid call.

    Conditions A and B (and C at C1) get the fixed generic message. C2 adds
    path and constraint category; C3 is the full structured error followed
    by one ``hint:`` line per violation.
    """
    if report.verdict == "valid":
        raise ValueError("format_diagnostics called on a valid report")
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    if condition != "C" or granularity in (None, "C1"):
        return GENERIC_MESSAGE
    if granularity == "C2":
        return json.dumps(_payload(report, full=False), indent=2)
    if granularity != "C3":
        raise ValueError(f"unknown granularity {granularity!r}")
    text = json.dumps(_payload(report, full=True), indent=2)
    if report.verdict == "interface_invalid":
        hints = [corrective_hint(v) for v in report.violations]
    elif report.verdict == "unknown_tool":
        hints = [f"set $.tool to one of {json.dumps(list(report.known_tools))}"]
    else:
        hints = ['reply with one JSON object: {"tool": <name>, "args": {...}} or {"final_answer": ...}']
    return text + "\n" + "\n".join(f"hint: {h}" for h in hints)
