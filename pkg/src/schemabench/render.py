"""Condition-specific tool representations.

Condition A gets template prose, conditions B and C share one JSON Schema
document. Both are generated from the same :class:`ToolContract`, and both
can be parsed back into a contract so their constraint content can be
compared atom by atom.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from schemabench.analysis.tokenizer import DEFAULT_TOKENIZER, Tokenizer
from schemabench.contracts import (
    ConditionalRule,
    Example,
    FieldSpec,
    ToolContract,
    canonical_hash,
    canonical_json,
    iter_fields,
    split_path,
)

SCHEMA_DIALECT = "https://json-schema.org/draft/2020-12/schema"
TOOLSET_HEADER = (
    "You can use the tools described below. To call a tool, reply with exactly one JSON object "
    '{"tool": "<name>", "args": {...}}. To finish, reply with {"final_answer": ...}.'
)


@dataclass(frozen=True)
class RenderedSpec:
    condition: str
    tool_name: str
    body: str
    source_hash: str


@dataclass(frozen=True)
class ParityReport:
    tool_name: str
    missing_in_prose: tuple = ()
    missing_in_schema: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.missing_in_prose and not self.missing_in_schema


@dataclass(frozen=True)
class Toolset:
    condition: str
    text: str
    chars: int
    tokens: int
    tokenizer: str


# ---------------------------------------------------------------------------
# prose (condition A)


def _display(path: str) -> str:
    return path[2:].replace("[*]", "[]")


def _literal(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False)


def _field_lines(path: str, spec: FieldSpec, is_item: bool) -> list[str]:
    status = "each item" if is_item else ("required" if spec.required else "optional")
    lines = [f"- `{_display(path)}` ({spec.kind}, {status})."]
    if spec.enum_members is not None:
        lines.append("  Allowed values: " + ", ".join(_literal(m) for m in spec.enum_members) + ".")
    if spec.minimum is not None:
        lines.append(f"  Minimum: {_literal(spec.minimum)}.")
    if spec.maximum is not None:
        lines.append(f"  Maximum: {_literal(spec.maximum)}.")
    if spec.pattern is not None:
        lines.append(f"  Must match the pattern `{spec.pattern}`.")
    unit = "number of items" if spec.kind == "array" else "length"
    if spec.min_length is not None:
        lines.append(f"  Minimum {unit}: {spec.min_length}.")
    if spec.max_length is not None:
        lines.append(f"  Maximum {unit}: {spec.max_length}.")
    if spec.description:
        lines.append(f"  Meaning: {spec.description}")
    return lines


def render_prose(contract: ToolContract) -> RenderedSpec:
    lines = [f"Tool `{contract.name}`", f"Purpose: {contract.description}"]
    fields = list(iter_fields(contract))
    lines.append("Arguments:" if fields else "Arguments: none.")
    for path, spec in fields:
        lines.extend(_field_lines(path, spec, path.endswith("[*]")))
    if contract.conditional_rules:
        lines.append("Conditions:")
        for rule in contract.conditional_rules:
            for target in rule.then_required:
                lines.append(
                    f"- When `{_display(rule.if_path)}` equals {_literal(rule.if_equals)}, "
                    f"`{_display(target)}` is required."
                )
    for example in contract.examples:
        lines.append("Example call arguments: " + json.dumps(example.args, ensure_ascii=False))
        if example.note:
            lines.append(f"  Note: {example.note}")
    return RenderedSpec("A", contract.name, "\n".join(lines) + "\n", canonical_hash(contract))


_FIELD_RE = re.compile(r"^- `([^`]+)` \((\w+), (required|optional|each item)\)\.$")
_RULE_RE = re.compile(r"^- When `([^`]+)` equals (.+), `([^`]+)` is required\.$")


def _from_display(display: str) -> str:
    return "$." + display.replace("[]", "[*]")


def _parse_literal_list(text: str) -> list:
    return json.loads("[" + text + "]")


class ProseParseError(ValueError):
    pass


def prose_to_contract(body: str) -> ToolContract:
    """Rebuild a contract from template prose (inverse of render_prose)."""
    lines = body.splitlines()
    if not lines or not lines[0].startswith("Tool `"):
        raise ProseParseError("missing tool header")
    name = lines[0][len("Tool `"):-1]
    description = ""
    attrs: dict[str, dict] = {}
    order: list[str] = []
    rules: list[tuple[str, Any, str]] = []
    examples: list[list] = []
    current: Optional[dict] = None
    for line in lines[1:]:
        if line.startswith("Purpose: "):
            description = line[len("Purpose: "):]
            continue
        m = _FIELD_RE.match(line)
        if m:
            path = _from_display(m.group(1))
            current = {"kind": m.group(2), "status": m.group(3)}
            attrs[path] = current
            order.append(path)
            continue
        m = _RULE_RE.match(line)
        if m:
            rules.append((_from_display(m.group(1)), json.loads(m.group(2)), _from_display(m.group(3))))
            current = None
            continue
        if line.startswith("Example call arguments: "):
            examples.append([json.loads(line[len("Example call arguments: "):]), ""])
            current = None
            continue
        if line.startswith("  Note: ") and examples:
            examples[-1][1] = line[len("  Note: "):]
            continue
        if current is None or not line.startswith("  "):
            continue
        text = line[2:]
        if text.startswith("Allowed values: "):
            current["enum"] = _parse_literal_list(text[len("Allowed values: "):-1])
        elif text.startswith("Minimum: "):
            current["minimum"] = json.loads(text[len("Minimum: "):-1])
        elif text.startswith("Maximum: "):
            current["maximum"] = json.loads(text[len("Maximum: "):-1])
        elif text.startswith("Must match the pattern `"):
            current["pattern"] = text[len("Must match the pattern `"):-2]
        elif text.startswith(("Minimum length: ", "Minimum number of items: ")):
            current["min_length"] = int(text.split(": ", 1)[1][:-1])
        elif text.startswith(("Maximum length: ", "Maximum number of items: ")):
            current["max_length"] = int(text.split(": ", 1)[1][:-1])
        elif text.startswith("Meaning: "):
            current["description"] = text[len("Meaning: "):]

    def build(path: str) -> FieldSpec:
        a = attrs[path]
        if a["kind"] == "array":
            item = path + "[*]"
            children: Optional[tuple] = (build(item),) if item in attrs else None
        elif a["kind"] == "object":
            kids = [p for p in order if _parent(p) == path]
            children = tuple(build(p) for p in kids) if kids else None
        else:
            children = None
        return FieldSpec(
            name="items" if path.endswith("[*]") else path.rsplit(".", 1)[1],
            kind=a["kind"],
            required=a["status"] != "optional",
            description=a.get("description", ""),
            enum_members=tuple(a["enum"]) if "enum" in a else None,
            minimum=a.get("minimum"),
            maximum=a.get("maximum"),
            pattern=a.get("pattern"),
            min_length=a.get("min_length"),
            max_length=a.get("max_length"),
            children=children,
        )

    top = tuple(build(p) for p in order if _parent(p) == "$")
    grouped: list[ConditionalRule] = []
    for if_path, value, target in rules:
        last = grouped[-1] if grouped else None
        if last and last.if_path == if_path and canonical_json(last.if_equals) == canonical_json(value):
            grouped[-1] = ConditionalRule(if_path, value, last.then_required + (target,))
        else:
            grouped.append(ConditionalRule(if_path, value, (target,)))
    return ToolContract(
        name, description, top, tuple(grouped), tuple(Example(a, n) for a, n in examples)
    )


def _parent(path: str) -> str:
    if path.endswith("[*]"):
        return path[:-3]
    return path.rsplit(".", 1)[0]


# ---------------------------------------------------------------------------
# JSON Schema (conditions B and C)


def _field_schema(spec: FieldSpec) -> dict:
    s: dict[str, Any] = {}
    if spec.kind == "enum":
        s["enum"] = list(spec.enum_members)
    else:
        s["type"] = spec.kind
    if spec.description:
        s["description"] = spec.description
    if spec.minimum is not None:
        s["minimum"] = spec.minimum
    if spec.maximum is not None:
        s["maximum"] = spec.maximum
    if spec.pattern is not None:
        s["pattern"] = spec.pattern
    if spec.kind == "array":
        if spec.min_length is not None:
            s["minItems"] = spec.min_length
        if spec.max_length is not None:
            s["maxItems"] = spec.max_length
        s["items"] = _field_schema(spec.item)
    else:
        if spec.min_length is not None:
            s["minLength"] = spec.min_length
        if spec.max_length is not None:
            s["maxLength"] = spec.max_length
    if spec.kind == "object":
        s.update(_object_schema(spec.children))
    return s


def _object_schema(children: Sequence[FieldSpec]) -> dict:
    s: dict[str, Any] = {"properties": {c.name: _field_schema(c) for c in children}}
    required = [c.name for c in children if c.required]
    if required:
        s["required"] = required
    return s


def _nest(parts: list[str], leaf: Optional[dict]) -> dict:
    """Schema requiring the object path ``parts`` (and ``leaf`` at its end)."""
    head, rest = parts[0], parts[1:]
    if rest:
        inner = {"type": "object", **_nest(rest, leaf)}
    else:
        inner = leaf
    if inner is None:
        return {"required": [head]}
    return {"properties": {head: inner}, "required": [head]}


def contract_schema(contract: ToolContract) -> dict:
    schema: dict[str, Any] = {
        "$schema": SCHEMA_DIALECT,
        "title": contract.name,
        "description": contract.description,
        "type": "object",
    }
    schema.update(_object_schema(contract.fields))
    conditions = []
    for rule in contract.conditional_rules:
        trigger = _nest(split_path(rule.if_path), {"const": rule.if_equals})
        for target in rule.then_required:
            conditions.append({"if": trigger, "then": _nest(split_path(target), None)})
    if conditions:
        schema["allOf"] = conditions
    schema["examples"] = [e.args for e in contract.examples]
    schema["x-example-notes"] = [e.note for e in contract.examples]
    return schema


def render_schema(contract: ToolContract, condition: str = "B") -> RenderedSpec:
    if condition not in ("B", "C"):
        raise ValueError("schema renderings serve conditions B and C")
    body = json.dumps(contract_schema(contract), indent=2, ensure_ascii=False) + "\n"
    return RenderedSpec(condition, contract.name, body, canonical_hash(contract))


def _spec_from_schema(name: str, s: dict, required: bool) -> FieldSpec:
    if "enum" in s:
        kind = "enum"
    else:
        kind = s["type"]
    children = None
    if kind == "object":
        req = set(s.get("required", []))
        children = tuple(_spec_from_schema(k, v, k in req) for k, v in s.get("properties", {}).items())
    elif kind == "array" and "items" in s:
        children = (_spec_from_schema("items", s["items"], True),)
    if kind == "array":
        lo, hi = s.get("minItems"), s.get("maxItems")
    else:
        lo, hi = s.get("minLength"), s.get("maxLength")
    return FieldSpec(
        name=name,
        kind=kind,
        required=required,
        description=s.get("description", ""),
        enum_members=tuple(s["enum"]) if "enum" in s else None,
        minimum=s.get("minimum"),
        maximum=s.get("maximum"),
        pattern=s.get("pattern"),
        min_length=lo,
        max_length=hi,
        children=children,
    )


def _unnest(node: dict) -> tuple[str, Optional[dict]]:
    """Inverse of :func:`_nest`: ``("$.a.b", leaf)``."""
    parts = []
    while True:
        head = node["required"][0]
        parts.append(head)
        sub = node.get("properties", {}).get(head)
        if sub is None or "const" in sub:
            return "$." + ".".join(parts), sub
        node = sub


def schema_to_contract(schema: dict) -> ToolContract:
    """Rebuild a contract from a rendered schema (inverse of render_schema)."""
    req = set(schema.get("required", []))
    fields = tuple(
        _spec_from_schema(k, v, k in req) for k, v in schema.get("properties", {}).items()
    )
    rules: list[ConditionalRule] = []
    for cond in schema.get("allOf", []):
        if_path, leaf = _unnest(cond["if"])
        value = leaf["const"]
        target, _ = _unnest(cond["then"])
        last = rules[-1] if rules else None
        if last and last.if_path == if_path and canonical_json(last.if_equals) == canonical_json(value):
            rules[-1] = ConditionalRule(if_path, value, last.then_required + (target,))
        else:
            rules.append(ConditionalRule(if_path, value, (target,)))
    notes = schema.get("x-example-notes", [])
    examples = tuple(
        Example(a, notes[i] if i < len(notes) else "") for i, a in enumerate(schema.get("examples", []))
    )
    return ToolContract(schema["title"], schema.get("description", ""), fields, tuple(rules), examples)


# ---------------------------------------------------------------------------
# parity


def constraint_atoms(contract: ToolContract) -> set[tuple[str, str, str]]:
    """Decompose a contract into ``(path, attribute, canonical value)`` atoms."""
    atoms = {("$", "tool", contract.name), ("$", "description", contract.description)}
    for path, spec in iter_fields(contract):
        atoms.add((path, "kind", spec.kind))
        if not path.endswith("[*]"):
            atoms.add((path, "required", canonical_json(spec.required)))
        if spec.description:
            atoms.add((path, "description", spec.description))
        for member in spec.enum_members or ():
            atoms.add((path, "enum", canonical_json(member)))
        for attr in ("minimum", "maximum", "pattern", "min_length", "max_length"):
            value = getattr(spec, attr)
            if value is not None:
                atoms.add((path, attr, canonical_json(value)))
    for rule in contract.conditional_rules:
        for target in rule.then_required:
            atoms.add(("$", "conditional", canonical_json([rule.if_path, rule.if_equals, target])))
    for example in contract.examples:
        atoms.add(("$", "example", canonical_json({"args": example.args, "note": example.note})))
    return atoms


def prose_atoms(body: str) -> set:
    return constraint_atoms(prose_to_contract(body))


def schema_atoms(body: str) -> set:
    return constraint_atoms(schema_to_contract(json.loads(body)))


def check_parity(
    contract: ToolContract, prose: Optional[str] = None, schema: Optional[str] = None
) -> ParityReport:
    """Diff the constraint atoms of the prose and schema renderings.

    ``prose``/``schema`` override the generated bodies (for auditing a
    rendering that was edited after generation).
    """
    prose_body = prose if prose is not None else render_prose(contract).body
    schema_body = schema if schema is not None else render_schema(contract).body
    p = prose_atoms(prose_body)
    s = schema_atoms(schema_body)
    return ParityReport(contract.name, tuple(sorted(s - p)), tuple(sorted(p - s)))


# ---------------------------------------------------------------------------
# toolset


def render_spec(contract: ToolContract, condition: str) -> RenderedSpec:
    if condition == "A":
        return render_prose(contract)
    return render_schema(contract, condition)


def render_toolset(
    contracts: Sequence[ToolContract], condition: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER
) -> Toolset:
    """Full tool block for the agent prompt; only spec bodies vary by condition."""
    if condition not in ("A", "B", "C"):
        raise ValueError(f"unknown condition {condition!r}")
    parts = [TOOLSET_HEADER]
    for contract in contracts:
        spec = render_spec(contract, condition)
        parts.append(f"=== tool: {contract.name} ===\n{spec.body}")
    text = "\n\n".join(parts) + "\n"
    return Toolset(condition, text, len(text), tokenizer.count(text), tokenizer.name)
