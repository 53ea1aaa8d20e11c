"""Canonical tool contracts.

A :class:`ToolContract` is the single source from which every interface
representation (prose, JSON Schema) is generated and against which every
call is validated. Contracts are immutable once loaded.

Contract Pack format::

    {"version": 1, "tools": [
        {"name": "get_metric", "description": "...",
         "fields": [{"name": "metric_key", "kind": "enum", "required": true,
                     "description": "...", "enum": ["p95_latency", "error_rate"]}],
         "conditional_rules": [],
         "examples": [{"args": {...}, "note": "..."}]}
    ]}
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence, Union

from schemabench._rng import SplitMix64

KINDS = ("string", "integer", "number", "boolean", "enum", "object", "array")
SCALAR_KINDS = ("string", "integer", "number", "boolean", "enum")
NAME_RE = re.compile(r"[a-z][a-z0-9_]*")
PACK_VERSION = 1

# Shared vocabulary with the sandbox generator.
SERVICES = ("api", "auth", "db", "worker")
METRIC_KEYS = ("p95_latency", "error_rate")
ISO_PATTERN = "^[0-9]+-[0-9]+-[0-9]+T[0-9]+:[0-9]+:[0-9]+Z$"
PATH_PATTERN = "^[A-Za-z0-9_./-]*$"


class ContractError(ValueError):
    """Base class for contract loading failures."""


class ContractParseError(ContractError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ContractIntegrityError(ContractError):
    def __init__(self, contract: str, findings: Sequence["Finding"]):
        lines = "; ".join(f"{f.path}: {f.rule}" for f in findings)
        super().__init__(f"contract {contract!r} failed integrity check: {lines}")
        self.contract = contract
        self.findings = list(findings)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    required: bool
    description: str = ""
    enum_members: Optional[tuple] = None
    minimum: Optional[Union[int, float]] = None
    maximum: Optional[Union[int, float]] = None
    pattern: Optional[str] = None
    min_length: Optional[int] = None
    max_length: Optional[int] = None
    children: Optional[tuple["FieldSpec", ...]] = None

    @property
    def item(self) -> "FieldSpec":
        """Element spec of an array field."""
        assert self.kind == "array" and self.children
        return self.children[0]


@dataclass(frozen=True)
class ConditionalRule:
    if_path: str
    if_equals: Any
    then_required: tuple[str, ...]


@dataclass(frozen=True)
class Example:
    args: Any
    note: str = ""


@dataclass(frozen=True)
class ToolContract:
    name: str
    description: str
    fields: tuple[FieldSpec, ...]
    conditional_rules: tuple[ConditionalRule, ...] = ()
    examples: tuple[Example, ...] = ()

    def field_at(self, path: str) -> Optional[FieldSpec]:
        return dict(iter_fields(self)).get(path)


@dataclass(frozen=True)
class Finding:
    path: str
    rule: str
    detail: str = ""


# ---------------------------------------------------------------------------
# paths


def split_path(path: str) -> list[str]:
    """``"$.a.b"`` -> ``["a", "b"]``. Only object segments are supported."""
    if path == "$":
        return []
    if not path.startswith("$."):
        raise ValueError(f"not a field path: {path!r}")
    return path[2:].split(".")


def iter_fields(contract: ToolContract) -> Iterator[tuple[str, FieldSpec]]:
    """Yield ``(path, spec)`` depth-first in declaration order.

    Array elements are addressed as ``$.arr[*]``.
    """

    def walk(prefix: str, specs: Sequence[FieldSpec]):
        for spec in specs:
            path = f"{prefix}.{spec.name}"
            yield path, spec
            if spec.kind == "object" and spec.children:
                yield from walk(path, spec.children)
            elif spec.kind == "array" and spec.children:
                item_path = f"{path}[*]"
                item = spec.children[0]
                yield item_path, item
                if item.kind == "object" and item.children:
                    yield from walk(item_path, item.children)

    yield from walk("$", contract.fields)


def json_equal(a: Any, b: Any) -> bool:
    """JSON value equality (``True`` is not ``1``; ``1`` equals ``1.0``)."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    if type(a) is not type(b):
        return False
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(json_equal(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(json_equal(x, y) for x, y in zip(a, b))
    return a == b


# ---------------------------------------------------------------------------
# regex subset

_META = set(".?{}()|[]*+^$\\")


def check_pattern(pattern: str) -> Optional[str]:
    """Return an error message if ``pattern`` is outside the supported subset.

    Supported: literal characters, ``\\``-escaped punctuation, bracket classes
    with ranges and optional negation, ``*`` and ``+`` after an atom, a
    leading ``^`` and a trailing ``$``. Backticks are rejected so the pattern
    can be quoted verbatim in prose.
    """
    if "`" in pattern or "\n" in pattern:
        return "backtick or newline in pattern"
    i, n = 0, len(pattern)
    if pattern.startswith("^"):
        i = 1
    end = n
    if n > i and pattern.endswith("$") and not _escaped_at(pattern, n - 1):
        end = n - 1
    prev_atom = False
    while i < end:
        ch = pattern[i]
        if ch in "*+":
            if not prev_atom:
                return f"quantifier without atom at {i}"
            prev_atom = False
            i += 1
        elif ch == "\\":
            if i + 1 >= end or pattern[i + 1].isalnum():
                return f"unsupported escape at {i}"
            prev_atom = True
            i += 2
        elif ch == "[":
            j = i + 1
            if j < end and pattern[j] == "^":
                j += 1
            start = j
            while j < end and pattern[j] != "]":
                if pattern[j] == "\\":
                    if j + 1 >= end or pattern[j + 1].isalnum():
                        return f"unsupported escape at {j}"
                    j += 1
                elif pattern[j] == "[":
                    return f"nested class at {j}"
                j += 1
            if j >= end or j == start:
                return f"unterminated or empty class at {i}"
            prev_atom = True
            i = j + 1
        elif ch in _META:
            return f"unsupported construct {ch!r} at {i}"
        else:
            prev_atom = True
            i += 1
    try:
        re.compile(pattern)
    except re.error as exc:
        return str(exc)
    return None


def _escaped_at(s: str, idx: int) -> bool:
    count = 0
    k = idx - 1
    while k >= 0 and s[k] == "\\":
        count += 1
        k -= 1
    return count % 2 == 1


# ---------------------------------------------------------------------------
# (de)serialization


def _field_from_dict(d: dict) -> FieldSpec:
    if not isinstance(d, dict):
        raise ContractError(f"field must be an object, got {type(d).__name__}")
    for key in ("name", "kind", "required", "description"):
        if key not in d:
            raise ContractError(f"field {d.get('name', '?')!r} lacks {key!r}")
    children = d.get("children")
    return FieldSpec(
        name=d["name"],
        kind=d["kind"],
        required=d["required"],
        description=d["description"],
        enum_members=tuple(d["enum"]) if "enum" in d else None,
        minimum=d.get("minimum"),
        maximum=d.get("maximum"),
        pattern=d.get("pattern"),
        min_length=d.get("min_length"),
        max_length=d.get("max_length"),
        children=tuple(_field_from_dict(c) for c in children) if children is not None else None,
    )


def field_to_dict(spec: FieldSpec) -> dict:
    d: dict[str, Any] = {
        "name": spec.name,
        "kind": spec.kind,
        "required": spec.required,
        "description": spec.description,
    }
    if spec.enum_members is not None:
        d["enum"] = list(spec.enum_members)
    for attr in ("minimum", "maximum", "pattern", "min_length", "max_length"):
        value = getattr(spec, attr)
        if value is not None:
            d[attr] = value
    if spec.children is not None:
        d["children"] = [field_to_dict(c) for c in spec.children]
    return d


def contract_from_dict(d: dict) -> ToolContract:
    if not isinstance(d, dict):
        raise ContractError("tool entry must be an object")
    for key in ("name", "description", "fields", "conditional_rules", "examples"):
        if key not in d:
            raise ContractError(f"tool {d.get('name', '?')!r} lacks {key!r}")
    rules = tuple(
        ConditionalRule(r["if_path"], r["if_equals"], tuple(r["then_required"]))
        for r in d["conditional_rules"]
    )
    examples = tuple(Example(e["args"], e.get("note", "")) for e in d["examples"])
    return ToolContract(
        name=d["name"],
        description=d["description"],
        fields=tuple(_field_from_dict(f) for f in d["fields"]),
        conditional_rules=rules,
        examples=examples,
    )


def contract_to_dict(c: ToolContract) -> dict:
    return {
        "name": c.name,
        "description": c.description,
        "fields": [field_to_dict(f) for f in c.fields],
        "conditional_rules": [
            {"if_path": r.if_path, "if_equals": r.if_equals, "then_required": list(r.then_required)}
            for r in c.conditional_rules
        ],
        "examples": [{"args": e.args, "note": e.note} for e in c.examples],
    }


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_hash(contract: ToolContract) -> str:
    """SHA-256 of the key-sorted, whitespace-free serialization."""
    data = canonical_json(contract_to_dict(contract)).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def dump_contract_pack(contracts: Sequence[ToolContract], indent: Optional[int] = 2) -> str:
    doc = {"version": PACK_VERSION, "tools": [contract_to_dict(c) for c in contracts]}
    return json.dumps(doc, indent=indent, ensure_ascii=False) + ("\n" if indent else "")


def load_contract_pack(source: Union[bytes, str]) -> list[ToolContract]:
    """Parse a Contract Pack and integrity-check every contract.

    Raises:
        ContractParseError: malformed JSON or wrong top-level shape.
        ContractIntegrityError: the first contract with findings.
    """
    raw = source if isinstance(source, bytes) else source.encode("utf-8")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ContractParseError("invalid UTF-8", exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ContractParseError(exc.msg, offset) from exc
    if not isinstance(doc, dict) or doc.get("version") != PACK_VERSION or not isinstance(doc.get("tools"), list):
        raise ContractParseError("expected {\"version\": 1, \"tools\": [...]}", 0)
    contracts = []
    for entry in doc["tools"]:
        try:
            contract = contract_from_dict(entry)
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed tool entry: {exc}") from exc
        findings = check_contract(contract)
        if findings:
            raise ContractIntegrityError(contract.name, findings)
        contracts.append(contract)
    return contracts


def pack_digest(contracts: Sequence[ToolContract]) -> str:
    doc = {"version": PACK_VERSION, "tools": [contract_to_dict(c) for c in contracts]}
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# integrity


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_field(spec: FieldSpec, path: str, out: list[Finding], is_item: bool = False) -> None:
    def add(rule: str, detail: str = "") -> None:
        out.append(Finding(path, rule, detail))

    if not isinstance(spec.name, str) or not NAME_RE.fullmatch(spec.name):
        add("invalid-name", repr(spec.name))
    if spec.kind not in KINDS:
        add("unknown-kind", repr(spec.kind))
        return
    if not isinstance(spec.required, bool):
        add("invalid-required")
    if not isinstance(spec.description, str) or "\n" in spec.description:
        add("multiline-text", "description")
    if is_item:
        if spec.name != "items":
            add("array-item-name")
        if spec.required is not True:
            add("array-item-optional")

    if (spec.enum_members is not None) != (spec.kind == "enum"):
        add("enum-members-mismatch")
    if spec.kind == "enum" and spec.enum_members is not None:
        members = spec.enum_members
        if any(not (isinstance(m, (str, bool)) or _is_number(m)) for m in members):
            add("non-scalar-enum")
        distinct = []
        for m in members:
            if not any(json_equal(m, d) for d in distinct):
                distinct.append(m)
        if len(distinct) < 2:
            add("degenerate-enum")
        elif len(distinct) != len(members):
            add("duplicate-enum-member")

    for attr in ("minimum", "maximum"):
        value = getattr(spec, attr)
        if value is None:
            continue
        if spec.kind not in ("integer", "number"):
            add("inapplicable-attribute", attr)
        elif not _is_number(value):
            add("invalid-bound", attr)
    if _is_number(spec.minimum) and _is_number(spec.maximum) and spec.minimum > spec.maximum:
        add("inverted-bounds")

    if spec.pattern is not None:
        if spec.kind != "string":
            add("inapplicable-attribute", "pattern")
        else:
            err = check_pattern(spec.pattern) if isinstance(spec.pattern, str) else "not a string"
            if err:
                add("bad-pattern", err)

    for attr in ("min_length", "max_length"):
        value = getattr(spec, attr)
        if value is None:
            continue
        if spec.kind not in ("string", "array"):
            add("inapplicable-attribute", attr)
        elif not isinstance(value, int) or isinstance(value, bool) or value < 0:
            add("invalid-length", attr)
    if (
        isinstance(spec.min_length, int)
        and isinstance(spec.max_length, int)
        and spec.min_length > spec.max_length
    ):
        add("inverted-length")

    if spec.kind == "object":
        if not spec.children:
            add("children-mismatch", "object needs at least one child")
        else:
            _check_siblings(spec.children, path, out)
    elif spec.kind == "array":
        if not spec.children or len(spec.children) != 1:
            add("children-mismatch", "array needs exactly one item spec")
        else:
            _check_field(spec.children[0], f"{path}[*]", out, is_item=True)
    elif spec.children is not None:
        add("children-mismatch", "scalar kinds take no children")


def _check_siblings(specs: Sequence[FieldSpec], prefix: str, out: list[Finding]) -> None:
    seen: set[str] = set()
    for spec in specs:
        path = f"{prefix}.{spec.name}"
        if spec.name in seen:
            out.append(Finding(path, "duplicate-field"))
        seen.add(spec.name)
        _check_field(spec, path, out)


def _object_path_spec(contract: ToolContract, path: Any) -> Optional[FieldSpec]:
    """Resolve a conditional-rule path through object fields only."""
    if not isinstance(path, str):
        return None
    try:
        parts = split_path(path)
    except ValueError:
        return None
    if not parts:
        return None
    specs: Sequence[FieldSpec] = contract.fields
    spec = None
    for i, part in enumerate(parts):
        spec = next((s for s in specs if s.name == part), None)
        if spec is None:
            return None
        if i < len(parts) - 1:
            if spec.kind != "object" or not spec.children:
                return None
            specs = spec.children
    return spec


def check_contract(contract: ToolContract) -> list[Finding]:
    """Integrity findings; empty iff every contract invariant holds."""
    out: list[Finding] = []
    if not isinstance(contract.name, str) or not NAME_RE.fullmatch(contract.name):
        out.append(Finding("$", "invalid-name", repr(contract.name)))
    if not isinstance(contract.description, str) or "\n" in contract.description:
        out.append(Finding("$", "multiline-text", "description"))
    _check_siblings(contract.fields, "$", out)

    for i, rule in enumerate(contract.conditional_rules):
        where = f"conditional_rules[{i}]"
        target = _object_path_spec(contract, rule.if_path)
        if target is None or target.kind not in SCALAR_KINDS:
            out.append(Finding(where, "unknown-conditional-path", str(rule.if_path)))
        if isinstance(rule.if_equals, (dict, list)):
            out.append(Finding(where, "non-scalar-condition"))
        if not rule.then_required:
            out.append(Finding(where, "empty-conditional"))
        for p in rule.then_required:
            if _object_path_spec(contract, p) is None:
                out.append(Finding(where, "unknown-conditional-path", str(p)))

    if out:
        # example validation presumes a structurally sound contract
        return _sorted(out)

    from schemabench.validate import check_args  # circular at import time

    valid = 0
    for i, example in enumerate(contract.examples):
        violations = check_args(contract, example.args)
        if violations:
            out.append(Finding(f"examples[{i}]", "invalid-example", violations[0].path))
        else:
            valid += 1
    if valid == 0:
        out.append(Finding("$", "no-valid-example"))
    return _sorted(out)


def _sorted(findings: list[Finding]) -> list[Finding]:
    return sorted(findings, key=lambda f: (f.path, f.rule, f.detail))


# ---------------------------------------------------------------------------
# built-in pack


def _s(name: str, required: bool, description: str, **kw: Any) -> FieldSpec:
    return FieldSpec(name, "string", required, description, **kw)


def default_contract_pack(schema_depth: int = 0) -> list[ToolContract]:
    """The seven diagnostic tools, in canonical order.

    ``schema_depth`` > 0 adds an optional nested ``options`` object to
    ``search_logs`` (depth 2 nests a ``filter`` object inside it).
    """
    time_range = FieldSpec(
        "time_range", "object", True, "Inclusive time window to search.",
        children=(
            _s("start", True, "Window start as an ISO-8601 UTC timestamp.", pattern=ISO_PATTERN),
            _s("end", True, "Window end as an ISO-8601 UTC timestamp.", pattern=ISO_PATTERN),
        ),
    )
    log_fields = [
        _s("query", True, "Case-insensitive substring matched against level and message.",
           min_length=1, max_length=200),
        time_range,
        FieldSpec("service", "enum", True, "Service whose logs are searched.", enum_members=SERVICES),
    ]
    log_example = {
        "query": "ERROR",
        "time_range": {"start": "2024-05-01T00:00:00Z", "end": "2024-05-01T23:59:59Z"},
        "service": "api",
    }
    if schema_depth > 0:
        option_children: list[FieldSpec] = [
            FieldSpec("limit", "integer", False, "Maximum number of lines returned.", minimum=1, maximum=50),
            FieldSpec("order", "enum", False, "Result ordering by timestamp.", enum_members=("asc", "desc")),
        ]
        if schema_depth > 1:
            option_children.append(
                FieldSpec(
                    "filter", "object", False, "Additional line filters.",
                    children=(
                        FieldSpec("level", "enum", False, "Only lines at this level.",
                                  enum_members=("INFO", "WARN", "ERROR")),
                    ),
                )
            )
        log_fields.append(FieldSpec("options", "object", False, "Result shaping options.",
                                    children=tuple(option_children)))

    return [
        ToolContract(
            "search_logs",
            "Search timestamped service logs within a time range.",
            tuple(log_fields),
            examples=(Example(log_example, "all error lines of the api service on one day"),),
        ),
        ToolContract(
            "get_metric",
            "Read one precomputed metric snapshot for a service and window.",
            (
                FieldSpec("metric_key", "enum", True, "Metric identifier.", enum_members=METRIC_KEYS),
                FieldSpec("service", "enum", True, "Service the metric belongs to.", enum_members=SERVICES),
                FieldSpec(
                    "window", "object", True, "Aggregation window.",
                    children=(
                        FieldSpec("minutes", "integer", True, "Window length in minutes.", minimum=1, maximum=1440),
                    ),
                ),
            ),
            examples=(
                Example({"metric_key": "p95_latency", "service": "api", "window": {"minutes": 5}},
                        "five minute p95 latency of the api service"),
            ),
        ),
        ToolContract(
            "list_dir",
            "List the entries of a sandbox directory.",
            (_s("path", True, "Directory path relative to the sandbox root; empty for the root.",
                max_length=256, pattern=PATH_PATTERN),),
            examples=(Example({"path": "configs"}, "list configuration files"),),
        ),
        ToolContract(
            "read_file",
            "Read the full text of a sandbox file.",
            (_s("path", True, "File path relative to the sandbox root.",
                min_length=1, max_length=256, pattern=PATH_PATTERN),),
            examples=(Example({"path": "configs/api.yaml"}, "read the api configuration"),),
        ),
        ToolContract(
            "grep_repo",
            "Find repository lines containing a literal substring.",
            (
                _s("pattern", True, "Literal substring to search for.", min_length=1, max_length=200),
                _s("glob", False, "File-name filter where * matches any run of characters.",
                   min_length=1, pattern="^[A-Za-z0-9_.*-]+$"),
            ),
            examples=(Example({"pattern": "fn ", "glob": "*.mini"}, "all function definitions"),),
        ),
        ToolContract(
            "run_tests",
            "Run the repository unit tests and report failures.",
            (
                FieldSpec("mode", "enum", False, "Run every test or only the selected ones.",
                          enum_members=("all", "selected")),
                _s("selector", False, "Test-name filter where * matches any run of characters.",
                   min_length=1, pattern="^[A-Za-z0-9_*]+$"),
            ),
            conditional_rules=(ConditionalRule("$.mode", "selected", ("$.selector",)),),
            examples=(
                Example({"mode": "all"}, "run the whole suite"),
                Example({"mode": "selected", "selector": "test_clamp_*"}, "run the clamp tests"),
            ),
        ),
        ToolContract(
            "apply_patch",
            "Apply a single-file unified diff with exact context matching.",
            (
                _s("file", True, "Path of the file to patch.", min_length=1, max_length=256, pattern=PATH_PATTERN),
                _s("diff", True, "Unified diff hunks for that file."),
            ),
            examples=(
                Example(
                    {"file": "repo/src/core.mini", "diff": "@@ -1,1 +1,1 @@\n-fn inc(a) = a - 1\n+fn inc(a) = a + 1\n"},
                    "replace one line",
                ),
            ),
        ),
    ]


# ---------------------------------------------------------------------------
# random contracts (robustness knob and property tests)

_WORDS = ("alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta")
# (pattern, witnesses that match it)
PATTERN_POOL = (
    ("^[a-z]+$", ("abc", "zz")),
    ("^ab*c", ("ac", "abbc")),
    ("x+y$", ("xy", "axxy")),
    ("^[0-9]+-[a-z]*$", ("1-", "42-ab")),
    ("^[A-Z][a-z]+", ("Ab", "Xyz")),
    ("^[^0-9]+$", ("ab", "q-z")),
)


def random_contract(
    seed: int,
    max_fields: int = 4,
    depth: int = 1,
    conditionals: bool = True,
    name: Optional[str] = None,
) -> ToolContract:
    """Generate a valid contract with at most ``max_fields`` declared fields.

    ``depth`` bounds object nesting; arrays hold scalar items.
    """
    rng = SplitMix64(seed)
    budget = [max_fields]

    def make(field_name: str, level: int, is_item: bool = False) -> FieldSpec:
        budget[0] -= 1
        kinds = list(SCALAR_KINDS)
        if level < depth and budget[0] >= 1 and not is_item:
            kinds += ["object", "array"]
        kind = rng.choice(kinds)
        required = True if is_item else rng.below(2) == 0
        desc = f"The {field_name.replace('_', ' ')} value."
        kw: dict[str, Any] = {}
        if kind == "string":
            if rng.below(2) == 0:
                kw["pattern"] = rng.choice(PATTERN_POOL)[0]
            if rng.below(2) == 0:
                kw["min_length"] = rng.randint(0, 2)
            if rng.below(2) == 0:
                kw["max_length"] = rng.randint(5, 8)
        elif kind in ("integer", "number"):
            lo = rng.randint(-3, 3)
            if rng.below(3) != 0:
                kw["minimum"] = lo if kind == "integer" else lo + 0.5
            if rng.below(3) != 0:
                kw["maximum"] = lo + rng.randint(2, 6)
        elif kind == "enum":
            kw["enum_members"] = tuple(rng.sample(_WORDS, rng.randint(2, 4)))
        elif kind == "object":
            n = min(budget[0], rng.randint(1, 2))
            names = rng.sample(_WORDS, n)
            kw["children"] = tuple(make(nm, level + 1) for nm in names)
        elif kind == "array":
            kw["children"] = (make("items", level + 1, is_item=True),)
            if rng.below(2) == 0:
                kw["min_length"] = rng.randint(0, 1)
            if rng.below(2) == 0:
                kw["max_length"] = rng.randint(2, 3)
        return FieldSpec(field_name, kind, required, desc, **kw)

    fields: list[FieldSpec] = []
    pool = [f"f_{w}" for w in _WORDS]
    rng.shuffle(pool)
    target = rng.randint(1, max_fields)
    while budget[0] > 0 and len(fields) < target:
        fields.append(make(pool[len(fields)], 1))
    proto = ToolContract(name or f"tool_{seed % 100000}", "Generated tool.", tuple(fields))

    rules: list[ConditionalRule] = []
    if conditionals:
        object_paths = [
            (p, s) for p, s in iter_fields(proto) if "[*]" not in p
        ]
        triggers = [(p, s) for p, s in object_paths if s.kind in ("enum", "boolean")]
        targets = [p for p, s in object_paths if not s.required]
        if triggers and targets and rng.below(3) != 0:
            p, s = rng.choice(triggers)
            value = rng.choice(s.enum_members) if s.kind == "enum" else rng.below(2) == 0
            options = [t for t in targets if t != p and not p.startswith(t + ".")]
            if options:
                rules.append(ConditionalRule(p, value, (rng.choice(options),)))

    example = {f.name: witness_value(f, rng) for f in fields}
    return ToolContract(proto.name, proto.description, proto.fields, tuple(rules),
                        (Example(example, "every field set"),))


def witness_value(spec: FieldSpec, rng: SplitMix64) -> Any:
    """A value satisfying every constraint of ``spec`` (children all set)."""
    if spec.kind == "string":
        if spec.pattern:
            candidates = next(w for p, w in PATTERN_POOL if p == spec.pattern)
        else:
            candidates = ("abc", "hello")
        lo = spec.min_length or 0
        hi = spec.max_length if spec.max_length is not None else 10**9
        ok = [c for c in candidates if lo <= len(c) <= hi]
        return rng.choice(ok or list(candidates))
    if spec.kind in ("integer", "number"):
        lo = spec.minimum if spec.minimum is not None else (spec.maximum - 1 if spec.maximum is not None else 0)
        value = int(-(-lo // 1)) if spec.kind == "integer" else lo
        return value
    if spec.kind == "boolean":
        return rng.below(2) == 0
    if spec.kind == "enum":
        return rng.choice(spec.enum_members)
    if spec.kind == "object":
        return {c.name: witness_value(c, rng) for c in spec.children}
    if spec.kind == "array":
        n = max(spec.min_length or 0, 1)
        if spec.max_length is not None:
            n = min(n, spec.max_length)
        return [witness_value(spec.item, rng) for _ in range(n)]
    raise ValueError(spec.kind)
