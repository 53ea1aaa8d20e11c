import itertools
import json

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import ABSENT, candidate_values, oracle_violations
from schemabench._rng import SplitMix64
from schemabench.contracts import random_contract, witness_value
from schemabench.render import contract_schema
from schemabench.validate import (
    GENERIC_MESSAGE,
    FinalAnswer,
    ParseFailure,
    ToolCall,
    ValidationReport,
    check_args,
    format_diagnostics,
    parse_agent_output,
    validate_args,
)

PAPER_ARGS = {"metric_key": "latency95", "service": "api", "window": {"minutes": 0}}


def enumerated_cases(n_contracts: int, depth: int = 2):
    """(contract, args) over the product of per-field candidate pools."""
    for seed in range(n_contracts):
        c = random_contract(seed, max_fields=4, depth=depth)
        rng = SplitMix64(seed)
        pools = [[ABSENT] + candidate_values(f, witness_value(f, rng))[:4] for f in c.fields]
        for combo in itertools.product(*pools):
            yield c, {f.name: v for f, v in zip(c.fields, combo) if v is not ABSENT}


# ---------------------------------------------------------------------------
# parsing


def test_parse_plain_tool_call():
    out = parse_agent_output('{"tool":"get_metric","args":{"service":"api"}}')
    assert isinstance(out, ToolCall)
    assert out.name == "get_metric" and out.args == {"service": "api"}


def test_parse_extracts_first_object_from_prose():
    raw = 'I think {"tool":"read_file","args":{"path":"a.yaml"}} is right {"tool":"x","args":{}}'
    out = parse_agent_output(raw)
    assert isinstance(out, ToolCall) and out.name == "read_file"
    assert out.raw_text == raw


def test_parse_truncated():
    out = parse_agent_output('{"tool": "read_file", "args": {')
    assert isinstance(out, ParseFailure) and out.reason == "truncated"


def test_parse_no_json_and_wrong_shape():
    assert parse_agent_output("").reason == "no-json"
    assert parse_agent_output("just words").reason == "no-json"
    assert parse_agent_output('{"name": "read_file"}').reason == "wrong-shape"


def test_parse_braces_inside_strings():
    out = parse_agent_output('{"final_answer": "use } and { freely"}')
    assert isinstance(out, FinalAnswer) and out.value == "use } and { freely"


def test_parse_skips_invalid_balanced_span():
    out = parse_agent_output('{not json} then {"final_answer": {"done": true}}')
    assert isinstance(out, FinalAnswer) and out.text == '{"done": true}'


# ---------------------------------------------------------------------------
# the structured error example


def test_get_metric_example_violations(by_name):
    report = validate_args(ToolCall("get_metric", PAPER_ARGS, ""), by_name)
    assert report.verdict == "interface_invalid"
    assert [v.to_dict() for v in report.violations] == [
        {"path": "$.metric_key", "expected": "enum", "allowed": ["p95_latency", "error_rate"], "found": "latency95"},
        {"path": "$.window.minutes", "expected": "integer >= 1", "found": 0},
    ]
    assert report.category == "enum_violation"


def test_c3_matches_structured_error_shape(by_name):
    report = validate_args(ToolCall("get_metric", PAPER_ARGS, ""), by_name)
    text = format_diagnostics(report, "C", "C3")
    body, hints = text.split("\nhint: ", 1)
    assert json.loads(body) == {
        "error_type": "SCHEMA_VALIDATION",
        "tool": "get_metric",
        "violations": [
            {"path": "$.metric_key", "expected": "enum", "allowed": ["p95_latency", "error_rate"], "found": "latency95"},
            {"path": "$.window.minutes", "expected": "integer >= 1", "found": 0},
        ],
    }
    assert hints.count("\n") == 1  # one hint per violation
    assert 'set $.metric_key to one of ["p95_latency", "error_rate"]' in text
    assert "set $.window.minutes to satisfy integer >= 1" in text


def test_generic_feedback_for_a_b_and_c1(by_name):
    report = validate_args(ToolCall("get_metric", PAPER_ARGS, ""), by_name)
    for cond, gran in (("A", None), ("B", None), ("A", "C3"), ("C", "C1")):
        assert format_diagnostics(report, cond, gran) == GENERIC_MESSAGE == "invalid tool call"


def test_c2_has_paths_and_categories_only(by_name):
    report = validate_args(ToolCall("get_metric", PAPER_ARGS, ""), by_name)
    doc = json.loads(format_diagnostics(report, "C", "C2"))
    assert doc["violations"] == [{"path": "$.metric_key", "expected": "enum"}, {"path": "$.window.minutes", "expected": "bound"}]


def test_valid_report_is_rejected(by_name):
    args = by_name["get_metric"].examples[0].args
    report = validate_args(ToolCall("get_metric", args, ""), by_name)
    assert report.verdict == "valid" and report.violations == ()
    with pytest.raises(ValueError):
        format_diagnostics(report, "C", "C3")


def test_unknown_tool_and_unparseable_reports(by_name):
    report = validate_args(ToolCall("get_metrics", {}, ""), by_name)
    assert report.verdict == "unknown_tool" and report.category == "wrong_tool_name"
    c3 = format_diagnostics(report, "C", "C3")
    assert json.loads(c3.split("\nhint:")[0])["error_type"] == "UNKNOWN_TOOL"
    bad = ValidationReport.unparseable("truncated")
    assert bad.category == "malformed_json"
    assert json.loads(format_diagnostics(bad, "C", "C3").split("\nhint:")[0])["error_type"] == "MALFORMED_JSON"


def test_every_contract_example_is_valid(contracts):
    for c in contracts:
        for ex in c.examples:
            assert check_args(c, ex.args) == []


def test_conditional_requiredness(by_name):
    run_tests = by_name["run_tests"]
    vs = check_args(run_tests, {"mode": "selected"})
    assert [(v.path, v.rule, v.expected) for v in vs] == [
        ("$.selector", "conditional_required", 'required when $.mode == "selected"')
    ]
    assert check_args(run_tests, {"mode": "all"}) == []


def test_integer_semantics(by_name):
    c = by_name["get_metric"]
    base = {"metric_key": "error_rate", "service": "db"}
    assert check_args(c, {**base, "window": {"minutes": 5.0}}) == []
    assert [v.rule for v in check_args(c, {**base, "window": {"minutes": True}})] == ["type"]
    assert [v.rule for v in check_args(c, {**base, "window": {"minutes": 5.5}})] == ["type"]


def test_non_object_args(by_name):
    vs = check_args(by_name["list_dir"], ["repo"])
    assert [(v.path, v.rule) for v in vs] == [("$", "type")]


# ---------------------------------------------------------------------------
# oracle agreement and graded feedback


def test_validator_matches_bruteforce_oracle():
    n = 0
    for c, args in enumerated_cases(120):
        got = {(v.path, v.rule) for v in check_args(c, args)}
        assert got == oracle_violations(c, args), (c, args)
        n += 1
    assert n >= 10_000


def test_violations_sorted_by_path_then_rule():
    for c, args in itertools.islice(enumerated_cases(20), 3000):
        vs = check_args(c, args)
        assert [(v.path, v.rule) for v in vs] == sorted((v.path, v.rule) for v in vs)


def test_acceptance_agrees_with_jsonschema():
    for i, (c, args) in enumerate(enumerated_cases(60)):
        validator = jsonschema.Draft202012Validator(contract_schema(c))
        assert validator.is_valid(args) == (check_args(c, args) == []), (c, args)


def test_graded_feedback_is_monotone():
    for c, args in itertools.islice(enumerated_cases(15), 2000):
        report = validate_args(ToolCall(c.name, args, ""), [c])
        if report.verdict == "valid":
            continue
        c1 = format_diagnostics(report, "C", "C1")
        c2 = json.loads(format_diagnostics(report, "C", "C2"))
        c3 = json.loads(format_diagnostics(report, "C", "C3").split("\nhint:")[0])
        assert c1 == GENERIC_MESSAGE
        assert [v["path"] for v in c2["violations"]] == [v["path"] for v in c3["violations"]]
        for short, full in zip(c2["violations"], c3["violations"]):
            assert set(short) <= set(full)
        assert format_diagnostics(report, "C", "C3") == format_diagnostics(report, "C", "C3")


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32), extra=st.dictionaries(st.sampled_from(["zz", "f_alpha", "f_beta"]), st.integers(-5, 5)))
def test_validator_agrees_with_oracle_on_mutated_examples(seed, extra):
    c = random_contract(seed, max_fields=4, depth=2)
    args = {**c.examples[0].args, **extra}
    assert {(v.path, v.rule) for v in check_args(c, args)} == oracle_violations(c, args)
