import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schemabench.contracts import default_contract_pack
from schemabench.oracle import validate_oracle
from schemabench.sandbox import microlang
from schemabench.sandbox.generate import DAY_RANGE, generate_pack, generate_task
from schemabench.sandbox.packio import (
    TaskPackError,
    TaskPackIntegrityError,
    dump_task_pack,
    load_task_pack,
    loads_task_pack,
    save_task_pack,
)
from schemabench.sandbox.tasks import FAMILIES, Robustness, check_final_answer, reset
from schemabench.tools.executors import execute_tool, run_tests_detail
from schemabench.validate import ToolCall, check_args

CONTRACTS = {c.name: c for c in default_contract_pack()}


def replay_reference(task):
    state = reset(task)
    for call in task.reference_solution["calls"]:
        assert check_args(CONTRACTS[call["tool"]], call["args"]) == []
        result = execute_tool(ToolCall(call["tool"], call["args"], ""), state)
        assert result.status == "ok", (task.task_id, call, result)
    return state


def test_generation_is_byte_identical():
    a = generate_task("log_diagnosis", 0)
    b = generate_task("log_diagnosis", 0)
    assert dump_task_pack([a]) == dump_task_pack([b])
    assert a.artifacts.digests() == b.artifacts.digests()


def test_seeds_and_families_differ():
    digests = {generate_task(f, s).digest() for f in FAMILIES for s in range(3)}
    assert len(digests) == 12


def test_robustness_is_part_of_the_instance():
    base = generate_task("log_diagnosis", 3)
    noisy = generate_task("log_diagnosis", 3, Robustness(decoys=4, noise=2))
    assert base.artifacts.digests()["logs"] != noisy.artifacts.digests()["logs"]
    assert noisy.robustness == Robustness(4, 2, 0)


def test_large_seed_accepted():
    t = generate_task("repo_debug", 2**64 - 1)
    assert t.seed == 2**64 - 1 and validate_oracle(t.oracle, t) == []


@pytest.mark.parametrize("family", ["log_diagnosis", "config_correction", "mixed"])
def test_no_decoys_signature_lines_are_only_the_injected_ones(family):
    t = generate_task(family, 5, Robustness(decoys=0))
    sig = t.ground_truth["signature"]
    hits = [line for line in t.artifacts.logs if sig in line.message]
    assert len(hits) == 3
    assert {h.level for h in hits} == {"ERROR"}
    assert len({h.service for h in hits}) == 1


def test_decoys_never_carry_the_signature():
    for seed in range(6):
        t = generate_task("log_diagnosis", seed, Robustness(decoys=5, noise=1))
        sig = t.ground_truth["signature"]
        assert sum(sig in line.message for line in t.artifacts.logs) == 3


def test_log_timestamps_non_decreasing():
    for t in generate_pack(seeds=range(3)):
        stamps = [line.timestamp for line in t.artifacts.logs]
        assert stamps == sorted(stamps)
        assert all(DAY_RANGE["start"] <= s <= DAY_RANGE["end"] for s in stamps)


def test_repo_seed0_one_failure_then_zero():
    t = generate_task("repo_debug", 0)
    state = reset(t)
    before = run_tests_detail(state).payload
    assert before["failed"] == 1
    state = replay_reference(t)
    assert run_tests_detail(state).payload["failed"] == 0


@pytest.mark.parametrize("seed", range(6))
def test_repo_bug_makes_at_least_one_test_fail(seed):
    t = generate_task("repo_debug", seed, Robustness(decoys=seed % 3))
    assert run_tests_detail(reset(t)).payload["failed"] >= 1


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("seed", range(4))
def test_reference_solution_solves_within_eight(family, seed):
    t = generate_task(family, seed)
    assert len(t.reference_solution["calls"]) + 1 <= 8
    state = replay_reference(t)
    answer = json.dumps(t.reference_solution["final_answer"])
    assert check_final_answer(answer, t, state).success
    assert validate_oracle(t.oracle, t) == []


def test_checker_cases():
    log = generate_task("log_diagnosis", 0)
    state = reset(log)
    label = log.ground_truth["label"]
    assert check_final_answer(json.dumps({"diagnosis": label}), log, state).success
    assert check_final_answer(json.dumps({"diagnosis": f"  {label.upper()} "}), log, state).success
    v = check_final_answer("the disk is full", log, state)
    assert (v.success, v.reason) == (False, "unparseable-answer")
    assert check_final_answer('{"diagnosis": "port_mismatch"}', log, state).reason == "wrong-diagnosis"
    assert check_final_answer('{"cause": "x"}', log, state).reason == "missing-diagnosis"


def test_repo_done_succeeds_only_when_tests_pass():
    t = generate_task("repo_debug", 1)
    assert not check_final_answer('{"done": true}', t, reset(t)).success
    assert check_final_answer('{"done": true}', t, replay_reference(t)).success


def test_config_checker_needs_patch():
    t = generate_task("config_correction", 1)
    assert check_final_answer('{"done": true}', t, reset(t)).reason == "config-value-wrong"
    assert check_final_answer('{"done": true}', t, replay_reference(t)).success


def test_mixed_requires_both_parts():
    t = generate_task("mixed", 0)
    answer = json.dumps(t.reference_solution["final_answer"])
    assert not check_final_answer(answer, t, reset(t)).success
    patched = replay_reference(t)
    assert not check_final_answer('{"diagnosis": "wrong"}', t, patched).success
    assert check_final_answer(answer, t, patched).success


def test_reset_restores_generation_state():
    t = generate_task("repo_debug", 0)
    fresh = reset(t).digest()
    patched = replay_reference(t)
    assert patched.digest() != fresh
    assert reset(t).digest() == reset(t).digest() == fresh
    assert reset(t).files == t.artifacts.files


def test_episode_states_are_private():
    t = generate_task("repo_debug", 0)
    replay_reference(t)
    assert run_tests_detail(reset(t)).payload["failed"] == 1


def test_pack_round_trip(tmp_path):
    tasks = generate_pack()
    assert len(tasks) == 8 and sorted({t.family for t in tasks}) == sorted(FAMILIES)
    path = tmp_path / "pack.json"
    digest = save_task_pack(tasks, path)
    loaded = load_task_pack(path)
    assert loaded == tasks
    assert len(digest) == 64


def test_tampered_ground_truth_is_rejected():
    doc = json.loads(dump_task_pack(generate_pack(seeds=(0,))))
    doc["tasks"][0]["ground_truth"]["label"] = "something_else"
    with pytest.raises(TaskPackIntegrityError) as exc:
        loads_task_pack(json.dumps(doc))
    assert exc.value.what == "task"


def test_tampered_artifact_is_rejected():
    doc = json.loads(dump_task_pack([generate_task("repo_debug", 0)]))
    doc["tasks"][0]["artifacts"]["files"]["repo/src/core.mini"] += "\n"
    with pytest.raises(TaskPackIntegrityError) as exc:
        loads_task_pack(json.dumps(doc))
    assert exc.value.what == "artifact repo/src/core.mini"


def test_malformed_packs():
    with pytest.raises(TaskPackError):
        loads_task_pack("not json")
    with pytest.raises(TaskPackError):
        loads_task_pack('{"version": 2, "tasks": []}')
    t = generate_task("log_diagnosis", 0)
    with pytest.raises(TaskPackError, match="duplicate"):
        loads_task_pack(dump_task_pack([t, t]))
    assert loads_task_pack('{"version": 1, "tasks": []}') == []


# ---------------------------------------------------------------------------
# micro-language


def test_microlang_evaluation():
    src = "fn f(a, b) = if a > b then a - b else b * 2\nfn g(x) = f(x, 3) / 2  # comment\n"
    tests = "assert f(5, 2) == 3\nassert f(1, 2) == 4\nassert g(9) == 3\nassert g(1) == -1\n"
    report = microlang.run_suite({"a.mini": src}, {"t.mini": tests})
    assert (report.total, report.failed) == (4, 1)
    assert report.failures[0].name == "test_g_2" and report.failures[0].got == 3


def test_microlang_division_truncates_toward_zero_and_div_zero_is_test_error():
    report = microlang.run_suite({"a": "fn d(a, b) = a / b"}, {"t": "assert d(-7, 2) == -3\nassert d(1, 0) == 0"})
    assert report.failed == 1
    assert str(report.failures[0].got).startswith("error:")


def test_microlang_selector_and_syntax_errors():
    report = microlang.run_suite({"a": "fn one() = 1"}, {"t": "assert one() == 1"}, "test_nothing*")
    assert (report.total, report.passed) == (0, 0)
    with pytest.raises(microlang.MicroSyntaxError) as exc:
        microlang.parse_source("fn ok() = 1\nfn bad( = 2\n", "src.mini")
    assert (exc.value.file, exc.value.line) == ("src.mini", 2)


def test_mutation_sites_leave_signature_alone():
    line = "fn add1(x) = x + 1"
    sites = list(microlang.mutation_sites(line))
    assert all(start >= line.index("=") for start, _, _ in sites)
    mutated = {line[:s] + r + line[e:] for s, e, r in sites}
    assert mutated == {"fn add1(x) = x - 1", "fn add1(x) = x + 2", "fn add1(x) = x + 0"}


@settings(max_examples=200, deadline=None)
@given(a=st.integers(-50, 50), b=st.integers(-50, 50), c=st.integers(1, 9))
def test_microlang_matches_python_arithmetic(a, b, c):
    src = "fn h(a, b, c) = if a < b then (a + b) * c else a - b / c"
    expected = (a + b) * c if a < b else a - int(b / c)
    report = microlang.run_suite({"s": src}, {"t": f"assert h({a}, {b}, {c}) == {expected}"})
    assert report.failed == 0
