import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from schemabench.harness.agents import (
    PerfectAgent,
    RecovererAgent,
    SilentAgent,
    SlowAgent,
    scripted_agents,
    synonymize,
    timeout_cells,
    with_timeouts,
)
from schemabench.harness.episode import classify_step, run_episode, system_prompt
from schemabench.harness.matrix import plan_cells, run_matrix
from schemabench.harness.records import EpisodeConfig, iter_runs, write_run
from schemabench.harness.transport import AgentRequest, RemoteTransport
from schemabench.oracle import MISUSE
from schemabench.sandbox.generate import DAY_RANGE, generate_task
from schemabench.tools.executors import ToolResult
from schemabench.validate import FinalAnswer, ParseFailure, ToolCall, ValidationReport


def cfg(task, budget=8, condition="B", seed=0, **kw):
    gran = kw.pop("granularity", "C3" if condition == "C" else None)
    return EpisodeConfig(task.task_id, budget, condition, seed, gran, **kw)


class Recording:
    """Wraps an agent and keeps every request it saw."""

    kind = "scripted"

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def respond(self, request):
        self.requests.append(request)
        return self.inner.respond(request)


class Scripted:
    kind = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)

    def respond(self, request):
        return self.replies[request.step - 1]


class Broken:
    kind = "scripted"

    def respond(self, request):
        raise ConnectionResetError("peer went away")


def test_episode_config_invariants():
    with pytest.raises(ValueError):
        EpisodeConfig("t", 0, "A", 0)
    with pytest.raises(ValueError):
        EpisodeConfig("t", 3, "C", 0)
    with pytest.raises(ValueError):
        EpisodeConfig("t", 3, "B", 0, "C3")
    assert EpisodeConfig("t", 3, "C", 1, "C2").run_id == "t|B3|C2|s1"
    assert EpisodeConfig("t", 3, "A", 1).arm == "A"


def test_perfect_agent_succeeds(contracts):
    t = generate_task("repo_debug", 0)
    run = run_episode(cfg(t), t, PerfectAgent(t.reference_solution), contracts)
    assert run.status == "scored" and run.success
    assert [s.classification for s in run.steps] == ["valid_productive"] * 3 + ["final_answer"]
    assert run.steps_to_success == 4 and run.first_invalid_step is None


def test_silent_agent_exhausts_budget(contracts):
    t = generate_task("log_diagnosis", 0)
    run = run_episode(cfg(t, budget=5, condition="C"), t, SilentAgent(), contracts)
    assert run.success is False and run.checker_reason == "budget-exhausted"
    assert [(s.classification, s.subcategory) for s in run.steps] == [("interface_misuse", "malformed_json")] * 5
    assert json.loads(run.steps[0].feedback.split("\nhint:")[0])["error_type"] == "MALFORMED_JSON"


def test_timeout_excludes_run(contracts):
    t = generate_task("log_diagnosis", 0)
    agent = SlowAgent(PerfectAgent(t.reference_solution), 0.5)
    run = run_episode(cfg(t, step_timeout_ms=20), t, agent, contracts)
    assert (run.status, run.exclusion_reason, run.success) == ("excluded", "agent_timeout", None)
    assert not run.scored


def test_transport_error_excludes_run(contracts):
    t = generate_task("log_diagnosis", 0)
    run = run_episode(cfg(t), t, Broken(), contracts)
    assert (run.status, run.exclusion_reason) == ("excluded", "transport_error")


def test_classify_step_priority():
    assert classify_step(ParseFailure("no-json", "")) == ("interface_misuse", "malformed_json")
    assert classify_step(FinalAnswer({"x": 1}, "")) == ("final_answer", None)
    call = ToolCall("read_file", {"path": "x"}, "")
    unknown = ValidationReport("unknown_tool", tool="read_fil")
    assert classify_step(call, unknown) == ("interface_misuse", "wrong_tool_name")
    ok = ValidationReport("valid", tool="read_file")
    err = ToolResult("runtime_error", {"error": "path not found"})
    # a runtime error wins over a misuse label
    assert classify_step(call, ok, err, MISUSE) == ("execution_failure", None)
    assert classify_step(call, ok, ToolResult("ok", {}), MISUSE) == ("semantic_misuse", None)
    assert classify_step(call, ok, ToolResult("ok", {}), "aligned") == ("valid_productive", None)
    with pytest.raises(ValueError):
        classify_step(call)


def test_classification_uses_first_violation(contracts):
    t = generate_task("log_diagnosis", 0)
    raw = json.dumps({"tool": "get_metric", "args": {"metric_key": "latency95", "service": "api", "window": {"minutes": 0}}})
    run = run_episode(cfg(t, budget=1), t, Scripted([raw]), contracts)
    assert (run.steps[0].classification, run.steps[0].subcategory) == ("interface_misuse", "enum_violation")


def test_execution_failure_and_semantic_misuse(contracts):
    t = generate_task("repo_debug", 0)
    replies = [
        json.dumps({"tool": "read_file", "args": {"path": "repo/missing.mini"}}),
        json.dumps({"tool": "search_logs", "args": {"query": "x", "time_range": DAY_RANGE, "service": "db"}}),
        '{"final_answer": {"done": true}}',
    ]
    run = run_episode(cfg(t, budget=3), t, Scripted(replies), contracts)
    assert [s.classification for s in run.steps] == ["execution_failure", "semantic_misuse", "final_answer"]
    assert run.success is False and run.checker_reason.startswith("tests-failing")


def test_history_integrity(contracts):
    t = generate_task("config_correction", 0)
    agent = Recording(PerfectAgent(t.reference_solution))
    run_episode(cfg(t, condition="A"), t, agent, contracts)
    for k, req in enumerate(agent.requests):
        assert req.step == k + 1
        assert len(req.history) == 2 * k
        assert [h["role"] for h in req.history] == ["agent", "environment"] * k
        assert req.system_prompt == system_prompt(8)
        payload = json.dumps(req.to_json())
        assert "reference_solution" not in payload and t.ground_truth["patch"] not in payload


def test_output_is_truncated_before_parsing(contracts):
    t = generate_task("log_diagnosis", 0)
    answer = json.dumps({"final_answer": {"diagnosis": t.ground_truth["label"]}})
    run = run_episode(cfg(t, budget=1, max_step_output_chars=10), t, Scripted([answer]), contracts)
    assert run.steps[0].raw == answer[:10]
    assert run.steps[0].subcategory == "malformed_json"


def test_condition_isolation(contracts):
    t = generate_task("repo_debug", 0)
    replies = [
        json.dumps({"tool": "read_file", "args": {"path": "nope"}}),
        json.dumps({"tool": "run_tests", "args": {"mode": "everything"}}),
    ]
    feedback = {}
    for cond, gran in (("A", None), ("B", None), ("C", "C1"), ("C", "C2"), ("C", "C3")):
        run = run_episode(cfg(t, budget=2, condition=cond, granularity=gran), t, Scripted(replies), contracts)
        feedback[gran or cond] = [s.feedback for s in run.steps]
    runtime = {v[0] for v in feedback.values()}
    assert runtime == {"runtime_error: path not found"}
    assert feedback["A"][1] == feedback["B"][1] == feedback["C1"][1] == "invalid tool call"
    assert '"allowed"' in feedback["C3"][1] and '"allowed"' not in feedback["C2"][1]


def test_prose_confused_only_misuses_under_a(contracts):
    t = generate_task("mixed", 0)
    make = scripted_agents()["prose_confused"]
    invalid = {}
    for cond in "ABC":
        c = cfg(t, condition=cond)
        run = run_episode(c, t, make(t, c), contracts)
        invalid[cond] = run.counts()["interface_misuse"]
    assert invalid["A"] > 0 and invalid["B"] == invalid["C"] == 0


def test_recoverer_depends_on_granularity(contracts):
    t = generate_task("log_diagnosis", 1)
    results = {}
    for gran in ("C1", "C2", "C3"):
        run = run_episode(cfg(t, condition="C", granularity=gran), t, RecovererAgent(t.reference_solution), contracts)
        results[gran] = (run.first_invalid_step, run.success)
    assert results == {"C1": (1, False), "C2": (1, True), "C3": (1, True)}


def test_synonymize():
    args = {"metric_key": "p95_latency", "service": "api", "window": {"minutes": 5}}
    assert synonymize(args) == {"metric_key": "latency95", "service": "api_service", "window": {"minutes": 5}}
    assert synonymize(args, first_only=True)["service"] == "api"


def test_one_by_one_matrix(contracts):
    t = generate_task("log_diagnosis", 0)
    runs = run_matrix([t], [5], ["A"], [0], scripted_agents()["perfect"], contracts)
    assert [r.run_id for r in runs] == ["log_diagnosis-0|B5|A|s0"] and runs[0].success


def test_plan_cells_order_and_count(pack):
    cells = plan_cells(pack, (3, 5, 8, 12), "ABC", (0, 1, 2))
    assert len(cells) == 288 == len({c.run_id for c in cells})
    tid = pack[0].task_id
    assert [c.run_id for c in cells[:4]] == [f"{tid}|B3|A|s0", f"{tid}|B3|A|s1", f"{tid}|B3|A|s2", f"{tid}|B3|B|s0"]
    assert cells[6].run_id == f"{tid}|B3|C3|s0"
    with pytest.raises(ValueError):
        plan_cells(pack, (), "A", (0,))


def _log_text(runs):
    buf = io.StringIO()
    for r in runs:
        write_run(buf, r)
    return buf.getvalue()


def test_log_is_deterministic_and_worker_independent(pack, contracts):
    make = scripted_agents()["recoverer"]
    a = io.StringIO()
    run_matrix(pack, (3, 8), "ABC", (0, 1), make, contracts, log=a)
    b = io.StringIO()
    run_matrix(pack, (3, 8), "ABC", (0, 1), make, contracts, log=b, workers=4)
    assert a.getvalue() == b.getvalue()
    runs = list(iter_runs(a.getvalue().splitlines()))
    assert _log_text(runs) == a.getvalue()


def test_timeouts_on_selected_cells(pack, contracts):
    repo = next(t for t in pack if t.family == "repo_debug")
    make = with_timeouts(scripted_agents()["perfect"], timeout_cells(repo.task_id, 0), 0.2)
    runs = run_matrix(pack, (3, 5), "ABC", (0, 1), make, contracts, step_timeout_ms=20, workers=8)
    excluded = [r for r in runs if not r.scored]
    assert len(excluded) == 6
    assert {(r.config.task_id, r.config.seed, r.exclusion_reason) for r in excluded} == {(repo.task_id, 0, "agent_timeout")}


def test_iter_runs_rejects_orphans():
    with pytest.raises(ValueError):
        list(iter_runs(['{"type": "step", "run_id": "x"}']))
    with pytest.raises(ValueError):
        list(iter_runs(['{"type": "other"}']))


# ---------------------------------------------------------------------------
# remote transport


class _Handler(BaseHTTPRequestHandler):
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.seen.append(body)
        reply = json.dumps({"final_answer": {"diagnosis": "disk_full"}}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(reply)))
        self.end_headers()
        self.wfile.write(reply)

    def log_message(self, *args):
        pass


@pytest.fixture
def agent_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/"
    server.shutdown()
    server.server_close()


def test_remote_transport_round_trip(agent_server, contracts):
    t = generate_task("log_diagnosis", 0)
    _Handler.seen.clear()
    run = run_episode(cfg(t, budget=3), t, RemoteTransport(agent_server), contracts)
    assert run.status == "scored" and run.success == (t.ground_truth["label"] == "disk_full")
    assert _Handler.seen[0]["run_id"] == run.run_id and _Handler.seen[0]["step"] == 1
    assert set(_Handler.seen[0]) == set(AgentRequest.__dataclass_fields__)


def test_remote_transport_unreachable(contracts):
    t = generate_task("log_diagnosis", 0)
    run = run_episode(cfg(t), t, RemoteTransport("http://127.0.0.1:9/", timeout_s=2), contracts)
    assert run.exclusion_reason == "transport_error"
