"""Seeded generation of task instances for the four task families.

Everything is drawn from :class:`~schemabench._rng.SplitMix64`, so
``(family, seed, robustness)`` fixes every artifact byte on every platform.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Any, Optional

from schemabench._rng import SplitMix64
from schemabench.contracts import SERVICES
from schemabench.oracle import ArgPredicate, CallClass, EvidenceState, TraceOracle, Transition
from schemabench.sandbox import microlang
from schemabench.sandbox.tasks import FAMILIES, ArtifactStore, LogLine, Robustness, TaskInstance
from schemabench.tools.unidiff import make_diff

BASE_TIME = datetime(2024, 5, 1, 10, 0, 0, tzinfo=timezone.utc)
DAY_RANGE = {"start": "2024-05-01T00:00:00Z", "end": "2024-05-01T23:59:59Z"}
WINDOWS = (5, 15, 60)

# diagnosis label -> signature substring carried by every injected line
LOG_LABELS = {
    "connection_pool_exhaustion": "connection pool exhausted",
    "disk_full": "no space left on device",
    "out_of_memory": "killed: out of memory",
    "certificate_expired": "certificate has expired",
    "dns_resolution_failure": "could not resolve host",
    "rate_limited_upstream": "upstream returned 429",
}
CONFIG_LABELS = ("port_mismatch", "timeout_misconfigured", "feature_flag_disabled")
APP_SERVICES = ("api", "auth", "worker")
APP_PORTS = {"api": 8080, "auth": 8081, "worker": 8082}
FEATURE_FLAGS = ("new_checkout", "fast_search", "async_billing")
CONFIG_DECOYS = (
    "slow query detected (recovered)",
    "retrying connection to cache (recovered)",
    "certificate renewal scheduled",
    "disk usage at 71 percent",
)

# (name, params, body template, literal range for {k} or None)
FUNCTION_TEMPLATES = (
    ("mix", ("a", "b"), "a + b * {k}", (2, 5)),
    ("clamp", ("x", "lo", "hi"), "if x < lo then lo else if x > hi then hi else x", None),
    ("avg", ("a", "b"), "(a + b) / {k}", (2, 4)),
    ("dist", ("a", "b"), "if a > b then a - b else b - a", None),
    ("sqm", ("x",), "x * x - {k}", (1, 9)),
    ("perim", ("w", "h"), "2 * (w + h)", None),
    ("above", ("x", "k"), "if x >= k then 1 else 0", None),
    ("fma", ("a", "b", "c"), "a * b + c", None),
    ("sign", ("x",), "if x > 0 then 1 else if x < 0 then -1 else 0", None),
    ("half", ("x",), "x / {k}", (2, 3)),
)
SOURCE_FILES = ("repo/src/core.mini", "repo/src/util.mini")
TEST_FILE = "repo/tests/test_suite.mini"


def _ts(t: datetime) -> str:
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _call(tool: str, args: dict) -> dict:
    return {"tool": tool, "args": args}


def _cls(tool: str, *preds: tuple) -> CallClass:
    return CallClass(tool, tuple(ArgPredicate(*p) for p in preds))


def _state(sid: str, *edges: tuple, stop: bool = False, note: str = "") -> EvidenceState:
    return EvidenceState(sid, tuple(Transition(c, t) for c, t in edges), stop, note)


# ---------------------------------------------------------------------------
# shared artifacts


def _background(rng: SplitMix64, noise: int) -> list[tuple[str, str, str]]:
    events = []
    for _ in range(20 + 10 * noise):
        service = rng.choice(SERVICES)
        kind = rng.below(5)
        if noise:
            d, r, j = rng.randint(3, 90), f"0.{rng.randint(80, 99)}", rng.randint(1000, 9999)
        else:
            d, r, j = 25, "0.95", 1000
        message = (
            f"request handled path=/v1/items status=200 duration_ms={d}",
            "health check ok",
            f"cache hit ratio {r}",
            f"job {j} completed",
            "config reloaded",
        )[kind]
        events.append((service, "INFO", message))
    for _ in range(3 * noise):
        events.append((rng.choice(SERVICES), "WARN", f"request latency above target duration_ms={rng.randint(300, 900)}"))
    return events


def _assemble_logs(rng: SplitMix64, events: list[tuple[str, str, str]]) -> tuple[LogLine, ...]:
    rng.shuffle(events)
    t = BASE_TIME
    lines = []
    for service, level, message in events:
        t += timedelta(seconds=rng.randint(1, 30))
        lines.append(LogLine(_ts(t), service, level, message))
    return tuple(lines)


def _metrics(rng: SplitMix64, affected: Optional[str], anomaly: Optional[str], noise: int) -> dict:
    metrics = {}
    for service in SERVICES:
        base_latency = 100 + rng.randint(0, 40)
        base_rate = 0.005 + rng.randint(0, 5) / 1000
        for window in WINDOWS:
            latency = base_latency + window / 5
            rate = base_rate
            if service == affected:
                latency *= 8
                rate = 0.2 + rng.randint(0, 10) / 100
            elif service == anomaly:
                latency *= 5
            if noise:
                latency += rng.random() * noise
                rate += rng.random() * noise / 1000
            metrics[(service, "p95_latency", window)] = round(latency, 2)
            metrics[(service, "error_rate", window)] = round(rate, 4)
    return metrics


# ---------------------------------------------------------------------------
# config helpers


def _service_config(service: str, db_port: int, timeout_ms: int, flag: str, flag_on: bool) -> str:
    return (
        f"service: {service}\n"
        f"port: {APP_PORTS[service]}\n"
        "db:\n"
        "  host: db\n"
        f"  port: {db_port}\n"
        "upstream:\n"
        f"  timeout_ms: {timeout_ms}\n"
        "features:\n"
        f"  {flag}: {'true' if flag_on else 'false'}\n"
    )


def _config_fault(rng: SplitMix64, service: str) -> dict:
    """Config files, the broken key and its log signature for one fault."""
    db_port = rng.choice((5432, 5433, 6432))
    timeout = rng.choice((2000, 3000, 5000))
    flag = rng.choice(FEATURE_FLAGS)
    label = rng.choice(CONFIG_LABELS)
    files = {
        "configs/defaults.yaml": (
            "# Reference values every service configuration must match.\n"
            "db:\n"
            f"  port: {db_port}\n"
            "upstream:\n"
            f"  timeout_ms: {timeout}\n"
            "features:\n"
            f"  {flag}: true\n"
        ),
        "configs/db.yaml": f"service: db\nlisten_port: {db_port}\nmax_connections: 100\n",
    }
    for s in APP_SERVICES:
        files[f"configs/{s}.yaml"] = _service_config(s, db_port, timeout, flag, True)
    path = f"configs/{service}.yaml"
    if label == "port_mismatch":
        key, good, bad = "db.port", db_port, db_port + 1
        broken = _service_config(service, bad, timeout, flag, True)
        signature = f"connect ECONNREFUSED db:{bad}"
    elif label == "timeout_misconfigured":
        key, good, bad = "upstream.timeout_ms", timeout, rng.choice((5, 10, 20))
        broken = _service_config(service, db_port, bad, flag, True)
        signature = f"upstream request timed out after {bad}ms"
    else:
        key, good, bad = f"features.{flag}", True, False
        broken = _service_config(service, db_port, timeout, flag, False)
        signature = f"feature {flag} is disabled; rejecting request"
    fixed = files[path]
    files[path] = broken
    return {
        "label": label,
        "files": files,
        "file": path,
        "key": key,
        "value": good,
        "bad_value": bad,
        "signature": signature,
        "patch": make_diff(broken, fixed, path),
    }


def _config_decoys(rng: SplitMix64, service: str, count: int) -> list[tuple[str, str, str]]:
    others = [s for s in SERVICES if s != service]
    return [(rng.choice(others), "WARN", CONFIG_DECOYS[i % len(CONFIG_DECOYS)]) for i in range(count)]


# ---------------------------------------------------------------------------
# families


def _log_task(rng: SplitMix64, task_id: str, rb: Robustness) -> dict:
    service = rng.choice(SERVICES)
    labels = list(LOG_LABELS)
    label = rng.choice(labels)
    signature = LOG_LABELS[label]
    details = ("active=50 max=50", "attempt=2", "attempt=3")
    signal = [(service, "ERROR", f"{signature} ({details[i]})") for i in range(3)]
    decoy_labels = [lb for lb in labels if lb != label]
    rng.shuffle(decoy_labels)
    others = [s for s in SERVICES if s != service]
    decoys = [
        (rng.choice(others), "WARN", f"transient {LOG_LABELS[decoy_labels[i % len(decoy_labels)]]} (recovered)")
        for i in range(rb.decoys)
    ]
    events = _background(rng, rb.noise) + decoys + signal
    logs = _assemble_logs(rng, events)
    anomaly = rng.choice(others) if rb.decoys else None
    metrics = _metrics(rng, service, anomaly, rb.noise)

    svc = ("$.service", "eq", service)
    oracle = TraceOracle(
        f"{task_id}/oracle-v1",
        "start",
        (
            _state("start", (_cls("search_logs", svc), "logs"), (_cls("get_metric", svc), "metric"),
                   note="nothing observed yet"),
            _state("logs", (_cls("get_metric", svc), "both"), stop=True, note="error lines of the affected service seen"),
            _state("metric", (_cls("search_logs", svc), "both"), note="elevated metric seen"),
            _state("both", stop=True, note="logs and metric seen"),
        ),
    )
    statement = (
        f"Users report failures on the `{service}` service. Find the root cause using the tools. "
        'Finish with {"final_answer": {"diagnosis": "<label>"}} where <label> is one of: '
        + ", ".join(labels) + "."
    )
    return {
        "statement": statement,
        "artifacts": ArtifactStore(logs, metrics, {}),
        "ground_truth": {"label": label, "service": service, "signature": signature},
        "checker_spec": {"rubric": "diagnosis_label"},
        "oracle": oracle,
        "reference_solution": {
            "calls": [_call("search_logs", {"query": "ERROR", "time_range": dict(DAY_RANGE), "service": service})],
            "final_answer": {"diagnosis": label},
        },
    }


def _config_oracle(task_id: str, service: str, fault: dict, with_metric: bool) -> TraceOracle:
    svc = ("$.service", "eq", service)
    faulty = ("$.path", "eq", fault["file"])
    patch = _cls("apply_patch", ("$.file", "eq", fault["file"]))
    read_faulty = _cls("read_file", faulty)
    read_defaults = _cls("read_file", ("$.path", "eq", "configs/defaults.yaml"))
    tail = (
        _state("read", (read_defaults, "compared"), (patch, "patched"), note="faulty config read"),
        _state("compared", (patch, "patched"), note="config compared with defaults"),
    )
    if with_metric:
        head = (
            _state("start", (_cls("get_metric", svc), "metric"), (_cls("search_logs", svc), "logs")),
            _state("metric", (_cls("search_logs", svc), "evidence")),
            _state("logs", (_cls("get_metric", svc), "evidence")),
            _state("evidence", (read_faulty, "read"), note="metric and logs seen"),
        )
        end = (_state("patched", stop=True, note="fix applied"),)
    else:
        list_configs = _cls("list_dir", ("$.path", "in", ["configs", "configs/"]))
        head = (
            _state("start", (_cls("search_logs", svc), "logs"), (list_configs, "listed")),
            _state("listed", (_cls("search_logs", svc), "logs"), (read_faulty, "read")),
            _state("logs", (read_faulty, "read"), (list_configs, "logs_listed")),
            _state("logs_listed", (read_faulty, "read")),
        )
        end = (
            _state("patched", (read_faulty, "verified"), stop=True, note="fix applied"),
            _state("verified", stop=True, note="fix re-read"),
        )
    return TraceOracle(f"{task_id}/oracle-v1", "start", head + tail + end)


def _config_task(rng: SplitMix64, task_id: str, rb: Robustness, mixed: bool) -> dict:
    service = rng.choice(APP_SERVICES)
    fault = _config_fault(rng, service)
    signal = [(service, "ERROR", fault["signature"]) for _ in range(3)]
    events = _background(rng, rb.noise) + _config_decoys(rng, service, rb.decoys) + signal
    logs = _assemble_logs(rng, events)
    anomaly = rng.choice([s for s in SERVICES if s != service]) if rb.decoys else None
    metrics = _metrics(rng, service, anomaly, rb.noise)
    calls = [
        _call("search_logs", {"query": "ERROR", "time_range": dict(DAY_RANGE), "service": service}),
        _call("read_file", {"path": fault["file"]}),
        _call("apply_patch", {"file": fault["file"], "diff": fault["patch"]}),
    ]
    config_part = {"rubric": "config_value", "file": fault["file"], "key": fault["key"]}
    truth = {k: fault[k] for k in ("label", "file", "key", "value", "bad_value", "signature", "patch")}
    truth["service"] = service
    if mixed:
        calls.insert(0, _call("get_metric", {"metric_key": "error_rate", "service": service, "window": {"minutes": 5}}))
        statement = (
            f"The error rate of the `{service}` service is elevated. Diagnose the cause and fix it; "
            "reference configuration values are in configs/defaults.yaml. "
            'Finish with {"final_answer": {"diagnosis": "<label>"}} where <label> is one of: '
            + ", ".join(CONFIG_LABELS) + "."
        )
        checker = {"rubric": "all", "parts": [{"rubric": "diagnosis_label"}, config_part]}
        answer: Any = {"diagnosis": fault["label"]}
    else:
        statement = (
            f"The `{service}` service is misbehaving because one configuration value is wrong. "
            "Reference values are in configs/defaults.yaml. Fix the value with apply_patch, then finish with "
            '{"final_answer": {"done": true}}.'
        )
        checker = config_part
        answer = {"done": True}
    return {
        "statement": statement,
        "artifacts": ArtifactStore(logs, metrics, fault["files"]),
        "ground_truth": truth,
        "checker_spec": checker,
        "oracle": _config_oracle(task_id, service, fault, mixed),
        "reference_solution": {"calls": calls, "final_answer": answer},
    }


def _test_args(rng: SplitMix64, name: str, arity: int) -> list[int]:
    if name == "clamp":
        return [rng.randint(-3, 12), rng.randint(0, 3), rng.randint(5, 9)]
    return [rng.randint(-4, 12) for _ in range(arity)]


def _repo_task(rng: SplitMix64, task_id: str, rb: Robustness) -> dict:
    count = min(4 + rb.decoys, len(FUNCTION_TEMPLATES))
    templates = rng.sample(FUNCTION_TEMPLATES, count)
    defs = []
    for name, params, body, krange in templates:
        text = body.format(k=rng.randint(*krange)) if krange else body
        defs.append((name, params, f"fn {name}({', '.join(params)}) = {text}"))
    split = (len(defs) + 1) // 2
    file_of = {d[0]: SOURCE_FILES[0] if i < split else SOURCE_FILES[1] for i, d in enumerate(defs)}

    def sources(lines: dict[str, str]) -> dict[str, str]:
        out = {}
        for path in SOURCE_FILES:
            body = [lines[n] for n, _, _ in defs if file_of[n] == path]
            out[path] = "".join(line + "\n" for line in body)
        return out

    good_lines = {n: line for n, _, line in defs}
    functions = {}
    for path, text in sources(good_lines).items():
        functions.update(microlang.parse_source(text, path))
    test_lines = []
    for name, params, _ in defs:
        for _ in range(2):
            args = _test_args(rng, name, len(params))
            value = microlang.evaluate(("call", name, [("int", a) for a in args]), {}, functions)
            test_lines.append(f"assert {name}({', '.join(str(a) for a in args)}) == {value}")
    tests = {TEST_FILE: "".join(line + "\n" for line in test_lines)}

    candidates = [(n, site) for n, _, line in defs for site in microlang.mutation_sites(line)]
    rng.shuffle(candidates)
    chosen = fallback = None
    for name, (start, end, repl) in candidates:
        line = good_lines[name]
        mutated = line[:start] + repl + line[end:]
        try:
            report = microlang.run_suite(sources({**good_lines, name: mutated}), tests)
        except microlang.MicroSyntaxError:
            continue
        if report.failed == 1:
            chosen = (name, mutated)
            break
        if report.failed > 1 and fallback is None:
            fallback = (name, mutated)
    chosen = chosen or fallback
    if chosen is None:
        raise RuntimeError(f"no failing mutation for {task_id}")
    bug_fn, bug_line = chosen
    bad_lines = {**good_lines, bug_fn: bug_line}
    files = {**sources(bad_lines), **tests}
    buggy_file = file_of[bug_fn]
    fixed = sources(good_lines)[buggy_file]
    patch = make_diff(files[buggy_file], fixed, buggy_file)

    repo_dirs = ["repo", "repo/", "repo/src", "repo/src/", "repo/tests", "repo/tests/"]
    buggy = ("$.path", "eq", buggy_file)
    patch_cls = _cls("apply_patch", ("$.file", "eq", buggy_file))
    oracle = TraceOracle(
        f"{task_id}/oracle-v1",
        "start",
        (
            _state("start", (_cls("run_tests"), "tested"), (_cls("list_dir", ("$.path", "in", repo_dirs)), "listed")),
            _state("listed", (_cls("run_tests"), "tested")),
            _state("tested", (_cls("read_file", buggy), "read"), (_cls("grep_repo", ("$.pattern", "any")), "grepped"),
                   note="failing test known"),
            _state("grepped", (_cls("read_file", buggy), "read")),
            _state("read", (patch_cls, "patched"), note="buggy definition read"),
            _state("patched", (_cls("run_tests"), "verified"), stop=True, note="fix applied"),
            _state("verified", stop=True, note="suite re-run"),
        ),
    )
    statement = (
        "The unit tests under repo/tests fail. Find the bug in repo/src, fix it with apply_patch, "
        'then finish with {"final_answer": {"done": true}}.'
    )
    return {
        "statement": statement,
        "artifacts": ArtifactStore(_assemble_logs(rng, _background(rng, rb.noise)), _metrics(rng, None, None, rb.noise), files),
        "ground_truth": {
            "label": "injected_bug",
            "file": buggy_file,
            "function": bug_fn,
            "original_line": good_lines[bug_fn],
            "mutated_line": bug_line,
            "patch": patch,
        },
        "checker_spec": {"rubric": "tests_pass"},
        "oracle": oracle,
        "reference_solution": {
            "calls": [
                _call("run_tests", {"mode": "all"}),
                _call("read_file", {"path": buggy_file}),
                _call("apply_patch", {"file": buggy_file, "diff": patch}),
            ],
            "final_answer": {"done": True},
        },
    }


def generate_task(family: str, seed: int, robustness: Optional[Robustness] = None) -> TaskInstance:
    """Deterministic task instance for ``(family, seed, robustness)``."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    rb = robustness or Robustness()
    rng = SplitMix64(seed ^ (FAMILIES.index(family) + 1) * 0x9E3779B97F4A7C15)
    task_id = f"{family}-{seed}"
    if family == "log_diagnosis":
        parts = _log_task(rng, task_id, rb)
    elif family == "repo_debug":
        parts = _repo_task(rng, task_id, rb)
    else:
        parts = _config_task(rng, task_id, rb, mixed=family == "mixed")
    return TaskInstance(task_id=task_id, family=family, seed=seed, robustness=rb, **parts)


def generate_pack(
    families: tuple[str, ...] = FAMILIES, seeds: tuple[int, ...] = (0, 1), robustness: Optional[Robustness] = None
) -> list[TaskInstance]:
    """Tasks ordered by family then seed; the default is the 8-task pack."""
    return [generate_task(f, s, robustness) for f in families for s in seeds]
