"""Task instances, artifact state and the deterministic checkers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

import yaml

from schemabench.contracts import canonical_json, json_equal
from schemabench.oracle import TraceOracle
from schemabench.sandbox import microlang

FAMILIES = ("log_diagnosis", "config_correction", "repo_debug", "mixed")
SOURCE_DIR = "repo/src/"
TEST_DIR = "repo/tests/"


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LogLine:
    timestamp: str
    service: str
    level: str
    message: str

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "service": self.service, "level": self.level, "message": self.message}


@dataclass(frozen=True)
class Robustness:
    decoys: int = 2
    noise: int = 0
    schema_depth: int = 0

    def to_dict(self) -> dict:
        return {"decoys": self.decoys, "noise": self.noise, "schema_depth": self.schema_depth}


@dataclass(frozen=True)
class ArtifactStore:
    """Generated artifacts. Files are keyed by sandbox path."""

    logs: tuple[LogLine, ...]
    metrics: dict  # (service, metric_key, window_minutes) -> float
    files: dict  # path -> text

    def to_dict(self) -> dict:
        return {
            "logs": [line.to_dict() for line in self.logs],
            "metrics": [[s, k, w, v] for (s, k, w), v in sorted(self.metrics.items())],
            "files": dict(sorted(self.files.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArtifactStore":
        return cls(
            logs=tuple(LogLine(**line) for line in d["logs"]),
            metrics={(s, k, w): v for s, k, w, v in d["metrics"]},
            files=dict(d["files"]),
        )

    def digests(self) -> dict[str, str]:
        """Content digest per artifact (each file, the log stream, the metrics)."""
        d = self.to_dict()
        out = {"logs": sha256(canonical_json(d["logs"])), "metrics": sha256(canonical_json(d["metrics"]))}
        for path, text in d["files"].items():
            out[path] = sha256(text)
        return out


class ArtifactState:
    """Episode-private mutable view; only files change, through apply_patch."""

    def __init__(self, store: ArtifactStore):
        self.store = store
        self.files = dict(store.files)

    @property
    def logs(self) -> tuple[LogLine, ...]:
        return self.store.logs

    @property
    def metrics(self) -> dict:
        return self.store.metrics

    def digest(self) -> str:
        d = self.store.to_dict()
        d["files"] = dict(sorted(self.files.items()))
        return sha256(canonical_json(d))

    def sources(self) -> dict[str, str]:
        return {p: t for p, t in self.files.items() if p.startswith(SOURCE_DIR)}

    def test_files(self) -> dict[str, str]:
        return {p: t for p, t in self.files.items() if p.startswith(TEST_DIR)}


@dataclass(frozen=True)
class TaskInstance:
    task_id: str
    family: str
    seed: int
    robustness: Robustness
    statement: str
    artifacts: ArtifactStore
    ground_truth: dict
    checker_spec: dict
    oracle: TraceOracle
    reference_solution: dict  # {"calls": [{"tool", "args"}], "final_answer": ...}

    @property
    def oracle_ref(self) -> str:
        return self.oracle.oracle_id

    def to_dict(self) -> dict:
        body = {
            "task_id": self.task_id,
            "family": self.family,
            "seed": self.seed,
            "robustness": self.robustness.to_dict(),
            "statement": self.statement,
            "artifacts": self.artifacts.to_dict(),
            "artifact_digests": self.artifacts.digests(),
            "ground_truth": self.ground_truth,
            "checker_spec": self.checker_spec,
            "oracle": self.oracle.to_dict(),
            "oracle_digest": self.oracle.digest(),
            "reference_solution": self.reference_solution,
        }
        body["digest"] = sha256(canonical_json(body))
        return body

    @classmethod
    def from_dict(cls, d: dict) -> "TaskInstance":
        return cls(
            task_id=d["task_id"],
            family=d["family"],
            seed=d["seed"],
            robustness=Robustness(**d["robustness"]),
            statement=d["statement"],
            artifacts=ArtifactStore.from_dict(d["artifacts"]),
            ground_truth=d["ground_truth"],
            checker_spec=d["checker_spec"],
            oracle=TraceOracle.from_dict(d["oracle"]),
            reference_solution=d["reference_solution"],
        )

    def digest(self) -> str:
        return self.to_dict()["digest"]


def reset(task: TaskInstance) -> ArtifactState:
    """Fresh artifacts-state equal to the generated one."""
    return ArtifactState(task.artifacts)


# ---------------------------------------------------------------------------
# checker


@dataclass(frozen=True)
class CheckerVerdict:
    success: bool
    reason: str


def _lookup_key(doc: Any, dotted: str) -> Any:
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(dotted)
        node = node[part]
    return node


def _check_diagnosis(answer: Any, label: str) -> CheckerVerdict:
    if not isinstance(answer, dict) or not isinstance(answer.get("diagnosis"), str):
        return CheckerVerdict(False, "missing-diagnosis")
    if answer["diagnosis"].strip().lower() != label.lower():
        return CheckerVerdict(False, "wrong-diagnosis")
    return CheckerVerdict(True, "diagnosis-correct")


def _check_config(state: ArtifactState, spec: dict, truth: dict) -> CheckerVerdict:
    text = state.files.get(spec["file"])
    if text is None:
        return CheckerVerdict(False, "config-missing")
    try:
        doc = yaml.safe_load(text)
        value = _lookup_key(doc, spec["key"])
    except (yaml.YAMLError, KeyError):
        return CheckerVerdict(False, "config-unreadable")
    if not json_equal(value, truth["value"]):
        return CheckerVerdict(False, "config-value-wrong")
    return CheckerVerdict(True, "config-corrected")


def _check_tests(state: ArtifactState) -> CheckerVerdict:
    try:
        report = microlang.run_suite(state.sources(), state.test_files())
    except microlang.MicroSyntaxError:
        return CheckerVerdict(False, "repo-unparseable")
    if report.failed:
        return CheckerVerdict(False, f"tests-failing:{report.failed}")
    return CheckerVerdict(True, "tests-pass")


def check_final_answer(answer: str, task: TaskInstance, state: ArtifactState) -> CheckerVerdict:
    """Deterministic family rubric over (answer, artifacts state, ground truth)."""
    try:
        parsed = json.loads(answer)
    except (json.JSONDecodeError, TypeError):
        return CheckerVerdict(False, "unparseable-answer")
    spec = task.checker_spec
    parts = spec["parts"] if spec["rubric"] == "all" else [spec]
    verdict = CheckerVerdict(True, "")
    reasons = []
    for part in parts:
        rubric = part["rubric"]
        if rubric == "diagnosis_label":
            verdict = _check_diagnosis(parsed, task.ground_truth["label"])
        elif rubric == "config_value":
            verdict = _check_config(state, part, task.ground_truth)
        elif rubric == "tests_pass":
            verdict = _check_tests(state)
        else:
            raise ValueError(f"unknown rubric {rubric!r}")
        if not verdict.success:
            return verdict
        reasons.append(verdict.reason)
    return CheckerVerdict(True, "+".join(reasons))
