"""Episode configuration and the step/run records written to trajectory logs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, TextIO, Union

CLASSIFICATIONS = ("valid_productive", "semantic_misuse", "interface_misuse", "execution_failure", "final_answer")
SUBCATEGORIES = (
    "wrong_tool_name",
    "malformed_json",
    "missing_required",
    "type_mismatch",
    "enum_violation",
    "constraint_violation",
)
EXCLUSION_REASONS = ("agent_timeout", "transport_error")


@dataclass(frozen=True)
class EpisodeConfig:
    task_id: str
    budget: int
    condition: str
    seed: int
    granularity: Optional[str] = None  # C1 | C2 | C3, condition C only
    step_timeout_ms: int = 60_000
    max_step_output_chars: int = 4096

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.condition not in ("A", "B", "C"):
            raise ValueError(f"unknown condition {self.condition!r}")
        if (self.granularity is not None) != (self.condition == "C"):
            raise ValueError("granularity is set iff condition is C")
        if self.granularity not in (None, "C1", "C2", "C3"):
            raise ValueError(f"unknown granularity {self.granularity!r}")

    @property
    def arm(self) -> str:
        """Condition label with granularity, e.g. ``A`` or ``C3``."""
        return self.granularity or self.condition

    @property
    def run_id(self) -> str:
        return f"{self.task_id}|B{self.budget}|{self.arm}|s{self.seed}"


@dataclass
class StepRecord:
    run_id: str
    t: int
    raw: str
    parsed: dict  # {"kind": tool_call|final_answer|parse_failure, ...}
    classification: str
    subcategory: Optional[str]
    feedback: Optional[str]
    prompt_tokens: int
    completion_tokens: int
    toolset_tokens: int

    def to_dict(self) -> dict:
        return {"type": "step", **asdict(self)}


@dataclass
class RunRecord:
    config: EpisodeConfig
    family: str
    status: str  # scored | excluded
    exclusion_reason: Optional[str]
    success: Optional[bool]
    checker_reason: Optional[str]
    final_answer: Optional[str]
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def run_id(self) -> str:
        return self.config.run_id

    @property
    def scored(self) -> bool:
        return self.status == "scored"

    @property
    def steps_taken(self) -> int:
        return len(self.steps)

    @property
    def steps_to_success(self) -> Optional[int]:
        return len(self.steps) if self.success else None

    @property
    def first_invalid_step(self) -> Optional[int]:
        for s in self.steps:
            if s.classification == "interface_misuse":
                return s.t
        return None

    def counts(self) -> dict[str, int]:
        out = {c: 0 for c in CLASSIFICATIONS}
        for s in self.steps:
            out[s.classification] += 1
        return out

    def summary(self) -> dict:
        return {
            "type": "run",
            "run_id": self.run_id,
            "config": asdict(self.config),
            "family": self.family,
            "status": self.status,
            "exclusion_reason": self.exclusion_reason,
            "success": self.success,
            "checker_reason": self.checker_reason,
            "final_answer": self.final_answer,
            "steps_taken": self.steps_taken,
            "steps_to_success": self.steps_to_success,
            "first_invalid_step": self.first_invalid_step,
            "counts": self.counts(),
        }


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_run(fh: TextIO, run: RunRecord) -> None:
    """Append one run: its step rows, then the run summary row."""
    for s in run.steps:
        fh.write(dumps_line(s.to_dict()))
    fh.write(dumps_line(run.summary()))


def iter_runs(lines: Iterable[str]) -> Iterator[RunRecord]:
    pending: list[StepRecord] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            kind = row.pop("type", None)
            if kind == "step":
                pending.append(StepRecord(**row))
                continue
        except (json.JSONDecodeError, AttributeError, TypeError) as exc:
            raise ValueError(f"log line {lineno}: {exc}") from None
        if kind == "run":
            steps = [s for s in pending if s.run_id == row["run_id"]]
            if len(steps) != len(pending) or len(steps) != row["steps_taken"]:
                raise ValueError(f"log line {lineno}: step rows do not match run {row['run_id']}")
            pending = []
            yield RunRecord(
                config=EpisodeConfig(**row["config"]),
                family=row["family"],
                status=row["status"],
                exclusion_reason=row["exclusion_reason"],
                success=row["success"],
                checker_reason=row["checker_reason"],
                final_answer=row["final_answer"],
                steps=steps,
            )
        else:
            raise ValueError(f"log line {lineno}: unknown row type {kind!r}")
    if pending:
        raise ValueError("log ends with step rows that have no run row")


def load_trajectory(path: Union[str, Path]) -> list[RunRecord]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_runs(fh))


def extra(run: RunRecord) -> dict[str, Any]:
    """Per-run quantities derived from the steps, used by analysis."""
    first = run.first_invalid_step
    return {
        "invalid_calls": sum(s.classification == "interface_misuse" for s in run.steps),
        "steps_after_first_invalid": 0 if first is None else run.steps_taken - first,
        "prompt_tokens": sum(s.prompt_tokens for s in run.steps),
        "toolset_tokens": sum(s.toolset_tokens for s in run.steps),
    }
