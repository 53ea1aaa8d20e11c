"""The budgeted agent loop and per-step classification."""

from __future__ import annotations

from typing import Optional, Sequence

from schemabench.analysis.tokenizer import DEFAULT_TOKENIZER, Tokenizer
from schemabench.contracts import ToolContract
from schemabench.harness.records import EpisodeConfig, RunRecord, StepRecord
from schemabench.harness.transport import AgentRequest, AgentTimeout, AgentTransport, TransportError, call_with_timeout
from schemabench.oracle import MISUSE, classify_call
from schemabench.render import render_toolset
from schemabench.sandbox.tasks import TaskInstance, check_final_answer, reset
from schemabench.tools.executors import ToolResult, execute_tool
from schemabench.validate import (
    FinalAnswer,
    ParseFailure,
    ParseResult,
    ToolCall,
    ValidationReport,
    format_diagnostics,
    parse_agent_output,
    validate_args,
)

SYSTEM_PROMPT = (
    "You are an agent working in a software-engineering sandbox. Each turn, reply with exactly one JSON "
    'object: either a tool call {"tool": "<name>", "args": {...}} or your answer {"final_answer": ...}. '
    "Every reply uses one step of your budget of {budget} steps, including replies the tools reject."
)


def system_prompt(budget: int) -> str:
    return SYSTEM_PROMPT.replace("{budget}", str(budget))


def classify_step(
    parsed: ParseResult,
    report: Optional[ValidationReport] = None,
    result: Optional[ToolResult] = None,
    oracle_verdict: Optional[str] = None,
) -> tuple[str, Optional[str]]:
    """``(classification, subcategory)`` for one step, first matching rule wins."""
    if isinstance(parsed, ParseFailure):
        return "interface_misuse", "malformed_json"
    if isinstance(parsed, FinalAnswer):
        return "final_answer", None
    if report is None:
        raise ValueError("a tool call needs its validation report")
    if report.verdict != "valid":
        return "interface_misuse", report.category
    if result is not None and result.status == "runtime_error":
        return "execution_failure", None
    if oracle_verdict == MISUSE:
        return "semantic_misuse", None
    return "valid_productive", None


def _parsed_dict(parsed: ParseResult) -> dict:
    if isinstance(parsed, ToolCall):
        return {"kind": "tool_call", "tool": parsed.name, "args": parsed.args}
    if isinstance(parsed, FinalAnswer):
        return {"kind": "final_answer", "value": parsed.value}
    return {"kind": "parse_failure", "reason": parsed.reason}


def build_prompt_text(request: AgentRequest) -> str:
    """The flat prompt whose token count is logged for each step."""
    parts = [request.system_prompt, request.toolset_text, request.task_statement]
    parts += [f"{h['role']}: {h['text']}" for h in request.history]
    return "\n\n".join(parts)


def run_episode(
    config: EpisodeConfig,
    task: TaskInstance,
    transport: AgentTransport,
    contracts: Sequence[ToolContract],
    toolset_text: Optional[str] = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> RunRecord:
    """One episode of at most ``config.budget`` steps on a fresh sandbox."""
    if toolset_text is None:
        toolset_text = render_toolset(contracts, config.condition, tokenizer).text
    by_name = {c.name: c for c in contracts}
    toolset_tokens = tokenizer.count(toolset_text)
    state = reset(task)
    oracle_states = task.oracle.initial()
    history: list[dict] = []
    steps: list[StepRecord] = []
    prompt = system_prompt(config.budget)

    def finish(status: str, reason: Optional[str], success: Optional[bool], checker: Optional[str], answer: Optional[str]) -> RunRecord:
        return RunRecord(config, task.family, status, reason, success, checker, answer, steps)

    for t in range(1, config.budget + 1):
        request = AgentRequest(
            run_id=config.run_id,
            step=t,
            budget=config.budget,
            condition=config.condition,
            system_prompt=prompt,
            toolset_text=toolset_text,
            task_statement=task.statement,
            history=tuple(dict(h) for h in history),
        )
        try:
            raw = call_with_timeout(transport, request, config.step_timeout_ms)
        except AgentTimeout:
            return finish("excluded", "agent_timeout", None, None, None)
        except TransportError:
            return finish("excluded", "transport_error", None, None, None)
        raw = raw[: config.max_step_output_chars]
        parsed = parse_agent_output(raw)
        report = result = verdict = None
        feedback: Optional[str]
        if isinstance(parsed, ParseFailure):
            report = ValidationReport.unparseable(parsed.reason)
            feedback = format_diagnostics(report, config.condition, config.granularity)
        elif isinstance(parsed, ToolCall):
            report = validate_args(parsed, by_name)
            if report.verdict != "valid":
                feedback = format_diagnostics(report, config.condition, config.granularity)
            else:
                result = execute_tool(parsed, state)
                if result.status == "ok":
                    verdict, oracle_states = classify_call(task.oracle, oracle_states, parsed.name, parsed.args)
                feedback = result.observation()
        else:
            feedback = None
        classification, sub = classify_step(parsed, report, result, verdict)
        steps.append(
            StepRecord(
                run_id=config.run_id,
                t=t,
                raw=raw,
                parsed=_parsed_dict(parsed),
                classification=classification,
                subcategory=sub,
                feedback=feedback,
                prompt_tokens=tokenizer.count(build_prompt_text(request)),
                completion_tokens=tokenizer.count(raw),
                toolset_tokens=toolset_tokens,
            )
        )
        if isinstance(parsed, FinalAnswer):
            verdict_j = check_final_answer(parsed.text, task, state)
            return finish("scored", None, verdict_j.success, verdict_j.reason, parsed.text)
        history.append({"role": "agent", "text": raw})
        history.append({"role": "environment", "text": feedback})
    return finish("scored", None, False, "budget-exhausted", None)
