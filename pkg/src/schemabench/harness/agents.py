"""Scripted agents used as test doubles for the harness.

Each agent decides its next reply from the request history alone, so a
scripted matrix is a pure function of its inputs. They follow a fixed plan
of tool calls; the plan comes from the task's reference solution, handed to
the factory (never to the transport request).
"""

from __future__ import annotations

import json
import time
from typing import Any, Callable

from schemabench.harness.records import EpisodeConfig
from schemabench.harness.transport import AgentRequest, AgentTransport
from schemabench.sandbox.tasks import TaskInstance

# plausible wrong spellings of enum values, keyed by the canonical value
SYNONYMS = {
    "p95_latency": "latency95",
    "error_rate": "errors",
    "api": "api_service",
    "auth": "auth_service",
    "db": "database",
    "worker": "workers",
    "all": "everything",
    "selected": "some",
}
ENUM_KEYS = frozenset({"metric_key", "service", "mode"})

AGENT_NAMES = ("perfect", "prose_confused", "recoverer", "repeater", "silent")


def _is_observation(text: str) -> bool:
    return text.startswith("tool_result: ") or text.startswith("runtime_error: ")


def _env_texts(request: AgentRequest) -> list[str]:
    return [h["text"] for h in request.history if h["role"] == "environment"]


def synonymize(args: Any, first_only: bool = False) -> Any:
    """Copy of ``args`` with enum values replaced by synonyms."""
    done = [False]

    def walk(node: Any) -> Any:
        if not isinstance(node, dict):
            return node
        out = {}
        for k, v in node.items():
            if k in ENUM_KEYS and isinstance(v, str) and v in SYNONYMS and not (first_only and done[0]):
                out[k] = SYNONYMS[v]
                done[0] = True
            else:
                out[k] = walk(v)
        return out

    return walk(args)


def _emit_call(call: dict) -> str:
    return json.dumps({"tool": call["tool"], "args": call["args"]}, sort_keys=True)


def _emit_answer(value: Any) -> str:
    return json.dumps({"final_answer": value}, sort_keys=True)


class _PlanAgent:
    """Walks a plan; a call counts as done once the environment returns an observation."""

    kind = "scripted"
    name = "plan"

    def __init__(self, plan: dict):
        self.calls = list(plan["calls"])
        self.answer = plan["final_answer"]

    def variant(self, call: dict, index: int, request: AgentRequest) -> dict:
        return call

    def respond(self, request: AgentRequest) -> str:
        done = sum(_is_observation(t) for t in _env_texts(request))
        if done >= len(self.calls):
            return _emit_answer(self.answer)
        return _emit_call(self.variant(self.calls[done], done, request))


class PerfectAgent(_PlanAgent):
    name = "perfect"


class ProseConfusedAgent(_PlanAgent):
    """Uses enum synonyms under condition A until feedback lists the allowed values."""

    name = "prose_confused"

    def variant(self, call: dict, index: int, request: AgentRequest) -> dict:
        if request.condition != "A" or any('"allowed"' in t for t in _env_texts(request) if not _is_observation(t)):
            return call
        return {"tool": call["tool"], "args": synonymize(call["args"])}


class RecovererAgent(_PlanAgent):
    """Gets one enum wrong in its first call; fixes it only given field paths."""

    name = "recoverer"

    def variant(self, call: dict, index: int, request: AgentRequest) -> dict:
        if index > 0 or any("$." in t for t in _env_texts(request) if not _is_observation(t)):
            return call
        return {"tool": call["tool"], "args": synonymize(call["args"], first_only=True)}


class RepeaterAgent:
    kind = "scripted"
    name = "repeater"

    def __init__(self, plan: dict):
        self.call = plan["calls"][0]

    def respond(self, request: AgentRequest) -> str:
        return _emit_call(self.call)


class SilentAgent:
    kind = "scripted"
    name = "silent"

    def respond(self, request: AgentRequest) -> str:
        return ""


class SlowAgent:
    """Wraps an agent and sleeps before every reply (to exercise timeouts)."""

    kind = "scripted"

    def __init__(self, inner: AgentTransport, delay_s: float):
        self.inner = inner
        self.delay_s = delay_s
        self.name = f"slow({getattr(inner, 'name', 'agent')})"

    def respond(self, request: AgentRequest) -> str:
        time.sleep(self.delay_s)
        return self.inner.respond(request)


AgentFactory = Callable[[TaskInstance, EpisodeConfig], AgentTransport]


def scripted_agents() -> dict[str, AgentFactory]:
    """Factories ``(task, config) -> transport`` for every scripted agent."""
    return {
        "perfect": lambda task, cfg: PerfectAgent(task.reference_solution),
        "prose_confused": lambda task, cfg: ProseConfusedAgent(task.reference_solution),
        "recoverer": lambda task, cfg: RecovererAgent(task.reference_solution),
        "repeater": lambda task, cfg: RepeaterAgent(task.reference_solution),
        "silent": lambda task, cfg: SilentAgent(),
    }


def with_timeouts(
    factory: AgentFactory, cells: Callable[[EpisodeConfig], bool], delay_s: float
) -> AgentFactory:
    """Factory whose agents stall on the cells selected by ``cells``."""

    def make(task: TaskInstance, cfg: EpisodeConfig) -> AgentTransport:
        agent = factory(task, cfg)
        return SlowAgent(agent, delay_s) if cells(cfg) else agent

    return make


def timeout_cells(task_id: str, seed: int) -> Callable[[EpisodeConfig], bool]:
    """Selector for every (budget, condition) cell of one (task, seed)."""
    return lambda cfg: cfg.task_id == task_id and cfg.seed == seed
