"""The fully crossed run matrix with ordered, incremental trajectory logging."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, Optional, Sequence, TextIO

from schemabench.analysis.tokenizer import DEFAULT_TOKENIZER, Tokenizer
from schemabench.contracts import ToolContract
from schemabench.harness.agents import AgentFactory
from schemabench.harness.episode import run_episode
from schemabench.harness.records import EpisodeConfig, RunRecord, write_run
from schemabench.render import render_toolset
from schemabench.sandbox.tasks import TaskInstance

DEFAULT_BUDGETS = (3, 5, 8, 12)
DEFAULT_CONDITIONS = ("A", "B", "C")
DEFAULT_SEEDS = (0, 1, 2)


def plan_cells(
    tasks: Sequence[TaskInstance],
    budgets: Sequence[int],
    conditions: Sequence[str],
    seeds: Sequence[int],
    granularity: str = "C3",
    step_timeout_ms: int = 60_000,
    max_step_output_chars: int = 4096,
) -> list[EpisodeConfig]:
    """Cells in (task, budget, condition, seed) order."""
    if not (tasks and budgets and conditions and seeds):
        raise ValueError("every factor needs at least one level")
    return [
        EpisodeConfig(
            task_id=t.task_id,
            budget=b,
            condition=k,
            seed=s,
            granularity=granularity if k == "C" else None,
            step_timeout_ms=step_timeout_ms,
            max_step_output_chars=max_step_output_chars,
        )
        for t in tasks
        for b in budgets
        for k in conditions
        for s in seeds
    ]


def iter_matrix(
    tasks: Sequence[TaskInstance],
    cells: Sequence[EpisodeConfig],
    agent_factory: AgentFactory,
    contracts: Sequence[ToolContract],
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    workers: int = 1,
) -> Iterator[RunRecord]:
    """Yield run records in cell order, whatever the parallel degree."""
    by_id = {t.task_id: t for t in tasks}
    toolsets = {k: render_toolset(contracts, k, tokenizer).text for k in {c.condition for c in cells}}

    def one(cfg: EpisodeConfig) -> RunRecord:
        task = by_id[cfg.task_id]
        return run_episode(cfg, task, agent_factory(task, cfg), contracts, toolsets[cfg.condition], tokenizer)

    if workers <= 1:
        for cfg in cells:
            yield one(cfg)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(one, cells)


def run_matrix(
    tasks: Sequence[TaskInstance],
    budgets: Sequence[int],
    conditions: Sequence[str],
    seeds: Sequence[int],
    agent_factory: AgentFactory,
    contracts: Sequence[ToolContract],
    granularity: str = "C3",
    step_timeout_ms: int = 60_000,
    max_step_output_chars: int = 4096,
    log: Optional[TextIO] = None,
    workers: int = 1,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[RunRecord]:
    """One episode per cell; each run is appended to ``log`` as it completes."""
    cells = plan_cells(tasks, budgets, conditions, seeds, granularity, step_timeout_ms, max_step_output_chars)
    runs = []
    for run in iter_matrix(tasks, cells, agent_factory, contracts, tokenizer, workers):
        if log is not None:
            write_run(log, run)
            log.flush()
        runs.append(run)
    return runs
