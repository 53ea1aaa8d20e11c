"""Outcome metrics per (condition, budget) cell, budget curves, recovery and efficiency."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

from schemabench.analysis.stats import normalized_auc
from schemabench.harness.records import RunRecord, extra

SCHEMA_VALID = ("valid_productive", "semantic_misuse", "execution_failure")


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


@dataclass(frozen=True)
class CellMetrics:
    condition: str
    budget: int
    S: Optional[float]  # success fraction over scored runs
    I: Optional[float]  # interface misuse / tool-call steps
    E: Optional[float]  # execution failures / schema-valid calls
    R: Optional[float]  # P(success | >=1 interface misuse); None when unconditioned
    T: Optional[float]  # median steps to success, failures counted as B + 1
    M: Optional[float]  # semantic misuse / schema-valid calls
    O_toolset_tokens: Optional[float]  # mean toolset tokens per tool-call prompt
    O_extra_steps: Optional[float]  # mean steps after the first invalid call, conditioned runs
    invalid_calls_per_run: Optional[float]
    runs: int
    scored: int
    excluded: int
    successes: int
    tool_call_steps: int
    schema_valid_calls: int
    conditioned_runs: int
    censored_runs: int

    def to_dict(self) -> dict:
        return asdict(self)


MetricsSummary = dict  # (condition, budget) -> CellMetrics


def _key(run: RunRecord) -> tuple:
    c = run.config
    return (c.task_id, c.budget, c.arm, c.seed)


def check_unique(runs: Sequence[RunRecord]) -> None:
    seen = set()
    for r in runs:
        k = _key(r)
        if k in seen:
            raise ValueError(f"duplicate run key {k}")
        seen.add(k)


def cell_metrics(condition: str, budget: int, runs: Sequence[RunRecord]) -> CellMetrics:
    scored = [r for r in runs if r.scored]
    steps = [s for r in scored for s in r.steps]
    calls = [s for s in steps if s.classification != "final_answer"]
    valid = [s for s in calls if s.classification in SCHEMA_VALID]
    misuse = sum(s.classification == "interface_misuse" for s in calls)
    conditioned = [r for r in scored if r.first_invalid_step is not None]
    successes = sum(bool(r.success) for r in scored)
    t_values = [r.steps_to_success if r.success else budget + 1 for r in scored]
    tokens = [s.toolset_tokens for s in calls]
    return CellMetrics(
        condition=condition,
        budget=budget,
        S=_ratio(successes, len(scored)),
        I=_ratio(misuse, len(calls)),
        E=_ratio(sum(s.classification == "execution_failure" for s in valid), len(valid)),
        R=_ratio(sum(bool(r.success) for r in conditioned), len(conditioned)),
        T=float(statistics.median(t_values)) if t_values else None,
        M=_ratio(sum(s.classification == "semantic_misuse" for s in valid), len(valid)),
        O_toolset_tokens=_ratio(sum(tokens), len(tokens)),
        O_extra_steps=_ratio(sum(extra(r)["steps_after_first_invalid"] for r in conditioned), len(conditioned)),
        invalid_calls_per_run=_ratio(misuse, len(scored)),
        runs=len(runs),
        scored=len(scored),
        excluded=len(runs) - len(scored),
        successes=successes,
        tool_call_steps=len(calls),
        schema_valid_calls=len(valid),
        conditioned_runs=len(conditioned),
        censored_runs=len(scored) - successes,
    )


def compute_metrics(runs: Sequence[RunRecord]) -> MetricsSummary:
    """Metrics for every (condition, budget) cell, in sorted key order."""
    check_unique(runs)
    cells: dict[tuple, list[RunRecord]] = defaultdict(list)
    for r in runs:
        cells[(r.config.arm, r.config.budget)].append(r)
    return {k: cell_metrics(k[0], k[1], cells[k]) for k in sorted(cells)}


@dataclass(frozen=True)
class BudgetCurve:
    condition: str
    points: tuple[tuple[int, float], ...]
    auc: float


def budget_curve(runs: Sequence[RunRecord], condition: Optional[str] = None) -> BudgetCurve:
    """S(B) over scored runs of one condition and its normalized AUC."""
    conds = sorted({r.config.arm for r in runs}) if condition is None else [condition]
    if len(conds) != 1:
        raise ValueError("runs span several conditions; pass one")
    by_budget: dict[int, list[bool]] = defaultdict(list)
    for r in runs:
        if r.config.arm == conds[0] and r.scored:
            by_budget[r.config.budget].append(bool(r.success))
    points = tuple((b, sum(v) / len(v)) for b, v in sorted(by_budget.items()))
    return BudgetCurve(conds[0], points, normalized_auc(points))


def budget_curves(runs: Sequence[RunRecord]) -> list[BudgetCurve]:
    out = []
    for cond in sorted({r.config.arm for r in runs}):
        sub = [r for r in runs if r.config.arm == cond and r.scored]
        if len({r.config.budget for r in sub}) >= 2:
            out.append(budget_curve(sub, cond))
    return out


NO_CONDITIONED = "no conditioned runs"


@dataclass(frozen=True)
class RecoveryContrast:
    x: str
    y: str
    status: str  # ok | no conditioned runs
    n_x: int
    n_y: int
    n_pairs: int
    R_x: Optional[float]
    R_y: Optional[float]
    delta_R: Optional[float]  # R_x - R_y
    extra_steps_x: Optional[float]
    extra_steps_y: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def recovery_conditioned(runs_x: Sequence[RunRecord], runs_y: Sequence[RunRecord]) -> RecoveryContrast:
    """Recovery and post-error cost on runs with at least one interface misuse.

    Runs are matched by (task, budget, seed); only matched runs count, and
    each side's denominator is its own conditioned runs.
    """

    def index(runs: Sequence[RunRecord]) -> dict:
        out = {}
        for r in runs:
            if r.scored:
                k = (r.config.task_id, r.config.budget, r.config.seed)
                if k in out:
                    raise ValueError(f"duplicate pairing key {k}")
                out[k] = r
        return out

    ix, iy = index(runs_x), index(runs_y)
    keys = sorted(set(ix) & set(iy))
    cx = [ix[k] for k in keys if ix[k].first_invalid_step is not None]
    cy = [iy[k] for k in keys if iy[k].first_invalid_step is not None]
    n_pairs = sum(1 for k in keys if ix[k].first_invalid_step is not None and iy[k].first_invalid_step is not None)
    label = lambda runs: runs[0].config.arm if runs else "?"  # noqa: E731
    x, y = label(list(ix.values())), label(list(iy.values()))
    if not cx and not cy:
        return RecoveryContrast(x, y, NO_CONDITIONED, 0, 0, 0, None, None, None, None, None)

    def rate(runs: list[RunRecord]) -> Optional[float]:
        return _ratio(sum(bool(r.success) for r in runs), len(runs))

    def steps(runs: list[RunRecord]) -> Optional[float]:
        return _ratio(sum(extra(r)["steps_after_first_invalid"] for r in runs), len(runs))

    rx, ry = rate(cx), rate(cy)
    delta = rx - ry if rx is not None and ry is not None else None
    return RecoveryContrast(x, y, "ok", len(cx), len(cy), n_pairs, rx, ry, delta, steps(cx), steps(cy))


@dataclass(frozen=True)
class Efficiency:
    condition: str
    prompt_tokens: int
    toolset_tokens: int
    history_tokens: int
    successes: int
    invalid_calls: int
    success_per_1k: float
    invalid_per_1k: float

    def to_dict(self) -> dict:
        return asdict(self)


def efficiency(runs: Iterable[RunRecord]) -> list[Efficiency]:
    """Per-condition ratios over summed prompt tokens of scored runs."""
    groups: dict[str, list[RunRecord]] = defaultdict(list)
    for r in runs:
        if r.scored:
            groups[r.config.arm].append(r)
    out = []
    for cond in sorted(groups):
        sums = [extra(r) for r in groups[cond]]
        prompt = sum(s["prompt_tokens"] for s in sums)
        if prompt == 0:
            raise ValueError(f"condition {cond}: zero prompt tokens")
        toolset = sum(s["toolset_tokens"] for s in sums)
        wins = sum(bool(r.success) for r in groups[cond])
        invalid = sum(s["invalid_calls"] for s in sums)
        out.append(
            Efficiency(cond, prompt, toolset, prompt - toolset, wins, invalid, 1000 * wins / prompt, 1000 * invalid / prompt)
        )
    return out
