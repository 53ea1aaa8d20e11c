"""Assemble metrics, curves, paired tests and exclusions into report files."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter, defaultdict
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence, Union

from schemabench.analysis.metrics import (
    SCHEMA_VALID,
    BudgetCurve,
    budget_curves,
    compute_metrics,
    efficiency,
    recovery_conditioned,
)
from schemabench.analysis.stats import bootstrap_ci, wilcoxon_holm
from schemabench.harness.records import RunRecord

ARM_ORDER = ("A", "B", "C", "C1", "C2", "C3")
CSV_METRICS = (
    ("S", "scored"),
    ("I", "tool_call_steps"),
    ("E", "schema_valid_calls"),
    ("R", "conditioned_runs"),
    ("T", "scored"),
    ("M", "schema_valid_calls"),
    ("O_toolset_tokens", "tool_call_steps"),
    ("O_extra_steps", "conditioned_runs"),
    ("invalid_calls_per_run", "scored"),
)
PRIMARY = "S"
SECONDARY = ("I", "E", "M")


def _arm_rank(arm: str) -> int:
    return ARM_ORDER.index(arm) if arm in ARM_ORDER else len(ARM_ORDER)


def _num(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def metrics_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "budget", "metric", "value", "denominator"])
    for (cond, budget), cell in summary.items():
        d = cell.to_dict()
        for metric, den in CSV_METRICS:
            w.writerow([cond, budget, metric, _num(d[metric]), d[den]])
    return buf.getvalue()


def curves_csv(curves: Sequence[BudgetCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "budget", "S", "auc"])
    for c in curves:
        for b, s in c.points:
            w.writerow([c.condition, b, _num(s), _num(c.auc)])
    return buf.getvalue()


def _task_values(runs: Sequence[RunRecord], arm: str) -> dict[str, dict[str, Optional[float]]]:
    """Per task pooled S, I, E, M for one arm (scored runs only)."""
    groups: dict[str, list[RunRecord]] = defaultdict(list)
    for r in runs:
        if r.scored and r.config.arm == arm:
            groups[r.config.task_id].append(r)
    out = {}
    for task_id, rs in sorted(groups.items()):
        calls = [s for r in rs for s in r.steps if s.classification != "final_answer"]
        valid = [s for s in calls if s.classification in SCHEMA_VALID]
        out[task_id] = {
            "S": sum(bool(r.success) for r in rs) / len(rs),
            "I": sum(s.classification == "interface_misuse" for s in calls) / len(calls) if calls else None,
            "E": sum(s.classification == "execution_failure" for s in valid) / len(valid) if valid else None,
            "M": sum(s.classification == "semantic_misuse" for s in valid) / len(valid) if valid else None,
        }
    return out


def paired_contrasts(
    runs: Sequence[RunRecord], resamples: int = 2000, rng_seed: int = 0, alternative: str = "two-sided"
) -> tuple[list[dict], list[dict]]:
    """Tests and bootstrap intervals for every arm pair, tasks as the pairing unit.

    Task success is the primary endpoint and is tested alone; I, E and M form
    the Holm-adjusted secondary family.
    """
    arms = sorted({r.config.arm for r in runs if r.scored}, key=_arm_rank)
    tests: list[dict] = []
    intervals: list[dict] = []
    for y, x in combinations(arms, 2):
        contrast = f"{x}-{y}"
        vx, vy = _task_values(runs, x), _task_values(runs, y)
        diffs: dict[str, list[float]] = {}
        for endpoint in (PRIMARY,) + SECONDARY:
            diffs[endpoint] = [
                vx[t][endpoint] - vy[t][endpoint]
                for t in sorted(set(vx) & set(vy))
                if vx[t][endpoint] is not None and vy[t][endpoint] is not None
            ]
        primary = {PRIMARY: diffs[PRIMARY]} if diffs[PRIMARY] else {}
        secondary = {e: diffs[e] for e in SECONDARY if diffs[e]}
        for family in (primary, secondary):
            if family:
                tests += [t.to_dict() for t in wilcoxon_holm(family, contrast, alternative)]
        for endpoint, values in diffs.items():
            if values:
                ci = bootstrap_ci([[v] for v in values], resamples, rng_seed)
                intervals.append(
                    {"endpoint": endpoint, "contrast": contrast, "mean": ci.mean, "lo": ci.lo, "hi": ci.hi,
                     "half_width": ci.half_width, "n_tasks": ci.n_tasks}
                )
    return tests, intervals


def exclusion_table(runs: Sequence[RunRecord]) -> list[dict]:
    counts = Counter((r.exclusion_reason, r.family) for r in runs if not r.scored)
    return [{"reason": reason, "family": fam, "count": n} for (reason, fam), n in sorted(counts.items())]


def build_report(
    runs: Sequence[RunRecord],
    tokenizer: str = "whitespace",
    resamples: int = 2000,
    rng_seed: int = 0,
    alternative: str = "two-sided",
) -> dict:
    summary = compute_metrics(runs)
    curves = budget_curves(runs)
    tests, intervals = paired_contrasts(runs, resamples, rng_seed, alternative)
    arms = sorted({r.config.arm for r in runs if r.scored}, key=_arm_rank)
    recovery = []
    for y, x in combinations(arms, 2):
        rc = recovery_conditioned([r for r in runs if r.config.arm == x], [r for r in runs if r.config.arm == y])
        recovery.append(rc.to_dict() | {"x": x, "y": y})
    cell_ci = []
    for (cond, budget), cell in summary.items():
        per_task: dict[str, list[float]] = defaultdict(list)
        for r in runs:
            if r.scored and r.config.arm == cond and r.config.budget == budget:
                per_task[r.config.task_id].append(float(bool(r.success)))
        if per_task:
            ci = bootstrap_ci(dict(sorted(per_task.items())), resamples, rng_seed)
            cell_ci.append({"condition": cond, "budget": budget, "S": ci.mean, "lo": ci.lo, "hi": ci.hi,
                            "half_width": ci.half_width})
    scored = sum(r.scored for r in runs)
    return {
        "tokenizer": tokenizer,
        "bootstrap": {"resamples": resamples, "rng_seed": rng_seed, "level": 0.95, "unit": "task"},
        "alternative": alternative,
        "counts": {"total": len(runs), "scored": scored, "excluded": len(runs) - scored},
        "exclusions": exclusion_table(runs),
        "metrics": [cell.to_dict() for cell in summary.values()],
        "success_ci": cell_ci,
        "curves": [{"condition": c.condition, "points": [list(p) for p in c.points], "auc": c.auc} for c in curves],
        "tests": tests,
        "contrast_ci": intervals,
        "recovery": recovery,
        "efficiency": [e.to_dict() for e in efficiency(runs)] if runs else [],
    }


def write_report(
    runs: Sequence[RunRecord],
    out_dir: Union[str, Path],
    tokenizer: str = "whitespace",
    resamples: int = 2000,
    rng_seed: int = 0,
    alternative: str = "two-sided",
) -> dict:
    """Write report.csv, report.json and curves.csv; return the JSON document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = build_report(runs, tokenizer, resamples, rng_seed, alternative)
    (out / "report.csv").write_text(metrics_csv(compute_metrics(runs)), encoding="utf-8")
    (out / "curves.csv").write_text(curves_csv(budget_curves(runs)), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc
