import hashlib
import itertools
import json
import math
import random
from fractions import Fraction
from pathlib import Path

import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from schemabench.analysis.metrics import (
    NO_CONDITIONED,
    budget_curve,
    cell_metrics,
    compute_metrics,
    efficiency,
    recovery_conditioned,
)
from schemabench.analysis.report import build_report, metrics_csv, write_report
from schemabench.analysis.stats import (
    DEGENERATE,
    bootstrap_ci,
    holm,
    normalized_auc,
    wilcoxon_holm,
    wilcoxon_signed_rank,
)
from schemabench.analysis.tokenizer import DEFAULT_TOKENIZER
from schemabench.harness.agents import scripted_agents
from schemabench.harness.matrix import run_matrix
from schemabench.harness.records import EpisodeConfig, RunRecord, StepRecord

GOLDEN = Path(__file__).parent / "golden"

CODES = {
    "P": ("valid_productive", None),
    "X": ("interface_misuse", "enum_violation"),
    "F": ("execution_failure", None),
    "S": ("semantic_misuse", None),
    "Z": ("final_answer", None),
}


def make_run(task, codes, success, budget=5, arm="A", seed=0, status="scored", prompt=1000, toolset=100):
    gran = arm if arm.startswith("C") else None
    cond = "C" if gran else arm
    config = EpisodeConfig(task, budget, cond, seed, gran)
    steps = [
        StepRecord(config.run_id, i + 1, "", {}, CODES[c][0], CODES[c][1], None, prompt, 1, toolset)
        for i, c in enumerate(codes)
    ]
    scored = status == "scored"
    return RunRecord(
        config, "log_diagnosis", status, None if scored else "agent_timeout",
        success if scored else None, None, None, steps,
    )


# the hand-built ten-run set, one cell (A, B = 5)
TEN = [
    make_run("t0", "PPZ", True),
    make_run("t1", "XPZ", True),
    make_run("t2", "XXXXX", False),
    make_run("t3", "PFPZ", True),
    make_run("t4", "SSPZ", False),
    make_run("t5", "PZ", True),
    make_run("t6", "XPFZ", False),
    make_run("t7", "PPPPP", False),
    make_run("t8", "P", None, status="excluded"),
    make_run("t9", "XZ", True),
]


# ---------------------------------------------------------------------------
# metrics


def test_trivial_all_success():
    runs = [make_run(f"t{i}", "PZ", True) for i in range(4)]
    m = cell_metrics("A", 5, runs)
    assert (m.S, m.I, m.E, m.M, m.R) == (1.0, 0.0, 0.0, 0.0, None)
    assert m.conditioned_runs == 0 and m.O_extra_steps is None


def test_ten_run_hand_computation():
    m = compute_metrics(TEN)[("A", 5)]
    # 9 scored; successes t0 t1 t3 t5 t9
    assert (m.runs, m.scored, m.excluded, m.successes) == (10, 9, 1, 5)
    assert m.S == 5 / 9
    # 25 tool-call steps, 8 of them interface misuse
    assert (m.tool_call_steps, m.I) == (25, 8 / 25)
    # 17 schema-valid: 2 execution failures, 2 semantic misuses
    assert (m.schema_valid_calls, m.E, m.M) == (17, 2 / 17, 2 / 17)
    # conditioned t1 t2 t6 t9, successes t1 t9; steps after first invalid 2 + 4 + 3 + 1
    assert (m.conditioned_runs, m.R, m.O_extra_steps) == (4, 0.5, 2.5)
    # steps to success 3 3 4 2 2, four failures censored at 6: median of 2 2 3 3 4 6 6 6 6
    assert (m.T, m.censored_runs) == (4.0, 4)
    assert m.invalid_calls_per_run == 8 / 9
    assert m.O_toolset_tokens == 100.0


def test_count_conservation():
    for r in TEN:
        assert sum(r.counts().values()) == r.steps_taken


def test_mean_invalid_calls_fixture():
    # 36 condition-A runs: 14 with six invalid calls, 22 with five -> 194 in total
    runs = []
    for i in range(36):
        k = 6 if i < 14 else 5
        budget = 8 if i % 2 else 12
        runs.append(make_run(f"t{i // 4}", "X" * k + "Z", False, budget=budget, seed=i % 4))
    summary = compute_metrics(runs)
    total_invalid = sum(c.invalid_calls_per_run * c.scored for c in summary.values())
    total_runs = sum(c.scored for c in summary.values())
    assert (round(total_invalid), total_runs) == (194, 36)
    assert f"{total_invalid / total_runs:.2f}" == "5.39"


def test_duplicate_keys_rejected():
    with pytest.raises(ValueError):
        compute_metrics([TEN[0], TEN[0]])


def test_aggregation_linearity():
    left, right = TEN[:5], TEN[5:]
    a = cell_metrics("A", 5, left)
    b = cell_metrics("A", 5, right)
    whole = cell_metrics("A", 5, TEN)
    merged_i = (a.I * a.tool_call_steps + b.I * b.tool_call_steps) / (a.tool_call_steps + b.tool_call_steps)
    merged_s = (a.S * a.scored + b.S * b.scored) / (a.scored + b.scored)
    assert math.isclose(merged_i, whole.I) and math.isclose(merged_s, whole.S)


def test_rates_bounded():
    m = cell_metrics("A", 5, TEN)
    for v in (m.S, m.I, m.E, m.R, m.M):
        assert 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# curves


def test_auc_cases():
    assert normalized_auc([(3, 0), (5, 0), (8, 0), (12, 0)]) == 0.0
    assert normalized_auc([(3, 1), (5, 1), (8, 1), (12, 1)]) == 1.0
    assert normalized_auc([(3, 0), (12, 1)]) == 0.5
    with pytest.raises(ValueError):
        normalized_auc([(3, 1)])


def test_budget_curve_from_runs():
    runs = [make_run("t0", "XXX", False, budget=3), make_run("t0", "PZ", True, budget=12)]
    curve = budget_curve(runs)
    assert curve.points == ((3, 0.0), (12, 1.0)) and curve.auc == 0.5
    with pytest.raises(ValueError):
        budget_curve([make_run("t0", "PZ", True, budget=3)])


# ---------------------------------------------------------------------------
# recovery and efficiency


def test_recovery_hand_set():
    xs = [make_run("t0", "XPZ", True, arm="C3"), make_run("t1", "PZ", True, arm="C3")]
    ys = [make_run("t0", "XXXXX", False, arm="C1"), make_run("t1", "XZ", False, arm="C1")]
    rc = recovery_conditioned(xs, ys)
    assert (rc.x, rc.y, rc.status) == ("C3", "C1", "ok")
    assert (rc.n_x, rc.n_y, rc.n_pairs) == (1, 2, 1)
    assert (rc.R_x, rc.R_y, rc.delta_R) == (1.0, 0.0, 1.0)
    assert (rc.extra_steps_x, rc.extra_steps_y) == (2.0, 2.5)


def test_recovery_without_invalid_calls():
    xs = [make_run("t0", "PZ", True, arm="C3")]
    ys = [make_run("t0", "PZ", True, arm="C1")]
    rc = recovery_conditioned(xs, ys)
    assert rc.status == NO_CONDITIONED and rc.R_x is None and rc.R_y is None


def test_efficiency_hand_computation():
    (e,) = efficiency(TEN)
    # 32 steps across scored runs at 1000 prompt tokens each
    assert (e.prompt_tokens, e.toolset_tokens, e.history_tokens) == (32000, 3200, 28800)
    assert (e.success_per_1k, e.invalid_per_1k) == (5 / 32, 8 / 32)


def test_efficiency_zero_successes_and_monotone():
    fails = [make_run(f"t{i}", "XZ", False) for i in range(3)]
    assert efficiency(fails)[0].success_per_1k == 0.0
    base = [make_run(f"t{i}", "PZ", i % 2 == 0) for i in range(4)]
    doubled = [make_run(f"t{i}", "PZ", i % 2 == 0, prompt=1100, toolset=200) for i in range(4)]
    assert efficiency(doubled)[0].success_per_1k < efficiency(base)[0].success_per_1k
    with pytest.raises(ValueError):
        efficiency([make_run("t0", "PZ", True, prompt=0)])


# ---------------------------------------------------------------------------
# bootstrap


def _enumerated_percentiles(task_means, level=0.95):
    """Inverted-CDF percentiles over all n^n resamples, in exact arithmetic."""
    n = len(task_means)
    means = sorted(sum(Fraction(task_means[i]) for i in idx) / n for idx in itertools.product(range(n), repeat=n))
    alpha = Fraction(1 - Fraction(str(level))) / 2
    pick = lambda q: means[max(0, math.ceil(q * len(means)) - 1)]  # noqa: E731
    return pick(alpha), pick(1 - alpha)


def test_bootstrap_two_task_enumeration():
    lo, hi = _enumerated_percentiles([Fraction(1, 4), Fraction(3, 4)])
    ci = bootstrap_ci({"a": [0.0, 0.5], "b": [1.0, 0.5]}, resamples=4000, rng_seed=3)
    assert (ci.lo, ci.hi) == (float(lo), float(hi)) == (0.25, 0.75)
    assert ci.mean == 0.5 and ci.half_width == 0.25 and ci.n_tasks == 2


def test_bootstrap_constant_and_deterministic():
    ci = bootstrap_ci([[0.75], [0.75], [0.75]], resamples=1000)
    assert (ci.lo, ci.hi, ci.half_width) == (0.75, 0.75, 0.0)
    ci = bootstrap_ci([[0.7], [0.7], [0.7]], resamples=1000)
    assert ci.lo == ci.hi == pytest.approx(0.7, abs=1e-15) and ci.half_width == 0.0
    a = bootstrap_ci([[0, 1], [1], [0.5, 0.25]], resamples=2000, rng_seed=11)
    b = bootstrap_ci([[0, 1], [1], [0.5, 0.25]], resamples=2000, rng_seed=11)
    assert a == b


def test_bootstrap_errors():
    with pytest.raises(ValueError):
        bootstrap_ci([])
    with pytest.raises(ValueError):
        bootstrap_ci([[1.0]], resamples=999)


# ---------------------------------------------------------------------------
# Wilcoxon and Holm


def _brute_p(diffs, alternative):
    """Exact p-values by listing every sign pattern over the nonzero |diffs|."""
    nz = [d for d in diffs if d != 0]
    mags = [abs(d) for d in nz]
    # average ranks, computed independently of the implementation
    ranks = [Fraction(sum(m < x for m in mags) + 1 + sum(m <= x for m in mags), 2) for x in mags]
    observed = sum(r for r, d in zip(ranks, nz) if d > 0)
    ge = le = 0
    for signs in itertools.product((0, 1), repeat=len(nz)):
        w = sum(r for r, s in zip(ranks, signs) if s)
        ge += w >= observed
        le += w <= observed
    total = 2 ** len(nz)
    p = {"greater": Fraction(ge, total), "less": Fraction(le, total)}
    p["two-sided"] = min(Fraction(1), 2 * min(p["greater"], p["less"]))
    return p[alternative]


FIXTURES = [
    [1, 2, 3, 4, 5],
    [-1, 2, -3, 4, 5, 6],
    [0.5, -0.5, 1, 1, -2, 3, 0],
    [1, 1, 1, -1, 2, 2, -3, 4],
    [3, -1, 4, -1, 5, -9, 2, 6, -5],
    [0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 1.0],
    [1, -1, 1, -1, 1, -1, 1, -1, 2, 0],
    [-2],
]


@pytest.mark.parametrize("diffs", FIXTURES)
@pytest.mark.parametrize("alternative", ["two-sided", "greater", "less"])
def test_wilcoxon_exact_matches_sign_enumeration(diffs, alternative):
    res = wilcoxon_signed_rank(diffs, alternative)
    assert res.method == "exact"
    assert res.p_value == float(_brute_p(diffs, alternative))


def test_wilcoxon_all_positive_n5():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5], "greater")
    assert res.p_value == 1 / 32 and res.statistic == 15.0


def test_wilcoxon_degenerate():
    assert wilcoxon_signed_rank([0, 0, 0]) is None
    (row,) = wilcoxon_holm({"S": [0.0] * 24}, "C-A")
    assert (row.status, row.p_value, row.n_pairs) == (DEGENERATE, None, 24)


@pytest.mark.parametrize("seed", range(5))
def test_wilcoxon_agrees_with_scipy(seed):
    rng = random.Random(seed)
    # distinct magnitudes: the exact mode of scipy assumes no ties
    diffs = [d if rng.random() < 0.5 else -d for d in rng.sample(range(1, 41), 12)]
    ours = wilcoxon_signed_rank(diffs, "two-sided")
    theirs = scipy.stats.wilcoxon(diffs, alternative="two-sided", method="exact")
    assert ours.p_value == pytest.approx(theirs.pvalue, rel=1e-12)
    big = rng.sample(range(1, 200), 40)
    big = [d if rng.random() < 0.6 else -d for d in big]
    ours = wilcoxon_signed_rank(big, "greater")
    theirs = scipy.stats.wilcoxon(big, alternative="greater", method="approx", correction=False)
    assert ours.method == "normal"
    assert ours.p_value == pytest.approx(theirs.pvalue, rel=1e-9)


def test_holm():
    assert holm([0.03]) == [0.03]
    assert holm([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])
    assert holm([0.5, 0.6]) == [1.0, 1.0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_holm_never_below_raw(ps):
    adjusted = holm(ps)
    assert all(a >= p for a, p in zip(adjusted, ps))
    assert all(a <= 1.0 for a in adjusted)


def test_wilcoxon_holm_family():
    rows = wilcoxon_holm({"I": [1, 2, 3, 4, 5], "E": [1, -2, 3, -4, 5], "M": [0, 0]}, "C-A", "greater")
    by = {r.endpoint: r for r in rows}
    assert by["M"].status == DEGENERATE
    assert by["I"].adjusted_p == pytest.approx(2 * by["I"].p_value)
    assert by["E"].adjusted_p >= by["E"].p_value


# ---------------------------------------------------------------------------
# report


def test_empty_report_is_header_only(tmp_path):
    doc = write_report([], tmp_path)
    assert (tmp_path / "report.csv").read_text() == "condition,budget,metric,value,denominator\n"
    assert (tmp_path / "curves.csv").read_text() == "condition,budget,S,auc\n"
    assert doc["counts"] == {"total": 0, "scored": 0, "excluded": 0}


def test_report_rows_per_metric():
    lines = metrics_csv(compute_metrics(TEN)).splitlines()
    assert lines[0] == "condition,budget,metric,value,denominator"
    assert "A,5,S,0.5555555555555556,9" in lines
    assert "A,5,R,0.5,4" in lines


def _fixture_runs(pack, contracts):
    return run_matrix(pack, (3, 8), ("A", "C"), (0,), scripted_agents()["recoverer"], contracts)


def test_golden_report(pack, contracts, tmp_path):
    runs = _fixture_runs(pack, contracts)
    write_report(runs, tmp_path, DEFAULT_TOKENIZER.name, resamples=1000, rng_seed=0)
    golden = json.loads((GOLDEN / "report_digests.json").read_text())
    got = {name: hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() for name in sorted(golden)}
    assert got == golden


def test_report_counts_and_exclusions(pack, contracts):
    runs = _fixture_runs(pack, contracts)
    runs[0].status, runs[0].exclusion_reason, runs[0].success = "excluded", "agent_timeout", None
    doc = build_report(runs, resamples=1000)
    assert doc["counts"] == {"total": 32, "scored": 31, "excluded": 1}
    assert doc["exclusions"] == [{"reason": "agent_timeout", "family": runs[0].family, "count": 1}]
