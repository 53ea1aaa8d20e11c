"""Bootstrap intervals, exact Wilcoxon signed-rank, Holm adjustment, AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

EXACT_MAX_N = 25
DEGENERATE = "degenerate: no nonzero pairs"


@dataclass(frozen=True)
class BootstrapCI:
    mean: float
    lo: float
    hi: float
    half_width: float
    level: float
    resamples: int
    n_tasks: int


def bootstrap_ci(
    values_by_task: Union[Mapping[str, Sequence[float]], Sequence[Sequence[float]]],
    resamples: int = 10_000,
    rng_seed: int = 0,
    level: float = 0.95,
) -> BootstrapCI:
    """Percentile bootstrap of the mean over tasks, resampling tasks not runs.

    Each task contributes the mean of its values; resamples draw tasks with
    replacement. Quantiles use the inverted-CDF definition, so endpoints are
    always attained resample means.
    """
    groups = list(values_by_task.values()) if isinstance(values_by_task, Mapping) else list(values_by_task)
    if not groups or any(len(g) == 0 for g in groups):
        raise ValueError("bootstrap needs at least one task, each with values")
    if resamples < 1000:
        raise ValueError("use at least 1000 resamples")
    task_means = np.array([float(np.mean(g)) for g in groups])
    n = len(task_means)
    rng = np.random.default_rng(rng_seed)
    idx = rng.integers(0, n, size=(resamples, n))
    boot = task_means[idx].mean(axis=1)
    alpha = (1.0 - level) / 2
    lo, hi = np.quantile(boot, [alpha, 1.0 - alpha], method="inverted_cdf")
    return BootstrapCI(float(task_means.mean()), float(lo), float(hi), float(hi - lo) / 2, level, resamples, n)


def _ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties given their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@dataclass(frozen=True)
class SignedRankResult:
    statistic: float  # W+, sum of ranks of positive differences
    p_value: float
    n: int  # nonzero pairs used
    method: str  # exact | normal


def wilcoxon_signed_rank(diffs: Sequence[float], alternative: str = "two-sided") -> Optional[SignedRankResult]:
    """Signed-rank test; ``None`` when every difference is zero.

    Zero differences are dropped first. Up to 25 pairs the null
    distribution of W+ is computed exactly by counting sign patterns
    (ties keep their average ranks); above that a normal approximation
    with tie-corrected variance is used.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    nz = [float(d) for d in diffs if d != 0]
    n = len(nz)
    if n == 0:
        return None
    ranks = _ranks([abs(d) for d in nz])
    w_plus = float(sum(r for r, d in zip(ranks, nz) if d > 0))
    if n <= EXACT_MAX_N:
        # doubled ranks are integers even with ties
        twice = [int(round(2 * r)) for r in ranks]
        total = sum(twice)
        counts = [0] * (total + 1)
        counts[0] = 1
        for r in twice:
            for s in range(total, r - 1, -1):
                counts[s] += counts[s - r]
        w2 = int(round(2 * w_plus))
        space = 2**n
        p_greater = sum(counts[w2:]) / space
        p_less = sum(counts[: w2 + 1]) / space
        method = "exact"
    else:
        mean = n * (n + 1) / 4
        tie_sizes: dict[float, int] = {}
        for r in ranks:
            tie_sizes[r] = tie_sizes.get(r, 0) + 1
        var = n * (n + 1) * (2 * n + 1) / 24 - sum(t**3 - t for t in tie_sizes.values()) / 48
        z = (w_plus - mean) / math.sqrt(var)
        p_greater = 0.5 * math.erfc(z / math.sqrt(2))
        p_less = 0.5 * math.erfc(-z / math.sqrt(2))
        method = "normal"
    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = p_less
    else:
        p = min(1.0, 2 * min(p_greater, p_less))
    return SignedRankResult(w_plus, p, n, method)


def holm(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values, in input order."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[i]))
        adjusted[i] = running
    return adjusted


@dataclass(frozen=True)
class PairedTestResult:
    endpoint: str
    contrast: str
    statistic: Optional[float]
    p_value: Optional[float]
    adjusted_p: Optional[float]
    n_pairs: int
    status: str  # ok | degenerate message

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "contrast": self.contrast,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "adjusted_p": self.adjusted_p,
            "n_pairs": self.n_pairs,
            "status": self.status,
        }


def wilcoxon_holm(
    diffs_by_endpoint: Mapping[str, Sequence[float]], contrast: str, alternative: str = "two-sided"
) -> list[PairedTestResult]:
    """Signed-rank test per endpoint, Holm-adjusted across the endpoints given.

    Pass one endpoint alone to leave it unadjusted. Degenerate endpoints
    (no nonzero pair) report no p-value and do not count towards the family.
    """
    rows = []
    for endpoint, diffs in diffs_by_endpoint.items():
        if len(diffs) == 0:
            raise ValueError(f"endpoint {endpoint!r} has no pairs")
        rows.append((endpoint, len(diffs), wilcoxon_signed_rank(diffs, alternative)))
    live = [r for r in rows if r[2] is not None]
    adjusted = dict(zip((r[0] for r in live), holm([r[2].p_value for r in live])))
    out = []
    for endpoint, n_pairs, res in rows:
        if res is None:
            out.append(PairedTestResult(endpoint, contrast, None, None, None, n_pairs, DEGENERATE))
        else:
            out.append(PairedTestResult(endpoint, contrast, res.statistic, res.p_value, adjusted[endpoint], n_pairs, "ok"))
    return out


def normalized_auc(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under S(B), divided by the budget span."""
    pts = sorted(points)
    if len({b for b, _ in pts}) < 2:
        raise ValueError("need at least two distinct budgets")
    area = sum((b1 - b0) * (s0 + s1) / 2 for (b0, s0), (b1, s1) in zip(pts, pts[1:]))
    return area / (pts[-1][0] - pts[0][0])
