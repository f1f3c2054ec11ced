"""Biopsy performance metrics (hit rate, cancer core length, needle area),
cohort aggregation, and the pooled-variance two-sample t-test.

All metrics are computed against the ground-truth lesion; per-needle CCLs
come straight from the environment's needle records.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

from .env import EpisodeLog

CCL_SIGNIFICANT_MM = 6.0


@dataclass
class EpisodeMetrics:
    hr_pct: float
    ccl_per_needle: list[float]
    ccl_mm: float                 # mean over positive cores, 0 if none
    ccl_max_mm: float
    significant: bool             # max CCL >= 6mm
    na_mm2: float
    needles_fired: int
    lesion_volume_cc: float | None = None
    total_reward: float | None = None


def hit_rate(log: EpisodeLog) -> float:
    """Percent of fired needles whose core sampled the target."""
    needles = log.needles
    if not needles:
        raise ValueError("no needles fired")
    return 100.0 * sum(1 for n in needles if n.hit) / len(needles)


def ccl_summary(log: EpisodeLog) -> tuple[list[float], float]:
    """(per-needle CCLs, episode CCL = mean over positive cores; 0 if none)."""
    ccls = [n.ccl_mm for n in log.needles]
    positive = [c for c in ccls if c > 0]
    return ccls, (float(np.mean(positive)) if positive else 0.0)


def needle_area(positions) -> float:
    """pi * std_x * std_y over fired template-plane positions (population SD)."""
    pts = np.asarray(positions, dtype=float)
    if pts.size == 0:
        raise ValueError("no needle positions")
    if pts.ndim == 1:
        pts = pts[None, :]
    return float(np.pi * pts[:, 0].std() * pts[:, 1].std())


def episode_metrics(log: EpisodeLog, lesion_volume_cc: float | None = None,
                    last5: bool = False) -> EpisodeMetrics:
    """Metrics for one episode. With ``last5``, HR and NA use only the final
    five fired needles (CCL summaries keep all cores)."""
    needles = log.needles
    if not needles:
        raise ValueError("no needles fired")
    ccls, ccl_mean = ccl_summary(log)
    scored = needles[-5:] if last5 else needles
    hr = 100.0 * sum(1 for n in scored if n.hit) / len(scored)
    na = needle_area([(n.x_mm, n.y_mm) for n in scored])
    return EpisodeMetrics(
        hr_pct=hr,
        ccl_per_needle=ccls,
        ccl_mm=ccl_mean,
        ccl_max_mm=max(ccls),
        significant=max(ccls) >= CCL_SIGNIFICANT_MM,
        na_mm2=na,
        needles_fired=len(needles),
        lesion_volume_cc=lesion_volume_cc,
        total_reward=log.total_reward,
    )


def aggregate(cohort: list[EpisodeMetrics]) -> dict:
    """Sample mean ± sample SD of CCL/HR/NA over a cohort of episodes."""
    if not cohort:
        raise ValueError("empty cohort")
    out = {"n": len(cohort)}
    for key in ("ccl_mm", "hr_pct", "na_mm2"):
        vals = np.asarray([getattr(m, key) for m in cohort], dtype=float)
        out[key + "_mean"] = float(vals.mean())
        out[key + "_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return out


class TTestResult(NamedTuple):
    t: float
    df: int
    p: float
    degenerate: bool = False


def two_sample_ttest(a, b) -> TTestResult:
    """Pooled-variance two-sample t with two-sided p from the regularized
    incomplete beta. Zero pooled variance: equal means give (0, df, 1),
    unequal means are flagged degenerate with p -> 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("need at least 2 samples per group")
    df = na + nb - 2
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / df
    diff = a.mean() - b.mean()
    if pooled == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, df, 1.0)
        return TTestResult(math.copysign(math.inf, diff), df, 0.0, degenerate=True)
    t = diff / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(float(t), df, p)


# ---------------------------------------------------------------------------
# Table emitters: one row per (strategy, bias, sd) plus the agent row, values
# formatted "mean±sd" like the summary-table layout.

TABLE_COLUMNS = ("CCL(mm)", "HR(%)", "NA(mm2)")


def _fmt(mean: float, sd: float) -> str:
    return f"{mean:.2f}±{sd:.2f}"


def table_rows(results: list[dict]) -> list[dict]:
    """``results`` entries: {strategy, bias, sd, aggregate-dict}."""
    rows = []
    for r in results:
        agg = r["aggregate"]
        rows.append({
            "strategy": r["strategy"],
            "bias": r.get("bias", ""),
            "sd": r.get("sd", ""),
            "CCL(mm)": _fmt(agg["ccl_mm_mean"], agg["ccl_mm_sd"]),
            "HR(%)": _fmt(agg["hr_pct_mean"], agg["hr_pct_sd"]),
            "NA(mm2)": _fmt(agg["na_mm2_mean"], agg["na_mm2_sd"]),
            "n": agg["n"],
        })
    return rows


def write_table_csv(rows: list[dict], path):
    fields = ["strategy", "bias", "sd", *TABLE_COLUMNS, "n"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in fields})


def write_table_json(results: list[dict], path):
    with open(path, "w") as f:
        json.dump(results, f, indent=2, sort_keys=True)
        f.write("\n")
