import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioptx.env import EpisodeLog, NeedleRecord, StepResult, Observation
from bioptx.metrics import (EpisodeMetrics, aggregate, ccl_summary,
                            episode_metrics, hit_rate, needle_area,
                            two_sample_ttest)


def fake_log(ccls, positions=None):
    """EpisodeLog with the given per-needle CCLs (hit iff ccl > 0)."""
    positions = positions or [(5.0 * k, 10.0) for k in range(len(ccls))]
    log = EpisodeLog("case", (6, 6), (0.0, 0.0, 0.0))
    for t, (c, (x, y)) in enumerate(zip(ccls, positions)):
        n = NeedleRecord(int(round(x / 5)) + 6, int(round(y / 5)), x, y,
                         45.0, 20.0, c > 0, c, t)
        obs = Observation(np.zeros((2, 4, 4), dtype=np.uint8), (0.5, 0.5), (6, 6))
        log.steps.append(StepResult(obs, 5.0 if c > 0 else 0.0, False,
                                    {"needle": n, "dist_mm": 1.0, "hit": c > 0,
                                     "outside_prostate": False,
                                     "ccl_mm": c, "termination_reason": None}))
    return log


# -- hit rate ------------------------------------------------------------------

def test_hit_rate_examples():
    assert hit_rate(fake_log([1.0, 2.0, 3.0, 0.0, 0.0])) == 60.0
    assert hit_rate(fake_log([1.0] * 5)) == 100.0
    assert hit_rate(fake_log([0.0] * 15)) == 0.0


def test_hit_rate_no_needles():
    with pytest.raises(ValueError, match="no needles"):
        hit_rate(fake_log([]))


# -- CCL -----------------------------------------------------------------------

def test_ccl_summary_mean_of_positives():
    ccls, episode = ccl_summary(fake_log([8.0, 0.0, 4.0]))
    assert ccls == [8.0, 0.0, 4.0]
    assert episode == 6.0


def test_ccl_summary_all_misses():
    _, episode = ccl_summary(fake_log([0.0, 0.0]))
    assert episode == 0.0
    m = episode_metrics(fake_log([0.0, 0.0]))
    assert not m.significant


def test_ccl_significance_flag():
    m = episode_metrics(fake_log([10.0, 0.0]))
    assert m.significant and m.ccl_max_mm == 10.0
    m2 = episode_metrics(fake_log([5.9, 3.0]))
    assert not m2.significant


# -- needle area ---------------------------------------------------------------

def test_na_single_position_zero():
    assert needle_area([(3.0, 4.0)] * 5) == 0.0
    assert needle_area([(3.0, 4.0)]) == 0.0


def test_na_hand_computed_case():
    pts = [(0, 0), (5, 0), (0, 5), (5, 5), (2.5, 2.5)]
    assert needle_area(pts) == pytest.approx(5 * math.pi, abs=1e-9)


def test_na_swap_symmetry():
    pts = [(0, 1), (2, 3), (5, 8)]
    swapped = [(y, x) for x, y in pts]
    assert needle_area(pts) == pytest.approx(needle_area(swapped))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(0, 60)),
                min_size=2, max_size=8),
       st.floats(0.1, 4.0), st.floats(-20, 20), st.floats(-20, 20))
def test_na_scale_and_translation_laws(pts, k, dx, dy):
    base = needle_area(pts)
    scaled = needle_area([(k * x, k * y) for x, y in pts])
    assert scaled == pytest.approx(k * k * base, rel=1e-9, abs=1e-9)
    shifted = needle_area([(x + dx, y + dy) for x, y in pts])
    assert shifted == pytest.approx(base, rel=1e-9, abs=1e-7)


# -- last-5 convention ---------------------------------------------------------

def test_last5_flag_restricts_hr_and_na():
    ccls = [0.0] * 10 + [5.0] * 5      # 15 needles, last five all hit
    log = fake_log(ccls, positions=[(0.0, 5.0 * t % 60) for t in range(10)]
                   + [(10.0, 30.0)] * 5)
    full = episode_metrics(log)
    last5 = episode_metrics(log, last5=True)
    assert full.hr_pct == pytest.approx(100 * 5 / 15)
    assert last5.hr_pct == 100.0
    assert last5.na_mm2 == 0.0
    assert full.needles_fired == last5.needles_fired == 15


# -- aggregation -----------------------------------------------------------------

def _metric(hr, ccl=5.0, na=10.0):
    return EpisodeMetrics(hr, [ccl], ccl, ccl, ccl >= 6, na, 5)


def test_aggregate_identical_sd_zero():
    agg = aggregate([_metric(50.0)] * 4)
    assert agg["hr_pct_mean"] == 50.0
    assert agg["hr_pct_sd"] == 0.0


def test_aggregate_two_point():
    agg = aggregate([_metric(40.0), _metric(60.0)])
    assert agg["hr_pct_mean"] == 50.0
    assert agg["hr_pct_sd"] == pytest.approx(math.sqrt(200.0), abs=1e-9)


def test_aggregate_matches_recompute(rng):
    mets = [_metric(float(rng.uniform(0, 100)), float(rng.uniform(0, 12)),
                    float(rng.uniform(0, 80))) for _ in range(30)]
    agg = aggregate(mets)
    for key, attr in (("ccl_mm", "ccl_mm"), ("hr_pct", "hr_pct"),
                      ("na_mm2", "na_mm2")):
        vals = [getattr(m, attr) for m in mets]
        assert agg[key + "_mean"] == pytest.approx(np.mean(vals))
        assert agg[key + "_sd"] == pytest.approx(np.std(vals, ddof=1))


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


# -- t-test ----------------------------------------------------------------------

def test_ttest_identical_samples():
    t, df, p, degenerate = two_sample_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert t == 0.0 and p == 1.0 and not degenerate
    assert df == 4


def test_ttest_hand_computed():
    t, df, p, _ = two_sample_ttest([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t == pytest.approx(-1.0, abs=1e-12)
    assert df == 8
    assert p == pytest.approx(0.3466, abs=1e-3)


def test_ttest_symmetry():
    a = [1.0, 4.0, 2.0, 8.0]
    b = [3.0, 3.5, 6.0, 1.0, 2.0]
    ra = two_sample_ttest(a, b)
    rb = two_sample_ttest(b, a)
    assert ra.t == pytest.approx(-rb.t)
    assert ra.p == pytest.approx(rb.p)


def test_ttest_degenerate_zero_variance():
    r = two_sample_ttest([2.0, 2.0, 2.0], [5.0, 5.0])
    assert r.degenerate and r.p == 0.0 and r.t == -math.inf
    r2 = two_sample_ttest([2.0, 2.0], [2.0, 2.0])
    assert r2.t == 0.0 and r2.p == 1.0 and not r2.degenerate


def test_ttest_requires_two_samples():
    with pytest.raises(ValueError):
        two_sample_ttest([1.0], [1.0, 2.0])


def test_ttest_null_calibration_small(rng):
    # ~5% rejections under the null; full 1000-trial version in acceptance
    rejections = 0
    trials = 400
    for _ in range(trials):
        a = rng.normal(0, 1, 12)
        b = rng.normal(0, 1, 12)
        if two_sample_ttest(a, b).p < 0.05:
            rejections += 1
    assert rejections / trials == pytest.approx(0.05, abs=0.03)


# -- HR/CCL consistency over real logs -------------------------------------------

def test_hr_ccl_consistency(case04, rng):
    from bioptx.env import BiopsyEnv, EnvConfig
    env = BiopsyEnv(case04, EnvConfig(seed=2))
    for _ in range(8):
        env.reset()
        while not env.terminated:
            env.step(rng.uniform(-15, 15, 2))
        if not env.log.needles:
            continue
        m = episode_metrics(env.log)
        assert (m.hr_pct > 0) == any(c > 0 for c in m.ccl_per_needle)