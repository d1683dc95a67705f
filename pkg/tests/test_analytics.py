import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fxamm import CfmmRule, SimConfig, run_batch
from fxamm.analytics import (
    DIST_COLUMNS, KEY_VARIABLES, REGRESSION_COLUMNS, SESSION_COLUMNS, annualize, dist_rows, dist_stats, ols,
    regress_pnl, regression_rows, session_rows, summarize, successes, sweep, volume_variance, write_table,
)
from fxamm.errors import RankDeficiencyError
from fxamm.market_data import SynthConfig, synth_sessions
from fxamm.simulator import SessionFailure, SessionResult


def result(**kw):
    base = dict(spread_bp=1.0, arb_pnl=0.0, fees=0.0, lp_pnl=0.0, lp_pnl_hedged=0.0, x_final=1.0,
                y_final=1.0, x0=1.0, y0=1.0, p0=1.0, p_final=1.0)
    base.update(kw)
    return SessionResult(**base)


@pytest.fixture(scope="module")
def sessions():
    return synth_sessions(SynthConfig(n_sessions=40, seed=21))


# --- annualization ---------------------------------------------------------------

def test_annualize_scales_pnl_only():
    (k,) = annualize([result(spread_bp=2.5, lp_pnl=0.001, arb_pnl=0.002, lp_pnl_hedged=-0.001, fees=1e-4)])
    assert k.spread_bp == 2.5
    assert k.lp_pnl_annual == 260 * 0.001
    assert k.lp_pnl_annual == pytest.approx(0.26, rel=1e-15)
    assert (k.arb_pnl_annual, k.lp_pnl_hedged_annual, k.fees_annual) == (260 * 0.002, 260 * -0.001, 260 * 1e-4)


def test_annualize_zero_and_count():
    zero = annualize([result(spread_bp=0.0)])[0]
    assert all(getattr(zero, v) == 0.0 for v in KEY_VARIABLES)
    assert len(annualize([result()] * 780)) == 780
    with pytest.raises(ValueError):
        annualize([])


# --- distribution statistics ------------------------------------------------------

def naive_quantile(values, q):
    a = sorted(values)
    pos = q * (len(a) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(a) - 1)
    return a[lo] + (a[hi] - a[lo]) * (pos - lo)


def test_dist_stats_by_hand():
    d = dist_stats([1.0, 2.0, 3.0])
    assert (d.median, d.mad, d.quartiles, d.count) == (2.0, 1.0, (1.5, 2.0, 2.5), 3)
    assert dist_stats([4.0] * 7).mad == 0.0
    with pytest.raises(ValueError):
        dist_stats([])


def test_whiskers_clip_outliers():
    d = dist_stats([1, 2, 3, 4, 5, 6, 7, 8, 100])
    assert d.whiskers == (1.0, 8.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.randoms())
def test_dist_stats_matches_sort_oracle(values, rnd):
    d = dist_stats(values)
    q1, q2, q3 = (naive_quantile(values, q) for q in (0.25, 0.5, 0.75))
    assert d.quartiles == pytest.approx((q1, q2, q3), rel=1e-12, abs=1e-9)
    assert d.median == d.q2
    assert d.mad == pytest.approx(naive_quantile([abs(v - q2) for v in values], 0.5), rel=1e-12, abs=1e-9)
    iqr = q3 - q1
    inside = [v for v in values if q1 - 1.5 * iqr - 1e-9 <= v <= q3 + 1.5 * iqr + 1e-9]
    assert d.whiskers == pytest.approx((min(inside), max(inside)))
    assert d.q1 <= d.median <= d.q3 and d.mad >= 0
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert dist_stats(shuffled) == d


# --- sweeps --------------------------------------------------------------------------

def test_alpha_zero_cell_equals_product_batch(sessions):
    (cell,) = sweep(sessions[:10], SimConfig(), "alpha", [0.0])
    direct = annualize(successes(run_batch(sessions[:10], SimConfig(rule=CfmmRule.product()))))
    assert list(cell.keys) == direct
    assert cell.stats == summarize(direct)


def test_fee_sweep_raises_median_fees(sessions):
    cells = sweep(sessions[:15], SimConfig(), "fee", [0.0, 1e-4, 5e-4])
    medians = [c.stats["fees_annual"].median for c in cells]
    assert medians[0] == 0.0 and medians[0] < medians[1] < medians[2]


def test_liquidity_sweep_lowers_median_spread(sessions):
    cells = sweep(sessions[:15], SimConfig(), "liquidity_multiple", [1.0, 2.0, 4.0])
    medians = [c.stats["spread_bp"].median for c in cells]
    assert medians[0] > medians[1] > medians[2]


def test_alpha_sweep_orders_spreads(sessions):
    cells = sweep(sessions[:10], SimConfig(), "alpha", [0.0, 1.0, 5.0, 25.0, 100.0])
    medians = [c.stats["spread_bp"].median for c in cells]
    assert medians == sorted(medians, reverse=True)


def test_sweep_rejects_bad_axis(sessions):
    with pytest.raises(ValueError):
        sweep(sessions[:1], SimConfig(), "gamma", [1.0])
    with pytest.raises(ValueError):
        sweep(sessions[:1], SimConfig(), "fee", [])


# --- regression --------------------------------------------------------------------

def test_ols_recovers_exact_linear_relation():
    rng = np.random.default_rng(0)
    regs = rng.normal(size=(50, 2))
    y = 0.3 + 1.7 * regs[:, 0] - 0.4 * regs[:, 1]
    coef, r2, resid = ols(y, regs)
    assert coef == pytest.approx([0.3, 1.7, -0.4], abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    assert np.abs(resid).max() < 1e-12


def test_ols_residuals_orthogonal_to_regressors():
    rng = np.random.default_rng(1)
    regs = rng.normal(size=(200, 2))
    y = regs @ [0.5, 2.0] + rng.normal(size=200)
    _, r2, resid = ols(y, regs)
    assert 0.0 <= r2 <= 1.0
    assert abs(resid @ regs[:, 0]) < 1e-8 and abs(resid @ regs[:, 1]) < 1e-8 and abs(resid.sum()) < 1e-8


def test_ols_rank_deficiency():
    with pytest.raises(RankDeficiencyError):
        ols(np.arange(5.0), np.column_stack([np.arange(5.0), np.ones(5)]))
    with pytest.raises(RankDeficiencyError):
        ols(np.arange(5.0), np.column_stack([np.arange(5.0), 2 * np.arange(5.0)]))


def test_volume_variance_modes(sessions):
    s = sessions[0]
    vb, va = s.column("v_bid"), s.column("v_ask")
    assert volume_variance(s) == pytest.approx(np.var(vb - va))
    assert volume_variance(s, "sum") == pytest.approx(np.var(vb + va))
    assert volume_variance(s, "sides") == pytest.approx(np.var(vb) + np.var(va))
    with pytest.raises(ValueError):
        volume_variance(s, "ratio")


def test_regression_betas_on_synthetic_batch(sessions):
    results = successes(run_batch(sessions, SimConfig()))
    unhedged, hedged = regress_pnl(results, sessions)
    assert 0.8 <= unhedged.beta_return <= 1.3
    assert abs(hedged.beta_return) < 0.1
    assert unhedged.n == hedged.n == 40
    # the two fits differ by exactly the y0 * return term
    assert unhedged.beta_return - hedged.beta_return == pytest.approx(1.0, abs=1e-9)
    assert unhedged.beta_volvar == pytest.approx(hedged.beta_volvar, rel=1e-6)


# --- table export -----------------------------------------------------------------------

def test_tables_have_documented_headers(sessions):
    results = run_batch(sessions[:3], SimConfig())
    results[1] = SessionFailure(1, str(sessions[1].date), "boom")
    rows = session_rows(sessions[:3], results)
    buf = io.StringIO()
    write_table(rows, SESSION_COLUMNS, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "session,date,spread_bp,arb_pnl_annual_pct,lp_pnl_annual_pct,lp_pnl_hedged_annual_pct,fees_annual_pct,status"
    assert lines[2] == f"1,{sessions[1].date},,,,,,error: boom"
    assert lines[1].endswith(",ok")
    k = annualize([results[0]])[0]
    assert float(lines[1].split(",")[4]) == 100.0 * k.lp_pnl_annual

    cells = sweep(sessions[:3], SimConfig(), "alpha", [1.0])
    assert len(dist_rows(cells)) == len(KEY_VARIABLES)
    assert DIST_COLUMNS == ("axis", "value", "variable", "median", "mad", "q1", "q2", "q3",
                            "whisker_lo", "whisker_hi", "count")
    u, h = regress_pnl(successes(run_batch(sessions[:5], SimConfig())), sessions[:5])
    assert [r["pnl"] for r in regression_rows(u, h)] == ["lp_pnl", "lp_pnl_hedged"]
    assert REGRESSION_COLUMNS == ("pnl", "beta_return", "beta_volvar", "intercept", "r_squared", "n")
