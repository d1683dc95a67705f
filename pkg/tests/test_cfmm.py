import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from fxamm import (
    CfmmRule, PoolState, RuleKind, Side, apply_fill, invariant_residual, marginal_rate,
    quote_exact_in, quote_exact_out, solve_counterparty_balance,
)
from fxamm.errors import DomainError, InconsistencyError, InsufficientLiquidityError

import oracles

# High-precision root of the mixed invariant (alpha=5, s=1, Sigma0=2, Pi0=1) at x=0.9,
# computed with 40-digit arithmetic.
MIXED_Y_AT_09 = 1.1029571332051012


def pool(kind="product", alpha=0.0, s=1.0, x0=1.0, y0=1.0, fee=0.0):
    return PoolState.create(x0, y0, CfmmRule(RuleKind(kind), alpha, s), fee)


balances = st.floats(0.05, 20.0)
rates = st.floats(0.2, 5.0)
alphas = st.floats(0.0, 100.0)
fractions = st.floats(1e-4, 0.5)
rules = st.sampled_from(["sum", "product", "mixed"])


# --- residual and counterparty balance ----------------------------------------

def test_residual_on_constructed_points():
    assert invariant_residual(CfmmRule.sum(1.25), 22500.0, 0.0, 12500.0, 8000.0) == 0.0
    assert invariant_residual(CfmmRule.product(), 2.0, 1.0, 1.0, 1.0) == 0.0
    r = invariant_residual(CfmmRule.mixed(5.0), 2.0, 1.0, 0.9, 1.10296)
    assert abs(r) < 1e-5


def test_residual_rejects_nonpositive_balances():
    with pytest.raises(DomainError):
        invariant_residual(CfmmRule.product(), 2.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        invariant_residual(CfmmRule.mixed(1.0), 2.0, 1.0, 1.0, -1.0)


def test_counterparty_examples():
    assert solve_counterparty_balance(CfmmRule.product(), 2.0, 1.0, x=0.5) == pytest.approx(2.0, rel=1e-15)
    y0 = solve_counterparty_balance(CfmmRule.mixed(0.0), 2.0, 1.0, x=0.8)
    assert y0 == solve_counterparty_balance(CfmmRule.product(), 2.0, 1.0, x=0.8)
    assert y0 == pytest.approx(1.25, rel=1e-15)
    y = solve_counterparty_balance(CfmmRule.mixed(5.0), 2.0, 1.0, x=0.9)
    assert y == pytest.approx(MIXED_Y_AT_09, rel=1e-14)
    assert abs(invariant_residual(CfmmRule.mixed(5.0), 2.0, 1.0, 0.9, y)) < 1e-9


def test_counterparty_domain_errors():
    with pytest.raises(DomainError):
        solve_counterparty_balance(CfmmRule.sum(), 2.0, 1.0, x=2.0)
    with pytest.raises(DomainError):
        solve_counterparty_balance(CfmmRule.product(), 2.0, 1.0, y=0.0)
    with pytest.raises(TypeError):
        solve_counterparty_balance(CfmmRule.product(), 2.0, 1.0, x=1.0, y=1.0)


@settings(max_examples=300, deadline=None)
@given(kind=rules, alpha=alphas, s=rates, x0=balances, y0=balances, frac=st.floats(0.01, 0.99))
def test_counterparty_matches_bisection(kind, alpha, s, x0, y0, frac):
    p = pool(kind, alpha, s, x0, y0)
    x = frac * (p.sigma0 if kind == "sum" else x0 * 3.0)
    y = solve_counterparty_balance(p.rule, p.sigma0, p.pi0, x=x)
    ref = oracles.y_given_x(kind, alpha, s, p.sigma0, p.pi0, x)
    assert y == pytest.approx(ref, rel=1e-11)
    x_back = solve_counterparty_balance(p.rule, p.sigma0, p.pi0, y=y)
    assert x_back == pytest.approx(x, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(alpha=alphas, s=rates, x0=balances, y0=balances, frac=st.floats(0.05, 3.0))
def test_mixed_symmetry_under_token_swap(alpha, s, x0, y0, frac):
    # swapping the roles of x and s*y leaves the mixed residual unchanged
    p = pool("mixed", alpha, s, x0, y0)
    x, y = frac * x0, y0 / frac
    a = invariant_residual(p.rule, p.sigma0, p.pi0, x, y)
    b = invariant_residual(p.rule, p.sigma0, p.pi0, s * y, x / s)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12 * (1.0 + alpha))


# --- quoting --------------------------------------------------------------------

def test_sum_exact_out_examples():
    p = pool("sum", s=1.25, x0=12500.0, y0=10000.0)
    assert quote_exact_out(p, Side.REDEEM_DOMESTIC, 1.25).amount_in == pytest.approx(1.0, rel=1e-14)
    pf = pool("sum", s=1.25, x0=12500.0, y0=10000.0, fee=1e-4)
    fill = quote_exact_out(pf, Side.REDEEM_DOMESTIC, 1.25)
    assert fill.amount_in == pytest.approx(1.000100010001, rel=1e-12)
    assert fill.fee_paid == 1e-4 * fill.amount_in


def test_product_exact_out_and_in_examples():
    p = pool("product")
    assert quote_exact_out(p, Side.REDEEM_DOMESTIC, 0.5).amount_in == pytest.approx(1.0, rel=1e-15)
    assert quote_exact_in(p, Side.REDEEM_DOMESTIC, 1.0).amount_out == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("size", [1.0, 10.0, 50.0, 100.0])
def test_sum_quotes_are_flat(size):
    p = pool("sum", s=1.25, x0=12500.0, y0=10000.0, fee=1e-4)
    bid = quote_exact_in(p, Side.REDEEM_DOMESTIC, size)
    ask = quote_exact_out(p, Side.REDEEM_FOREIGN, size)
    assert bid.amount_out / size == pytest.approx(1.249875, rel=1e-12)
    assert ask.amount_in / size == pytest.approx(1.25 / 0.9999, rel=1e-12)
    assert round(ask.amount_in / size, 6) == 1.250125


def test_fill_rate_is_domestic_per_foreign():
    p = pool("product", x0=2.0, y0=1.0, s=1.0)
    f = quote_exact_in(p, Side.REDEEM_DOMESTIC, 0.01)
    assert f.rate == f.amount_out / f.amount_in
    g = quote_exact_in(p, Side.REDEEM_FOREIGN, 0.01)
    assert g.rate == g.amount_in / g.amount_out
    assert f.rate < marginal_rate(p) < g.rate


def test_quote_errors():
    p = pool("product")
    for bad in (0.0, -1.0, math.inf):
        with pytest.raises(DomainError):
            quote_exact_out(p, Side.REDEEM_DOMESTIC, bad)
        with pytest.raises(DomainError):
            quote_exact_in(p, Side.REDEEM_FOREIGN, bad)
    with pytest.raises(InsufficientLiquidityError):
        quote_exact_out(p, Side.REDEEM_FOREIGN, 1.0)
    with pytest.raises(InsufficientLiquidityError):
        quote_exact_in(pool("sum"), Side.REDEEM_DOMESTIC, 1.0)


def test_exact_out_from_state_above_curve_is_inconsistent():
    p = pool("product")
    off = PoolState(1.5, 1.5, p.sigma0, p.pi0, 0.0, p.rule)
    with pytest.raises(InconsistencyError):
        quote_exact_out(off, Side.REDEEM_DOMESTIC, 0.1)


@settings(max_examples=300, deadline=None)
@given(kind=rules, alpha=alphas, s=rates, x0=balances, y0=balances, frac=fractions,
       fee=st.floats(1e-6, 0.05), side=st.sampled_from(list(Side)))
def test_fee_monotonicity(kind, alpha, s, x0, y0, frac, fee, side):
    free, paid = pool(kind, alpha, s, x0, y0), pool(kind, alpha, s, x0, y0, fee)
    out_balance = x0 if side is Side.REDEEM_DOMESTIC else y0
    size = frac * out_balance
    assert quote_exact_out(paid, side, size).amount_in > quote_exact_out(free, side, size).amount_in
    if kind == "sum":  # deposit worth a fraction of the outgoing balance
        deposit = frac * (x0 / s if side is Side.REDEEM_DOMESTIC else s * y0)
    else:
        deposit = frac * (y0 if side is Side.REDEEM_DOMESTIC else x0)
    assert quote_exact_in(paid, side, deposit).amount_out < quote_exact_in(free, side, deposit).amount_out


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(["product", "mixed"]), alpha=alphas, s=rates, x0=balances, y0=balances,
       a=fractions, b=fractions, fee=st.floats(0.0, 0.01))
def test_exact_in_rate_worsens_with_size(kind, alpha, s, x0, y0, a, b, fee):
    assume(abs(a - b) > 1e-3)
    p = pool(kind, alpha, s, x0, y0, fee)
    small, large = sorted((a, b))
    r_small = quote_exact_in(p, Side.REDEEM_DOMESTIC, small * y0).rate
    r_large = quote_exact_in(p, Side.REDEEM_DOMESTIC, large * y0).rate
    assert r_large < r_small


@settings(max_examples=200, deadline=None)
@given(s=rates, x0=balances, y0=balances, frac=fractions)
def test_product_zero_fee_round_trip(s, x0, y0, frac):
    p = pool("product", s=s, x0=x0, y0=y0)
    dy = frac * y0
    f1 = quote_exact_in(p, Side.REDEEM_DOMESTIC, dy)
    p1 = apply_fill(p, f1)
    f2 = quote_exact_in(p1, Side.REDEEM_FOREIGN, f1.amount_out)
    assert f2.amount_out == pytest.approx(dy, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(s=rates, x0=balances, y0=balances, frac=fractions, side=st.sampled_from(list(Side)))
def test_mixed_alpha_zero_is_bitwise_product(s, x0, y0, frac, side):
    pm, pp = pool("mixed", 0.0, s, x0, y0, 1e-4), pool("product", 0.0, s, x0, y0, 1e-4)
    size = frac * (x0 if side is Side.REDEEM_DOMESTIC else y0)
    assert quote_exact_out(pm, side, size) == quote_exact_out(pp, side, size)
    assert quote_exact_in(pm, side, size) == quote_exact_in(pp, side, size)


# --- apply_fill and curve preservation ------------------------------------------

def test_apply_none_is_identity():
    p = pool("mixed", 5.0)
    assert apply_fill(p, None) is p


@settings(max_examples=200, deadline=None)
@given(kind=rules, alpha=alphas, s=rates, x0=balances, y0=balances, fee=st.floats(0.0, 0.01),
       trades=st.lists(st.tuples(st.sampled_from(list(Side)), st.booleans(), st.floats(1e-3, 0.3)),
                       min_size=1, max_size=12))
def test_fills_stay_on_curve_and_keep_constants(kind, alpha, s, x0, y0, fee, trades):
    p = pool(kind, alpha, s, x0, y0, fee)
    sigma0, pi0 = p.sigma0, p.pi0
    for side, exact_out, frac in trades:
        if exact_out:
            bal = p.x if side is Side.REDEEM_DOMESTIC else p.y
            fill = quote_exact_out(p, side, frac * bal)
        else:
            bal = p.y if side is Side.REDEEM_DOMESTIC else p.x
            try:
                fill = quote_exact_in(p, side, frac * bal)
            except InsufficientLiquidityError:
                continue
        assert fill.fee_paid == fee * fill.amount_in
        p = apply_fill(p, fill)
        assert (p.sigma0, p.pi0, p.fee, p.rule) == (sigma0, pi0, fee, pool(kind, alpha, s).rule)
        assert p.x > 0 and p.y > 0
    scale = {"sum": max(1.0, sigma0), "product": max(1.0, pi0), "mixed": 1.0 + alpha}[kind]
    assert abs(invariant_residual(p.rule, sigma0, pi0, p.x, p.y)) < 1e-9 * scale


def test_fee_is_paid_out_not_left_in_pool():
    p = pool("product", fee=1e-3)
    p1 = apply_fill(p, quote_exact_in(p, Side.REDEEM_DOMESTIC, 0.2))
    assert p1.rule.s * p1.x * p1.y == pytest.approx(p.pi0, rel=1e-14)


def test_pool_validation():
    with pytest.raises(DomainError):
        pool("product", x0=0.0)
    with pytest.raises(InconsistencyError):
        PoolState(0.0, 1.0, 2.0, 1.0, 0.0, CfmmRule.product())
    with pytest.raises(DomainError):
        pool("product", fee=1.0)
    with pytest.raises(DomainError):
        CfmmRule.mixed(-1.0)
    with pytest.raises(DomainError):
        CfmmRule.sum(0.0)


# --- marginal rate ----------------------------------------------------------------

def test_marginal_rate_examples():
    assert marginal_rate(pool("product")) == 1.0
    assert marginal_rate(pool("product", x0=2.0, y0=1.0)) == 2.0
    assert marginal_rate(pool("sum", s=1.25, x0=3.0, y0=7.0)) == 1.25


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(["product", "mixed"]), alpha=alphas, s=rates, x0=balances, y0=balances)
def test_marginal_rate_matches_finite_difference(kind, alpha, s, x0, y0):
    p = pool(kind, alpha, s, x0, y0)
    h = 1e-6 * y0
    xa = oracles.x_given_y(kind, alpha, s, p.sigma0, p.pi0, y0 - h)
    xb = oracles.x_given_y(kind, alpha, s, p.sigma0, p.pi0, y0 + h)
    assert marginal_rate(p) == pytest.approx((xa - xb) / (2 * h), rel=1e-6)


def test_mixed_marginal_rate_between_product_and_sum():
    # off-balance pool: product rate is x/y, sum rate is s; mixed lies between
    for alpha in (0.5, 5.0, 50.0):
        p = pool("mixed", alpha, x0=1.0, y0=1.0)
        moved = apply_fill(p, quote_exact_in(p, Side.REDEEM_DOMESTIC, 0.3))
        prod_rate = moved.x / moved.y
        assert prod_rate < marginal_rate(moved) < 1.0
