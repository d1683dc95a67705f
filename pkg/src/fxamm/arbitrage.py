"""Optimal one-sided arbitrage between a pool and an external FX mid.

Two trades are possible.  ``BUY_DOMESTIC`` deposits foreign tokens and
redeems domestic ones (profitable when the pool pays more domestic per
foreign than the market); ``BUY_FOREIGN`` is the mirror image.  Profit is
measured in domestic units with the off-chain leg filled at ``fx_mid``.

The product rule has closed-form optima.  The mixed rule is solved with a
safeguarded Newton-Raphson iteration on the first-order condition, using
analytic derivatives of the invariant curve.  :func:`oracle_arb_grid` is a
brute-force cross-check that shares no code with either solver.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cfmm import Curve, PoolState, RuleKind
from .errors import ConvergenceError, DomainError


class Direction(str, enum.Enum):
    BUY_DOMESTIC = "buy_domestic"  # deposit foreign, redeem domestic
    BUY_FOREIGN = "buy_foreign"  # deposit domestic, redeem foreign
    NONE = "none"


@dataclass(frozen=True)
class ArbConfig:
    arb_fee: float = 0.0
    newton_tol: float = 1e-12
    max_iters: int = 50
    oracle_grid: int = 900_001

    def __post_init__(self):
        if not (0.0 <= self.arb_fee < 1.0):
            raise DomainError(f"arb_fee must lie in [0, 1), got {self.arb_fee}")
        if not self.newton_tol > 0.0:
            raise DomainError("newton_tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.oracle_grid < 2:
            raise DomainError("oracle_grid must be >= 2")


@dataclass(frozen=True)
class ArbSolution:
    direction: Direction
    trade_in: float = 0.0
    trade_out: float = 0.0
    profit: float = 0.0
    iterations: int = 0

    @classmethod
    def none(cls, iterations: int = 0) -> "ArbSolution":
        return cls(Direction.NONE, 0.0, 0.0, 0.0, iterations)


def _redeemed(curve: Curve, x: float, y: float, direction: Direction, credited: float) -> float:
    """Tokens leaving the pool when ``credited`` (net of fee) is deposited."""
    s = curve.s
    if direction is Direction.BUY_DOMESTIC:
        t = s * (y + credited)
        if curve.kind is RuleKind.SUM and t >= curve.sigma0:
            raise DomainError("constant-sum deposit would drain the domestic balance")
        return x - curve.other(t)
    t = x + credited
    if curve.kind is RuleKind.SUM and t >= curve.sigma0:
        raise DomainError("constant-sum deposit would drain the foreign balance")
    return y - curve.other(t) / s


def arb_profit(
    pool: PoolState, direction: Direction, trade_in: float, fx_mid: float, arb_fee: float
) -> float:
    """Arbitrage P&L in domestic units for depositing ``trade_in`` tokens."""
    if trade_in < 0.0:
        raise DomainError(f"trade_in must be >= 0, got {trade_in}")
    if not fx_mid > 0.0:
        raise DomainError(f"fx_mid must be positive, got {fx_mid}")
    if trade_in == 0.0 or direction is Direction.NONE:
        return 0.0
    out = _redeemed(pool.curve, pool.x, pool.y, direction, (1.0 - arb_fee) * trade_in)
    if direction is Direction.BUY_DOMESTIC:
        return out - fx_mid * trade_in
    return fx_mid * out - trade_in


def product_trade_sizes(pool: PoolState, fx_mid: float, arb_fee: float) -> tuple[float, float]:
    """Unclamped closed-form optima ``(dy_star, dx_star)`` for the product rule."""
    keep = 1.0 - arb_fee
    s = pool.rule.s
    dy = math.sqrt(pool.pi0 / (s * keep * fx_mid)) - pool.y / keep
    dx = math.sqrt(fx_mid * pool.pi0 / (s * keep)) - pool.x / keep
    return dy, dx


def optimal_arb_product(pool: PoolState, fx_mid: float, arb_fee: float) -> ArbSolution:
    if pool.rule.effective_kind is not RuleKind.PRODUCT:
        raise DomainError("closed-form arbitrage requires the product rule")
    if not fx_mid > 0.0:
        raise DomainError(f"fx_mid must be positive, got {fx_mid}")
    return _to_solution(*solve_arb(pool.curve, pool.x, pool.y, fx_mid, arb_fee), fx_mid)


def no_arb_band(pool: PoolState, arb_fee: float) -> tuple[float, float]:
    """Interval of external mids for which neither closed-form trade is positive.

    These are the sign-change points of the two closed forms.  On the
    invariant curve they reduce to ``(1-fee)*x/y`` and ``x/((1-fee)*y)``.
    """
    if pool.rule.effective_kind is not RuleKind.PRODUCT:
        raise DomainError("no-arbitrage band is defined for the product rule")
    keep = 1.0 - arb_fee
    s = pool.rule.s
    lower = keep * pool.pi0 / (s * pool.y * pool.y)
    upper = s * pool.x * pool.x / (keep * pool.pi0)
    return lower, upper


def _newton_slope(curve: Curve, t0: float, target: float, scale: float,
                  tol: float, max_iters: int) -> tuple[float, int]:
    """Find ``t >= t0`` with ``curve.d1(t) == target``.

    ``curve.d1`` is increasing (the curve is convex) and ``d1(t0) < target``.
    A Newton step that leaves the known bracket is replaced by bisection.
    ``scale`` converts a step in ``t`` to balance units for the tolerance.
    """
    lo, hi = t0, math.inf
    t = t0
    for it in range(1, max_iters + 1):
        z = curve.other(t)
        dz = curve.d1(t, z)
        g = dz - target
        if g < 0.0:
            lo = max(lo, t)
        elif g > 0.0:
            hi = min(hi, t)
        else:
            return t, it
        ddz = curve.d2(t, z, dz)
        t_new = t - g / ddz if ddz > 0.0 else math.nan
        if abs(t_new - t) * scale <= tol * max(1.0, t * scale):
            return t_new, it
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(t, lo)
        step = t_new - t
        t = t_new
        if abs(step) * scale <= tol * max(1.0, t * scale):
            return t, it
    raise ConvergenceError(f"Newton did not converge in {max_iters} iterations (last step {step:.3e})")


def _buy_domestic(curve, x, y, dy, keep, p, iters):
    out = x - curve.other(curve.s * (y + keep * dy))
    if out - p * dy > 0.0:
        return Direction.BUY_DOMESTIC, dy, out, iters
    return Direction.NONE, 0.0, 0.0, iters


def _buy_foreign(curve, x, y, dx, keep, p, iters):
    out = y - curve.other(x + keep * dx) / curve.s
    if p * out - dx > 0.0:
        return Direction.BUY_FOREIGN, dx, out, iters
    return Direction.NONE, 0.0, 0.0, iters


def solve_arb(curve: Curve, x: float, y: float, fx_mid: float, arb_fee: float,
              tol: float = 1e-12, max_iters: int = 50) -> tuple[Direction, float, float, int]:
    """Float-level optimum: ``(direction, trade_in, trade_out, newton_iterations)``.

    Product pools use the closed forms; mixed pools use Newton.  A trade is
    only reported when its size and its profit at ``fx_mid`` are strictly
    positive, so rounding-level trades near the band edge are dropped.
    """
    kind = curve.kind
    s = curve.s
    keep = 1.0 - arb_fee
    if kind is RuleKind.SUM:
        raise DomainError("constant-sum pools have no interior arbitrage optimum")
    if kind is RuleKind.PRODUCT:
        dy = math.sqrt(curve.pi0 / (s * keep * fx_mid)) - y / keep
        if dy > 0.0:
            return _buy_domestic(curve, x, y, dy, keep, fx_mid, 0)
        dx = math.sqrt(fx_mid * curve.pi0 / (s * keep)) - x / keep
        if dx > 0.0:
            return _buy_foreign(curve, x, y, dx, keep, fx_mid, 0)
        return Direction.NONE, 0.0, 0.0, 0

    # buy domestic: d(x_out)/d(dy) = -keep * s * h'(s*y); profitable at the
    # margin iff h'(s*y) < -p / (keep * s)
    t0 = s * y
    target = -fx_mid / (keep * s)
    if curve.d1(t0) < target:
        t, iters = _newton_slope(curve, t0, target, 1.0 / s, tol, max_iters)
        dy = (t / s - y) / keep
        if dy > 0.0:
            return _buy_domestic(curve, x, y, dy, keep, fx_mid, iters)
        return Direction.NONE, 0.0, 0.0, iters
    # buy foreign: y_out = y - h(x)/s, profitable iff h'(x) < -s / (keep * p)
    t0 = x
    target = -s / (keep * fx_mid)
    if curve.d1(t0) < target:
        t, iters = _newton_slope(curve, t0, target, 1.0, tol, max_iters)
        dx = (t - x) / keep
        if dx > 0.0:
            return _buy_foreign(curve, x, y, dx, keep, fx_mid, iters)
        return Direction.NONE, 0.0, 0.0, iters
    return Direction.NONE, 0.0, 0.0, 0


def _to_solution(direction, trade_in, trade_out, iters, fx_mid) -> ArbSolution:
    if direction is Direction.BUY_DOMESTIC:
        profit = trade_out - fx_mid * trade_in
    elif direction is Direction.BUY_FOREIGN:
        profit = fx_mid * trade_out - trade_in
    else:
        profit = 0.0
    return ArbSolution(direction, trade_in, trade_out, profit, iters)


def optimal_arb_mixed(pool: PoolState, fx_mid: float, cfg: ArbConfig) -> ArbSolution:
    """Profit-maximizing one-sided trade for a mixed-rule pool (Newton-Raphson).

    With ``alpha == 0`` the rule is the product rule and the closed form is
    used, so results match :func:`optimal_arb_product` exactly.
    """
    if pool.rule.effective_kind is RuleKind.SUM:
        raise DomainError("constant-sum pools have no interior arbitrage optimum")
    if not fx_mid > 0.0:
        raise DomainError(f"fx_mid must be positive, got {fx_mid}")
    return _to_solution(
        *solve_arb(pool.curve, pool.x, pool.y, fx_mid, cfg.arb_fee, cfg.newton_tol, cfg.max_iters),
        fx_mid,
    )


def optimal_arb(pool: PoolState, fx_mid: float, cfg: ArbConfig) -> ArbSolution:
    """Dispatch on the pool rule."""
    if pool.rule.effective_kind is RuleKind.PRODUCT:
        return optimal_arb_product(pool, fx_mid, cfg.arb_fee)
    return optimal_arb_mixed(pool, fx_mid, cfg)


# --- brute-force oracle ------------------------------------------------------

_CHUNK = 1 << 15


def _partner(kind: RuleKind, alpha: float, sigma0: float, pi0: float, t: np.ndarray) -> np.ndarray:
    """Other scaled balance on the curve, straight from the quadratic formula."""
    if kind is RuleKind.SUM:
        return sigma0 - t
    if kind is RuleKind.PRODUCT or alpha == 0.0:
        return pi0 / t
    a = alpha / sigma0
    b = (1.0 - alpha) + a * t
    c = pi0 / t
    disc = np.sqrt(b * b + 4.0 * a * c)
    out = np.empty_like(t)
    pos = b >= 0.0
    np.divide(2.0 * c, b + disc, out=out, where=pos)
    np.divide(disc - b, 2.0 * a, out=out, where=~pos)
    return out


def _grid_best(omega_of, step: float, grid: int) -> tuple[float, int]:
    best, best_i = -np.inf, -1
    for start in range(0, grid, _CHUNK):
        idx = np.arange(start + 1, min(start + _CHUNK, grid) + 1, dtype=float)
        omega = omega_of(idx * step)
        i = int(np.argmax(omega))
        if omega[i] > best:
            best, best_i = float(omega[i]), start + i + 1
    return best, best_i


def oracle_arb_grid(pool: PoolState, fx_mid: float, arb_fee: float, grid: int) -> ArbSolution:
    """Best trade over a uniform grid of redemption sizes in ``(0, 0.9 * balance]``.

    ``balance`` is the available balance of the token leaving the pool, so the
    grid step is ``0.9 * balance / grid``.  Each redemption size is priced
    with the deposit that keeps the pool on its curve.  Intended for
    cross-validating the analytic solvers only.
    """
    if grid < 2:
        raise DomainError("grid must be >= 2")
    rule = pool.rule
    kind, alpha, s = rule.kind, rule.alpha, rule.s
    sigma0, pi0 = pool.sigma0, pool.pi0
    x, y = pool.x, pool.y
    keep = 1.0 - arb_fee

    def deposit_foreign(out):  # redeem domestic
        return (_partner(kind, alpha, sigma0, pi0, x - out) / s - y) / keep

    def deposit_domestic(out):  # redeem foreign
        return (_partner(kind, alpha, sigma0, pi0, s * (y - out)) - x) / keep

    best = ArbSolution.none()
    for direction, deposit_of, balance in (
        (Direction.BUY_DOMESTIC, deposit_foreign, x),
        (Direction.BUY_FOREIGN, deposit_domestic, y),
    ):
        if direction is Direction.BUY_DOMESTIC:
            omega_of = lambda out: out - fx_mid * deposit_foreign(out)
        else:
            omega_of = lambda out: fx_mid * out - deposit_domestic(out)
        step = 0.9 * balance / grid
        profit, i = _grid_best(omega_of, step, grid)
        if profit > best.profit:
            out = i * step
            best = ArbSolution(direction, float(deposit_of(np.array([out]))[0]), out, profit)
    return best
