"""Constant-function market maker pools for a domestic/foreign token pair.

Balances are ``x`` (domestic token) and ``y`` (foreign token).  The rule's
equilibrium rate ``s`` converts foreign into domestic units, so every rule
can be written in the scaled coordinates ``(x, u)`` with ``u = s * y``:

* constant sum:      ``x + u = sigma0``
* constant product:  ``x * u = pi0``
* mixed(alpha):      ``pi0/(x*u) - 1 - alpha*((x + u)/sigma0 - 1) = 0``

All three are symmetric in ``x`` and ``u``, so a single helper solves for
either balance.  Fees are charged on the deposited token: only
``(1 - fee) * amount_in`` is credited to the pool.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import DomainError, InconsistencyError, InsufficientLiquidityError


class RuleKind(str, enum.Enum):
    SUM = "sum"
    PRODUCT = "product"
    MIXED = "mixed"


class Side(str, enum.Enum):
    """Which token leaves the pool."""

    REDEEM_DOMESTIC = "redeem_domestic"
    REDEEM_FOREIGN = "redeem_foreign"


@dataclass(frozen=True)
class CfmmRule:
    kind: RuleKind
    alpha: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if not (self.alpha >= 0.0) or math.isinf(self.alpha):
            raise DomainError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (self.s > 0.0) or math.isinf(self.s):
            raise DomainError(f"s must be finite and > 0, got {self.s}")

    @property
    def effective_kind(self) -> RuleKind:
        """Mixed with alpha == 0 is exactly the product rule."""
        if self.kind is RuleKind.MIXED and self.alpha == 0.0:
            return RuleKind.PRODUCT
        return self.kind

    @classmethod
    def sum(cls, s: float = 1.0) -> "CfmmRule":
        return cls(RuleKind.SUM, 0.0, s)

    @classmethod
    def product(cls, s: float = 1.0) -> "CfmmRule":
        return cls(RuleKind.PRODUCT, 0.0, s)

    @classmethod
    def mixed(cls, alpha: float, s: float = 1.0) -> "CfmmRule":
        return cls(RuleKind.MIXED, alpha, s)


class Curve:
    """Float-level solver for one invariant with fixed constants.

    ``other(t)`` returns the partner coordinate of ``t`` on the curve in the
    scaled ``(x, u)`` plane; ``d1``/``d2`` are its first and second
    derivatives.  The simulator calls these directly in its inner loop.
    """

    __slots__ = ("kind", "sigma0", "pi0", "s", "alpha", "a", "one_m_alpha")

    def __init__(self, rule: CfmmRule, sigma0: float, pi0: float):
        self.kind = rule.effective_kind
        self.s = rule.s
        self.alpha = rule.alpha
        self.sigma0 = sigma0
        self.pi0 = pi0
        self.a = rule.alpha / sigma0
        self.one_m_alpha = 1.0 - rule.alpha

    def other(self, t: float) -> float:
        kind = self.kind
        if kind is RuleKind.PRODUCT:
            return self.pi0 / t
        if kind is RuleKind.SUM:
            return self.sigma0 - t
        # a z^2 + b z - c = 0, positive root; pick the cancellation-free form
        b = self.one_m_alpha + self.a * t
        c = self.pi0 / t
        sq = math.sqrt(b * b + 4.0 * self.a * c)
        if b >= 0.0:
            return 2.0 * c / (b + sq)
        return (sq - b) / (2.0 * self.a)

    def d1(self, t: float, z: float | None = None) -> float:
        kind = self.kind
        if kind is RuleKind.PRODUCT:
            return -self.pi0 / (t * t)
        if kind is RuleKind.SUM:
            return -1.0
        if z is None:
            z = self.other(t)
        a = self.a
        g_z = 2.0 * a * z + self.one_m_alpha + a * t
        return -(a * z + self.pi0 / (t * t)) / g_z

    def d2(self, t: float, z: float | None = None, dz: float | None = None) -> float:
        kind = self.kind
        if kind is RuleKind.PRODUCT:
            return 2.0 * self.pi0 / (t * t * t)
        if kind is RuleKind.SUM:
            return 0.0
        if z is None:
            z = self.other(t)
        if dz is None:
            dz = self.d1(t, z)
        a = self.a
        g_z = 2.0 * a * z + self.one_m_alpha + a * t
        g_tt = -2.0 * self.pi0 / (t * t * t)
        return -(g_tt + 2.0 * a * dz + 2.0 * a * dz * dz) / g_z

    def y_of_x(self, x: float) -> float:
        return self.other(x) / self.s

    def x_of_y(self, y: float) -> float:
        return self.other(self.s * y)


@dataclass(frozen=True)
class PoolState:
    x: float
    y: float
    sigma0: float
    pi0: float
    fee: float
    rule: CfmmRule

    def __post_init__(self):
        if not (0.0 <= self.fee < 1.0):
            raise DomainError(f"fee must lie in [0, 1), got {self.fee}")
        if not (self.sigma0 > 0.0 and self.pi0 > 0.0):
            raise DomainError("sigma0 and pi0 must be positive")
        if not (self.x > 0.0 and self.y > 0.0):
            raise InconsistencyError(f"pool balances must be positive, got x={self.x}, y={self.y}")

    @classmethod
    def create(cls, x0: float, y0: float, rule: CfmmRule, fee: float = 0.0) -> "PoolState":
        """New pool whose invariant constants are taken from the opening balances."""
        if not (x0 > 0.0 and y0 > 0.0):
            raise DomainError("opening balances must be positive")
        return cls(x0, y0, x0 + rule.s * y0, rule.s * x0 * y0, fee, rule)

    @property
    def curve(self) -> Curve:
        return Curve(self.rule, self.sigma0, self.pi0)

    def value(self, price: float) -> float:
        """Pool value in domestic units at ``price`` (domestic per foreign)."""
        return self.x + price * self.y


@dataclass(frozen=True)
class Fill:
    side: Side
    amount_out: float
    amount_in: float
    fee_paid: float

    @property
    def rate(self) -> float:
        """Executed rate in domestic per foreign, fee included."""
        if self.side is Side.REDEEM_DOMESTIC:
            return self.amount_out / self.amount_in
        return self.amount_in / self.amount_out


def invariant_residual(rule: CfmmRule, sigma0: float, pi0: float, x: float, y: float) -> float:
    if not (x > 0.0 and y > 0.0):
        raise DomainError(f"balances must be positive, got x={x}, y={y}")
    s = rule.s
    if rule.kind is RuleKind.SUM:
        return x + s * y - sigma0
    if rule.kind is RuleKind.PRODUCT:
        return s * x * y - pi0
    return (pi0 / (s * x * y) - 1.0) - rule.alpha * ((x + s * y) / sigma0 - 1.0)


def solve_counterparty_balance(
    rule: CfmmRule, sigma0: float, pi0: float, *, x: float | None = None, y: float | None = None
) -> float:
    """Return the balance of the other token that puts ``(x, y)`` on the curve.

    Exactly one of ``x`` or ``y`` must be given.
    """
    if (x is None) == (y is None):
        raise TypeError("pass exactly one of x= or y=")
    known = x if x is not None else y
    if not known > 0.0:
        raise DomainError(f"known balance must be positive, got {known}")
    curve = Curve(rule, sigma0, pi0)
    t = x if x is not None else rule.s * y
    if curve.kind is RuleKind.SUM and t >= sigma0:
        raise DomainError("constant-sum solution would be nonpositive")
    z = curve.other(t)
    return z / rule.s if x is not None else z


def _check_size(amount: float, name: str) -> None:
    if not (amount > 0.0) or math.isinf(amount):
        raise DomainError(f"{name} must be positive and finite, got {amount}")


def quote_exact_out(pool: PoolState, side: Side, amount_out: float) -> Fill:
    """Deposit required to redeem exactly ``amount_out`` of the outgoing token."""
    _check_size(amount_out, "amount_out")
    curve = pool.curve
    s = pool.rule.s
    if side is Side.REDEEM_DOMESTIC:
        if amount_out >= pool.x:
            raise InsufficientLiquidityError(f"cannot redeem {amount_out} of domestic balance {pool.x}")
        if curve.kind is RuleKind.SUM:
            credited = amount_out / s  # linear rule: skip the cancelling difference
        else:
            credited = curve.y_of_x(pool.x - amount_out) - pool.y
    else:
        if amount_out >= pool.y:
            raise InsufficientLiquidityError(f"cannot redeem {amount_out} of foreign balance {pool.y}")
        if curve.kind is RuleKind.SUM:
            credited = s * amount_out
        else:
            credited = curve.x_of_y(pool.y - amount_out) - pool.x
    if not credited > 0.0:
        raise InconsistencyError(
            f"pool is off its invariant curve: redeeming {amount_out} needs no deposit"
        )
    amount_in = credited / (1.0 - pool.fee)
    return Fill(side, amount_out, amount_in, pool.fee * amount_in)


def quote_exact_in(pool: PoolState, side: Side, amount_in: float) -> Fill:
    """Tokens redeemed for a deposit of ``amount_in`` of the incoming token."""
    _check_size(amount_in, "amount_in")
    curve = pool.curve
    credited = (1.0 - pool.fee) * amount_in
    if side is Side.REDEEM_DOMESTIC:
        t = pool.rule.s * (pool.y + credited)
        if curve.kind is RuleKind.SUM and t >= curve.sigma0:
            raise InsufficientLiquidityError("deposit would drain the domestic balance")
        amount_out = pool.rule.s * credited if curve.kind is RuleKind.SUM else pool.x - curve.other(t)
        balance = pool.x
    else:
        t = pool.x + credited
        if curve.kind is RuleKind.SUM and t >= curve.sigma0:
            raise InsufficientLiquidityError("deposit would drain the foreign balance")
        amount_out = credited / pool.rule.s if curve.kind is RuleKind.SUM else pool.y - curve.other(t) / pool.rule.s
        balance = pool.y
    if amount_out >= balance:
        raise InsufficientLiquidityError(f"implied redemption {amount_out} exhausts balance {balance}")
    if not amount_out > 0.0:
        raise InconsistencyError(f"deposit of {amount_in} redeems nothing")
    return Fill(side, amount_out, amount_in, pool.fee * amount_in)


def apply_fill(pool: PoolState, fill: Fill | None) -> PoolState:
    if fill is None:
        return pool
    credited = fill.amount_in - fill.fee_paid
    if fill.side is Side.REDEEM_DOMESTIC:
        x, y = pool.x - fill.amount_out, pool.y + credited
    else:
        x, y = pool.x + credited, pool.y - fill.amount_out
    if not (x > 0.0 and y > 0.0):
        raise InconsistencyError(f"fill would leave balances x={x}, y={y}")
    return replace(pool, x=x, y=y)


def marginal_rate(pool: PoolState, side: Side | None = None) -> float:
    """Fee-free marginal rate, domestic per foreign, at the current balances.

    This is ``-dx/dy`` along the invariant, identical for both sides; ``side``
    is accepted for symmetry with the quoting functions.
    """
    rule = pool.rule
    s = rule.s
    kind = rule.effective_kind
    if kind is RuleKind.SUM:
        return s
    x, y = pool.x, pool.y
    if kind is RuleKind.PRODUCT:
        return x / y
    # ratio of the invariant's partial derivatives
    k = pool.pi0 / (s * x * y)
    w = rule.alpha / pool.sigma0
    return (k / y + w * s) / (k / x + w)
