"""Intraday pool simulation over normalized one-minute sessions.

Each minute ``n``:

1. the aggregated bid order redeems ``v_bid`` foreign tokens and the ask
   order redeems ``v_ask`` domestic tokens, both quoted against the pool
   state left by minute ``n-1``;
2. fill rates and spreads against the minute's mid are recorded;
3. the arbitrageur sizes a one-sided trade on the updated pool using the
   previous minute's mid and fills the off-chain leg at the current mid;
4. balances are updated.

Client deposits are credited net of the fee; the fee itself is paid to the
liquidity provider and accumulated separately.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

from .arbitrage import ArbConfig, Direction, solve_arb
from .cfmm import CfmmRule, Curve, PoolState, RuleKind
from .errors import DomainError, FxAmmError, InconsistencyError, InsufficientLiquidityError
from .market_data import NormalizedBar, Session

log = logging.getLogger(__name__)

BP = 10_000.0


@dataclass(frozen=True)
class SimConfig:
    rule: CfmmRule = field(default_factory=lambda: CfmmRule.mixed(5.0))
    fee: float = 1e-4
    arb_fee: float = 0.0
    liquidity_multiple: float = 1.0
    arb_enabled: bool = True
    arb: ArbConfig = field(default_factory=ArbConfig)
    joint_orders: bool = False
    # "lagged": size the arbitrage on the previous mid; "current": on this minute's mid
    arb_sizing: str = "lagged"

    def __post_init__(self):
        if not self.liquidity_multiple > 0.0:
            raise DomainError("liquidity_multiple must be positive")
        if not (0.0 <= self.fee < 1.0 and 0.0 <= self.arb_fee < 1.0):
            raise DomainError("fees must lie in [0, 1)")
        if self.arb_sizing not in ("lagged", "current"):
            raise DomainError(f"arb_sizing must be 'lagged' or 'current', got {self.arb_sizing!r}")
        if self.arb_enabled and self.rule.effective_kind is RuleKind.SUM:
            raise DomainError("constant-sum pools have no interior arbitrage optimum; disable arbitrage")

    def arb_config(self) -> ArbConfig:
        return replace(self.arb, arb_fee=self.arb_fee)


@dataclass(frozen=True)
class StepRecord:
    n: int
    p_mid: float
    v_bid: float
    v_ask: float
    x: float
    y: float
    # bid order: redeem v_bid foreign, deposit ask_in domestic
    ask_in: float
    # ask order: redeem v_ask domestic, deposit bid_in foreign
    bid_in: float
    amm_bid: float  # NaN when v_ask == 0
    amm_ask: float  # NaN when v_bid == 0
    spread_bid: float
    spread_ask: float
    arb_direction: Direction
    arb_in: float
    arb_out: float
    arb_profit: float
    arb_fee_paid: float
    fees: float  # cumulative client fees

    def pi_sigma(self) -> tuple[float, float]:
        return self.x * self.y, 0.5 * (self.x + self.y)


@dataclass(frozen=True)
class SessionResult:
    spread_bp: float
    arb_pnl: float
    fees: float
    lp_pnl: float
    lp_pnl_hedged: float
    x_final: float
    y_final: float
    x0: float
    y0: float
    p0: float
    p_final: float
    arb_fees: float = 0.0
    steps: tuple[StepRecord, ...] | None = None


@dataclass(frozen=True)
class SessionFailure:
    index: int
    date: str
    error: str


class SimulationError(FxAmmError):
    def __init__(self, message: str, session: str | None = None, step: int | None = None):
        self.session, self.step = session, step
        where = []
        if session is not None:
            where.append(f"session {session}")
        if step is not None:
            where.append(f"step {step}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def init_pool(cfg: SimConfig) -> PoolState:
    m = cfg.liquidity_multiple
    rule = replace(cfg.rule, s=1.0)
    return PoolState.create(m, m, rule, cfg.fee)


def step(pool: PoolState, bar: NormalizedBar, prev_bar: NormalizedBar, cfg: SimConfig,
         n: int = 0, fees_so_far: float = 0.0) -> tuple[PoolState, StepRecord]:
    """Advance one minute; returns the new pool and the minute's record."""
    sim = _Stepper(pool, cfg)
    sim.fees = fees_so_far
    rec = sim.advance(n, bar, prev_bar.p_mid, record=True)
    return replace(pool, x=sim.x, y=sim.y), rec


class _Stepper:
    """Mutable float state for one session's loop."""

    __slots__ = ("curve", "s", "fee", "keep", "arb_fee", "arb_keep", "arb_on", "tol", "max_iters",
                 "joint", "lagged", "x", "y", "fees", "arb_pnl", "arb_fees", "w_spread")

    def __init__(self, pool: PoolState, cfg: SimConfig):
        self.curve = Curve(pool.rule, pool.sigma0, pool.pi0)
        self.s = pool.rule.s
        self.fee = pool.fee
        self.keep = 1.0 - pool.fee
        self.arb_fee = cfg.arb_fee
        self.arb_keep = 1.0 - cfg.arb_fee
        self.arb_on = cfg.arb_enabled
        self.tol, self.max_iters = cfg.arb.newton_tol, cfg.arb.max_iters
        self.joint = cfg.joint_orders
        self.lagged = cfg.arb_sizing == "lagged"
        self.x, self.y = pool.x, pool.y
        self.fees = 0.0
        self.arb_pnl = 0.0
        self.arb_fees = 0.0
        self.w_spread = 0.0

    def _redeem_foreign(self, x, y, amount):
        if amount >= y:
            raise InsufficientLiquidityError(f"bid order {amount} exceeds foreign balance {y}")
        if self.curve.kind is RuleKind.SUM:
            credited = self.s * amount
        else:
            credited = self.curve.other(self.s * (y - amount)) - x
        if not credited > 0.0:
            raise InconsistencyError(f"pool off its curve: redeeming {amount} foreign needs no deposit")
        return credited / self.keep

    def _redeem_domestic(self, x, y, amount):
        if amount >= x:
            raise InsufficientLiquidityError(f"ask order {amount} exceeds domestic balance {x}")
        if self.curve.kind is RuleKind.SUM:
            credited = amount / self.s
        else:
            credited = self.curve.other(x - amount) / self.s - y
        if not credited > 0.0:
            raise InconsistencyError(f"pool off its curve: redeeming {amount} domestic needs no deposit")
        return credited / self.keep

    def advance(self, n: int, bar: NormalizedBar, p_prev: float, record: bool = False):
        x, y = self.x, self.y
        p = bar.p_mid
        vb, va = bar.v_bid, bar.v_ask
        fee = self.fee
        ask_in = bid_in = 0.0
        amm_bid = amm_ask = s_bid = s_ask = math.nan

        if self.joint:
            if vb > 0.0:
                ask_in = self._redeem_foreign(x, y, vb)
            if va > 0.0:
                bid_in = self._redeem_domestic(x, y, va)
            x = x - va + (ask_in - fee * ask_in)
            y = y - vb + (bid_in - fee * bid_in)
        else:
            if vb > 0.0:
                ask_in = self._redeem_foreign(x, y, vb)
                x, y = x + (ask_in - fee * ask_in), y - vb
            if va > 0.0:
                bid_in = self._redeem_domestic(x, y, va)
                x, y = x - va, y + (bid_in - fee * bid_in)
        if not (x > 0.0 and y > 0.0):
            raise InconsistencyError(f"client orders leave balances x={x}, y={y}")

        if vb > 0.0:
            amm_ask = ask_in / vb
            s_ask = amm_ask - p
            self.w_spread += vb * s_ask
        if va > 0.0:
            amm_bid = va / bid_in
            s_bid = p - amm_bid
            self.w_spread += va * s_bid
        self.fees += fee * (ask_in + p * bid_in)

        direction, a_in, a_out, profit, a_fee = Direction.NONE, 0.0, 0.0, 0.0, 0.0
        if self.arb_on:
            p_size = p_prev if self.lagged else p
            direction, a_in, a_out, _ = solve_arb(
                self.curve, x, y, p_size, self.arb_fee, self.tol, self.max_iters)
            if direction is Direction.BUY_DOMESTIC:
                profit = a_out - p * a_in
                a_fee = p * self.arb_fee * a_in
                x, y = x - a_out, y + (a_in - self.arb_fee * a_in)
            elif direction is Direction.BUY_FOREIGN:
                profit = p * a_out - a_in
                a_fee = self.arb_fee * a_in
                x, y = x + (a_in - self.arb_fee * a_in), y - a_out
            if not (x > 0.0 and y > 0.0):
                raise InconsistencyError(f"arbitrage leaves balances x={x}, y={y}")
            self.arb_pnl += profit
            self.arb_fees += a_fee

        self.x, self.y = x, y
        if not record:
            return None
        return StepRecord(n, p, vb, va, x, y, ask_in, bid_in, amm_bid, amm_ask, s_bid, s_ask,
                          direction, a_in, a_out, profit, a_fee, self.fees)


def run_session(session: Session, cfg: SimConfig, keep_steps: bool = False,
                label: str | None = None) -> SessionResult:
    bars = session.bars
    pool = init_pool(cfg)
    sim = _Stepper(pool, cfg)
    records = [] if keep_steps else None
    label = label if label is not None else f"{session.pair} {session.date}"
    prev_p = bars[0].p_mid
    try:
        for n, bar in enumerate(bars):
            rec = sim.advance(n, bar, prev_p, keep_steps)
            if keep_steps:
                records.append(rec)
            prev_p = bar.p_mid
    except FxAmmError as exc:
        raise SimulationError(str(exc), label, n) from exc

    p0, p_n = bars[0].p_mid, bars[-1].p_mid
    x0, y0 = pool.x, pool.y
    value_n = sim.x + p_n * sim.y
    lp = value_n - (x0 + p0 * y0) + sim.fees
    lp_hedged = value_n - (x0 + p_n * y0) + sim.fees
    return SessionResult(
        spread_bp=BP / 2.0 * sim.w_spread,
        arb_pnl=sim.arb_pnl,
        fees=sim.fees,
        lp_pnl=lp,
        lp_pnl_hedged=lp_hedged,
        x_final=sim.x,
        y_final=sim.y,
        x0=x0,
        y0=y0,
        p0=p0,
        p_final=p_n,
        arb_fees=sim.arb_fees,
        steps=tuple(records) if keep_steps else None,
    )


def _run_one(args):
    i, session, cfg = args
    try:
        return run_session(session, cfg)
    except FxAmmError as exc:
        log.warning("session %d failed: %s", i, exc)
        return SessionFailure(i, str(session.date), str(exc))


def run_batch(sessions: Sequence[Session], cfg: SimConfig,
              threads: int = 1) -> list[SessionResult | SessionFailure]:
    """Simulate independent sessions; output order always matches input order.

    ``threads > 1`` fans sessions out to worker processes.
    """
    if not sessions:
        raise ValueError("run_batch needs at least one session")
    jobs = [(i, s, cfg) for i, s in enumerate(sessions)]
    if threads <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


DUMP_COLUMNS = (
    "n", "p_mid", "amm_bid", "amm_ask", "x", "y", "spread_bid", "spread_ask", "v_bid", "v_ask",
    "il", "il_hedged", "fees", "arb_pnl", "pi", "sigma",
)


def write_step_dump(result: SessionResult, stream: IO[str]) -> None:
    """Per-minute table of the intraday-dynamics variables."""
    if result.steps is None:
        raise ValueError("session was run without keep_steps=True")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(DUMP_COLUMNS)
    x0, y0, p0 = result.x0, result.y0, result.p0
    arb = 0.0
    for r in result.steps:
        arb += r.arb_profit
        value = r.x + r.p_mid * r.y
        pi, sigma = r.pi_sigma()
        row = (r.n, r.p_mid, r.amm_bid, r.amm_ask, r.x, r.y, r.spread_bid, r.spread_ask,
               r.v_bid, r.v_ask, value - (x0 + p0 * y0), value - (x0 + r.p_mid * y0),
               r.fees, arb, pi, sigma)
        writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def _fmt(v: float) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(float(v))
