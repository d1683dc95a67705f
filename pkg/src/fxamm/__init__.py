"""CFMM pools for tokenized fiat currency pairs, pool arbitrage against FX
rates, and intraday session simulation with liquidity-provider analytics."""

__version__ = "0.1.0"

from .arbitrage import (
    ArbConfig, ArbSolution, Direction, arb_profit, no_arb_band, optimal_arb, optimal_arb_mixed,
    optimal_arb_product, oracle_arb_grid,
)
from .cfmm import (
    CfmmRule, Fill, PoolState, RuleKind, Side, apply_fill, invariant_residual, marginal_rate,
    quote_exact_in, quote_exact_out, solve_counterparty_balance,
)
from .market_data import NormalizedBar, RawBar, Session, SynthConfig, synth_sessions
from .simulator import SessionResult, SimConfig, init_pool, run_batch, run_session, step
