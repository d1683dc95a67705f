"""Aggregation of session results: annualized key variables, distribution
statistics, parameter sweeps and the P&L regression."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .cfmm import CfmmRule, RuleKind
from .errors import RankDeficiencyError
from .market_data import Session, TRADING_DAYS_PER_YEAR
from .simulator import SessionFailure, SessionResult, SimConfig, run_batch

KEY_VARIABLES = ("spread_bp", "arb_pnl_annual", "lp_pnl_annual", "lp_pnl_hedged_annual", "fees_annual")


@dataclass(frozen=True)
class KeyVariables:
    spread_bp: float
    arb_pnl_annual: float
    lp_pnl_annual: float
    lp_pnl_hedged_annual: float
    fees_annual: float = 0.0


@dataclass(frozen=True)
class DistStats:
    median: float
    mad: float
    q1: float
    q2: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    count: int

    @property
    def quartiles(self) -> tuple[float, float, float]:
        return self.q1, self.q2, self.q3

    @property
    def whiskers(self) -> tuple[float, float]:
        return self.whisker_lo, self.whisker_hi


@dataclass(frozen=True)
class RegressionResult:
    beta_return: float
    beta_volvar: float
    intercept: float
    r_squared: float
    n: int


def annualize(results: Iterable[SessionResult]) -> list[KeyVariables]:
    """Daily P&L times 260; the spread is not scaled."""
    out = [
        KeyVariables(
            r.spread_bp,
            TRADING_DAYS_PER_YEAR * r.arb_pnl,
            TRADING_DAYS_PER_YEAR * r.lp_pnl,
            TRADING_DAYS_PER_YEAR * r.lp_pnl_hedged,
            TRADING_DAYS_PER_YEAR * r.fees,
        )
        for r in results
    ]
    if not out:
        raise ValueError("annualize needs at least one result")
    return out


def dist_stats(values: Sequence[float]) -> DistStats:
    """Median, MAD, linear-interpolated quartiles and 1.5 IQR boxplot whiskers."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("dist_stats needs at least one value")
    q1, q2, q3 = np.percentile(a, [25.0, 50.0, 75.0])
    mad = float(np.median(np.abs(a - q2)))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    # whiskers end at the most extreme observation inside the fences
    lo = float(a[a >= lo_fence].min())
    hi = float(a[a <= hi_fence].max())
    return DistStats(float(q2), mad, float(q1), float(q2), float(q3), lo, hi, int(a.size))


def successes(results: Iterable[SessionResult | SessionFailure]) -> list[SessionResult]:
    return [r for r in results if isinstance(r, SessionResult)]


def summarize(keys: Sequence[KeyVariables]) -> dict[str, DistStats]:
    return {name: dist_stats([getattr(k, name) for k in keys]) for name in KEY_VARIABLES}


def _with_axis(cfg: SimConfig, axis: str, value: float) -> SimConfig:
    if axis == "alpha":
        return replace(cfg, rule=CfmmRule(RuleKind.MIXED, float(value), cfg.rule.s))
    if axis == "fee":
        return replace(cfg, fee=float(value))
    if axis == "liquidity_multiple":
        return replace(cfg, liquidity_multiple=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass(frozen=True)
class SweepCell:
    axis: str
    value: float
    stats: dict
    failures: int
    keys: tuple[KeyVariables, ...]


def sweep(sessions: Sequence[Session], base: SimConfig, axis: str, values: Sequence[float],
          threads: int = 1) -> list[SweepCell]:
    """Re-run the same sessions for each axis value and tabulate distributions.

    ``axis`` is one of ``alpha``, ``fee`` (a rate, not bp) or
    ``liquidity_multiple``.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    cells = []
    for v in values:
        results = run_batch(sessions, _with_axis(base, axis, v), threads=threads)
        ok = successes(results)
        keys = tuple(annualize(ok)) if ok else ()
        stats = summarize(keys) if keys else {}
        cells.append(SweepCell(axis, float(v), stats, len(results) - len(ok), keys))
    return cells


def volume_variance(session: Session, mode: str = "difference") -> float:
    vb, va = session.column("v_bid"), session.column("v_ask")
    if mode == "difference":
        return float(np.var(vb - va))
    if mode == "sum":
        return float(np.var(vb + va))
    if mode == "sides":
        return float(np.var(vb) + np.var(va))
    raise ValueError(f"unknown volume variance mode {mode!r}")


def ols(y: np.ndarray, regressors: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Least squares with an intercept column; returns (coef, r2, residuals)."""
    n = len(y)
    X = np.column_stack([np.ones(n), regressors])
    if np.any(np.ptp(regressors, axis=0) == 0.0):
        raise RankDeficiencyError("a regressor is constant")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficiencyError(f"design matrix rank {rank} < {X.shape[1]}")
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return coef, min(max(r2, 0.0), 1.0), resid


def regress_pnl(results: Sequence[SessionResult], sessions: Sequence[Session],
                volvar_mode: str = "difference") -> tuple[RegressionResult, RegressionResult]:
    """Regress daily LP P&L (unhedged, hedged) on session return and volume variance."""
    if len(results) != len(sessions):
        raise ValueError("results and sessions must be aligned")
    ret = np.array([r.p_final / r.p0 - 1.0 for r in results])
    vv = np.array([volume_variance(s, volvar_mode) for s in sessions])
    regs = np.column_stack([ret, vv])
    out = []
    for attr in ("lp_pnl", "lp_pnl_hedged"):
        y = np.array([getattr(r, attr) for r in results])
        coef, r2, _ = ols(y, regs)
        out.append(RegressionResult(float(coef[1]), float(coef[2]), float(coef[0]), r2, len(y)))
    return out[0], out[1]


# --- table export ------------------------------------------------------------

SESSION_COLUMNS = ("session", "date", "spread_bp", "arb_pnl_annual_pct", "lp_pnl_annual_pct",
                   "lp_pnl_hedged_annual_pct", "fees_annual_pct", "status")
DIST_COLUMNS = ("axis", "value", "variable") + tuple(f.name for f in fields(DistStats))
REGRESSION_COLUMNS = ("pnl", "beta_return", "beta_volvar", "intercept", "r_squared", "n")


def _num(v) -> str:
    return repr(float(v))


def session_rows(sessions: Sequence[Session], results: Sequence[SessionResult | SessionFailure]) -> list[dict]:
    rows = []
    for i, (s, r) in enumerate(zip(sessions, results)):
        row = {"session": i, "date": str(s.date)}
        if isinstance(r, SessionResult):
            k = annualize([r])[0]
            row.update(
                spread_bp=k.spread_bp,
                arb_pnl_annual_pct=100.0 * k.arb_pnl_annual,
                lp_pnl_annual_pct=100.0 * k.lp_pnl_annual,
                lp_pnl_hedged_annual_pct=100.0 * k.lp_pnl_hedged_annual,
                fees_annual_pct=100.0 * k.fees_annual,
                status="ok",
            )
        else:
            row.update({c: None for c in SESSION_COLUMNS[2:-1]}, status=f"error: {r.error}")
        rows.append(row)
    return rows


def dist_rows(cells: Sequence[SweepCell]) -> list[dict]:
    rows = []
    for cell in cells:
        for var in KEY_VARIABLES:
            st = cell.stats.get(var)
            row = {"axis": cell.axis, "value": cell.value, "variable": var}
            row.update(asdict(st) if st else {f.name: None for f in fields(DistStats)})
            rows.append(row)
    return rows


def regression_rows(unhedged: RegressionResult, hedged: RegressionResult) -> list[dict]:
    return [dict(pnl=name, **asdict(r)) for name, r in (("lp_pnl", unhedged), ("lp_pnl_hedged", hedged))]


def write_table(rows: Sequence[dict], columns: Sequence[str], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(_num(v))
            else:
                out.append(str(v))
        writer.writerow(out)
