"""One-minute bid/ask bars: parsing, daily sessions, normalization, synthesis.

Bar file format (comma separated, header required)::

    timestamp,bid_open,bid_high,bid_low,bid_close,ask_open,ask_high,ask_low,ask_close,bid_volume,ask_volume
    2021-06-03T00:00Z,1.22010,1.22015,1.22005,1.22012,1.22020,...

Timestamps are ISO-8601 UTC truncated to the minute.  Sessions are UTC
calendar days of 1440 minutes.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import DegenerateSessionError, OrderingError, ParseError

log = logging.getLogger(__name__)

MINUTES_PER_SESSION = 1440
TRADING_DAYS_PER_YEAR = 260
COLUMNS = (
    "timestamp",
    "bid_open", "bid_high", "bid_low", "bid_close",
    "ask_open", "ask_high", "ask_low", "ask_close",
    "bid_volume", "ask_volume",
)
_UTC = dt.timezone.utc


@dataclass(frozen=True)
class RawBar:
    timestamp: dt.datetime
    bid_open: float
    bid_high: float
    bid_low: float
    bid_close: float
    ask_open: float
    ask_high: float
    ask_low: float
    ask_close: float
    bid_volume: float
    ask_volume: float

    def validate(self) -> None:
        for side in ("bid", "ask"):
            o, h, l, c = (getattr(self, f"{side}_{k}") for k in ("open", "high", "low", "close"))
            if not (o > 0 and h > 0 and l > 0 and c > 0):
                raise ValueError(f"{side} prices must be positive")
            if not (l <= o <= h and l <= c <= h):
                raise ValueError(f"{side} OHLC out of order (low <= open, close <= high)")
        if self.ask_close < self.bid_close:
            raise ValueError(f"crossed quote: bid_close {self.bid_close} > ask_close {self.ask_close}")
        if self.bid_volume < 0 or self.ask_volume < 0:
            raise ValueError("volumes must be nonnegative")


@dataclass(frozen=True)
class NormalizedBar:
    p_mid: float
    p_bid: float
    p_ask: float
    v_bid: float
    v_ask: float


@dataclass
class Session:
    pair: str
    date: dt.date
    bars: list[NormalizedBar]

    def __post_init__(self):
        if len(self.bars) != MINUTES_PER_SESSION:
            raise ValueError(f"session needs {MINUTES_PER_SESSION} bars, got {len(self.bars)}")

    def column(self, name: str) -> np.ndarray:
        return np.fromiter((getattr(b, name) for b in self.bars), float, len(self.bars))


@dataclass
class SliceReport:
    kept: list[dt.date] = field(default_factory=list)
    dropped: dict[dt.date, int] = field(default_factory=dict)  # date -> real bar count
    filled: dict[dt.date, int] = field(default_factory=dict)  # date -> gap minutes filled


def parse_timestamp(text: str) -> dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = dt.datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=_UTC)
    ts = ts.astimezone(_UTC)
    if ts.second or ts.microsecond:
        raise ValueError("timestamp must be truncated to the minute")
    return ts


def format_timestamp(ts: dt.datetime) -> str:
    return ts.astimezone(_UTC).strftime("%Y-%m-%dT%H:%MZ")


def parse_bars(stream: IO[str] | IO[bytes] | str, delimiter: str = ",") -> list[RawBar]:
    """Read a bar file; rows must be strictly increasing in time."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    text = stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    if tuple(header) != COLUMNS:
        raise ParseError(f"expected header {','.join(COLUMNS)}", line=1)
    bars: list[RawBar] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(row)}", line=lineno)
        try:
            ts = parse_timestamp(row[0])
            values = [float(cell) for cell in row[1:]]
            if not all(math.isfinite(v) for v in values):
                raise ValueError("non-finite number")
            bar = RawBar(ts, *values)
            bar.validate()
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if bars and bar.timestamp <= bars[-1].timestamp:
            kind = "duplicate" if bar.timestamp == bars[-1].timestamp else "non-monotone"
            raise OrderingError(f"{kind} timestamp {row[0].strip()}", line=lineno)
        bars.append(bar)
    return bars


def write_bars(bars: Iterable[RawBar], stream: IO[str], precision: int = 10) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    fmt = f"{{:.{precision}g}}"
    for b in bars:
        writer.writerow([format_timestamp(b.timestamp)] + [fmt.format(getattr(b, c)) for c in COLUMNS[1:]])


def _filler(template: RawBar, ts: dt.datetime) -> RawBar:
    """Flat zero-volume bar at ``template``'s close."""
    bc, ac = template.bid_close, template.ask_close
    return RawBar(ts, bc, bc, bc, bc, ac, ac, ac, ac, 0.0, 0.0)


def slice_sessions(
    bars: list[RawBar], min_bars: int = 1000, report: SliceReport | None = None
) -> list[list[RawBar]]:
    """Group bars into complete UTC days, filling gaps with carried-forward closes.

    Minutes before the first real bar of a day take that bar's close, since
    sessions never borrow data from the previous day.
    """
    if report is None:
        report = SliceReport()
    by_day: dict[dt.date, list[RawBar]] = {}
    for bar in bars:
        by_day.setdefault(bar.timestamp.date(), []).append(bar)
    groups = []
    for day in sorted(by_day):
        real = by_day[day]
        if len(real) < min_bars:
            report.dropped[day] = len(real)
            log.info("dropping %s: %d real bars < %d", day, len(real), min_bars)
            continue
        start = dt.datetime.combine(day, dt.time(0, 0), tzinfo=_UTC)
        slots: list[RawBar | None] = [None] * MINUTES_PER_SESSION
        for bar in real:
            slots[(bar.timestamp - start) // dt.timedelta(minutes=1)] = bar
        last = real[0]
        filled = 0
        out = []
        for i, bar in enumerate(slots):
            if bar is None:
                bar = _filler(last, start + dt.timedelta(minutes=i))
                filled += 1
            out.append(bar)
            last = bar
        report.kept.append(day)
        if filled:
            report.filled[day] = filled
        groups.append(out)
    return groups


def normalize_session(group: list[RawBar], pair: str = "EURUSD") -> Session:
    if len(group) != MINUTES_PER_SESSION:
        raise ValueError(f"session needs {MINUTES_PER_SESSION} bars, got {len(group)}")
    bid = np.array([b.bid_close for b in group])
    ask = np.array([b.ask_close for b in group])
    vb = np.array([b.bid_volume for b in group])
    va = np.array([b.ask_volume for b in group])
    total = vb.sum() + va.sum()
    if not total > 0.0:
        raise DegenerateSessionError(f"session {group[0].timestamp.date()} has no volume")
    return _make_session(pair, group[0].timestamp.date(), bid, ask, vb, va, total)


def _make_session(pair, date, bid, ask, vb, va, total=None) -> Session:
    mid = 0.5 * (bid + ask)
    ref = mid[0]
    if total is None:
        total = vb.sum() + va.sum()
    p_mid, p_bid, p_ask = mid / ref, bid / ref, ask / ref
    v_bid, v_ask = vb / total, va / total
    bars = [
        NormalizedBar(float(a), float(b), float(c), float(d), float(e))
        for a, b, c, d, e in zip(p_mid, p_bid, p_ask, v_bid, v_ask)
    ]
    return Session(pair, date, bars)


def renormalize(session: Session) -> Session:
    """Apply the normalization to an already-normalized session."""
    return _make_session(
        session.pair, session.date,
        session.column("p_bid"), session.column("p_ask"),
        session.column("v_bid"), session.column("v_ask"),
    )


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_sessions: int = 780
    daily_vol: float = 0.10  # annualized, despite the name
    half_spread_bp: float = 0.5
    volume_concentration: float = 1.0
    intraday_profile: bool = True
    pair: str = "SYNTH"
    start: dt.date = dt.date(2021, 1, 4)

    def __post_init__(self):
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be positive")
        if self.daily_vol < 0 or self.half_spread_bp < 0:
            raise ValueError("daily_vol and half_spread_bp must be nonnegative")
        if not self.volume_concentration > 0:
            raise ValueError("volume_concentration must be positive")


def _business_days(start: dt.date, n: int) -> list[dt.date]:
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def intraday_activity(minutes: np.ndarray) -> np.ndarray:
    """Relative FX trading intensity by UTC minute of day, mean one.

    A quiet floor with bumps at the London open and the London/New York
    overlap, the usual shape of spot FX volume.
    """
    h = minutes / 60.0
    level = 0.25 + 1.0 * np.exp(-0.5 * ((h - 8.0) / 1.5) ** 2) + 1.4 * np.exp(-0.5 * ((h - 14.5) / 2.0) ** 2)
    return level / level.mean()


def _synth_arrays(cfg: SynthConfig, index: int) -> tuple[np.ndarray, ...]:
    """Natural-unit (bid, ask, bid volume, ask volume) for one synthetic day."""
    rng = np.random.default_rng([cfg.seed, index])
    n = MINUTES_PER_SESSION
    sigma = cfg.daily_vol / math.sqrt(TRADING_DAYS_PER_YEAR * n)
    steps = rng.standard_normal(n - 1) * sigma - 0.5 * sigma * sigma
    log_mid = np.concatenate(([0.0], np.cumsum(steps)))
    mid = np.exp(log_mid)
    half = cfg.half_spread_bp * 1e-4
    # per side-minute volume: gamma(concentration) noise times the intraday profile
    shape = cfg.volume_concentration
    vb = rng.gamma(shape, 1.0, n)
    va = rng.gamma(shape, 1.0, n)
    if cfg.intraday_profile:
        activity = intraday_activity(np.arange(n, dtype=float))
        vb *= activity
        va *= activity
    return mid * (1.0 - half), mid * (1.0 + half), vb, va


def synth_sessions(cfg: SynthConfig) -> list[Session]:
    """Deterministic synthetic normalized sessions; each day has its own sub-seed."""
    out = []
    for i, day in enumerate(_business_days(cfg.start, cfg.n_sessions)):
        bid, ask, vb, va = _synth_arrays(cfg, i)
        out.append(_make_session(cfg.pair, day, bid, ask, vb, va))
    return out


def synth_bars(cfg: SynthConfig, base_price: float = 1.2, volume_scale: float = 1e6) -> list[RawBar]:
    """Synthetic sessions in natural units, suitable for writing to a bar file."""
    bars = []
    for i, day in enumerate(_business_days(cfg.start, cfg.n_sessions)):
        bid, ask, vb, va = _synth_arrays(cfg, i)
        start = dt.datetime.combine(day, dt.time(0, 0), tzinfo=_UTC)
        for k in range(MINUTES_PER_SESSION):
            b, a = float(bid[k] * base_price), float(ask[k] * base_price)
            bars.append(RawBar(
                start + dt.timedelta(minutes=k), b, b, b, b, a, a, a, a,
                float(vb[k] * volume_scale), float(va[k] * volume_scale),
            ))
    return bars
