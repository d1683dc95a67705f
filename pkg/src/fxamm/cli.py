"""Command-line front end: ``fxamm {quote,simulate,sweep,gen-data}``.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 I/O or parse
failure.  A config file (``--config``) holds ``key = value`` lines whose keys
are flag names without the leading dashes; explicit flags win over it.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analytics import (
    DIST_COLUMNS, REGRESSION_COLUMNS, SESSION_COLUMNS, dist_rows, regress_pnl, regression_rows,
    session_rows, successes, sweep, write_table,
)
from .arbitrage import ArbConfig
from .cfmm import CfmmRule, PoolState, RuleKind, Side, quote_exact_in, quote_exact_out
from .errors import FxAmmError, ParseError
from .market_data import (
    SliceReport, SynthConfig, normalize_session, parse_bars, slice_sessions, synth_bars,
    synth_sessions, write_bars,
)
from .simulator import SessionResult, SimConfig, run_session, run_batch, write_step_dump

log = logging.getLogger("fxamm")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2
BP = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _pool_flags(p: argparse.ArgumentParser, multi_alpha: bool = False) -> None:
    g = p.add_argument_group("pool")
    g.add_argument("--rule", choices=[k.value for k in RuleKind], default="mixed")
    if multi_alpha:
        g.add_argument("--alpha", type=_floats, default=[5.0], help="comma-separated list")
    else:
        g.add_argument("--alpha", type=float, default=5.0)
    g.add_argument("--fee-bp", type=float, default=1.0)


def _sim_flags(p: argparse.ArgumentParser) -> None:
    _pool_flags(p)
    g = p.add_argument_group("simulation")
    g.add_argument("--arb-fee-bp", type=float, default=0.0)
    g.add_argument("--liquidity", type=float, default=1.0, help="pool liquidity multiple")
    g.add_argument("--no-arb", action="store_true")
    g.add_argument("--joint-orders", action="store_true",
                   help="quote both client orders on the same lagged state and apply jointly")
    g.add_argument("--arb-sizing", choices=["lagged", "current"], default="lagged")
    g.add_argument("--threads", type=int, default=1)
    _data_flags(p)


def _data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--input", help="bar file; omit with --synthetic")
    g.add_argument("--pair", default=None)
    g.add_argument("--min-bars", type=int, default=1000)
    _synth_flags(g)


def _synth_flags(g) -> None:
    g.add_argument("--synthetic", action="store_true")
    g.add_argument("--sessions", type=int, default=780)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--daily-vol", type=float, default=0.10, help="annualized volatility of the mid")
    g.add_argument("--half-spread-bp", type=float, default=0.5)
    g.add_argument("--volume-concentration", type=float, default=1.0)
    g.add_argument("--flat-volume", action="store_true", help="no intraday activity profile")


def _out_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="output file (default stdout)")
    p.add_argument("--json", action="store_true", help="emit JSON records instead of CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fxamm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fxamm {__version__}")
    parser.add_argument("--config", help="key = value file mirroring flag names")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quote", help="bid/ask rates versus order size")
    _pool_flags(q, multi_alpha=True)
    q.add_argument("--p0", type=float, default=1.25, help="initial FX rate; also the rule's s")
    q.add_argument("--n0", type=float, default=10000.0, help="foreign notional; x0 = p0*n0, y0 = n0")
    q.add_argument("--sizes", default="1:100:1", help="start:stop:step or comma list")
    _out_flags(q)

    s = sub.add_parser("simulate", help="run sessions and emit the per-session table")
    _sim_flags(s)
    s.add_argument("--dump", help="per-minute step table for one session")
    s.add_argument("--dump-session", type=int, default=0)
    s.add_argument("--regression", help="write the P&L regression table here")
    s.add_argument("--volvar-mode", choices=["difference", "sum", "sides"], default="difference")
    _out_flags(s)

    w = sub.add_parser("sweep", help="distributions of key variables across a parameter axis")
    _sim_flags(w)
    w.add_argument("--axis", choices=["alpha", "fee", "liquidity"], required=True)
    w.add_argument("--values", type=_floats, required=True, help="fee values are in bp")
    _out_flags(w)

    g = sub.add_parser("gen-data", help="write a synthetic bar file")
    _synth_flags(g)
    g.add_argument("--base-price", type=float, default=1.2)
    g.add_argument("--precision", type=int, default=17, help="significant digits written (17 round-trips exactly)")
    g.add_argument("--output", "-o", help="bar file (default stdout)")
    return parser


def read_config(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, value = (t.strip() for t in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    conf = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in conf.items():
        if key not in actions:
            raise UsageError(f"config key {key!r} is not a flag of '{args.command}'")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction,)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}")
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- helpers -----------------------------------------------------------------

def _rule(args, alpha: float | None = None, s: float = 1.0) -> CfmmRule:
    a = args.alpha if alpha is None else alpha
    return CfmmRule(RuleKind(args.rule), a if args.rule == "mixed" else 0.0, s)


def sim_config(args) -> SimConfig:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return SimConfig(
        rule=_rule(args),
        fee=args.fee_bp * BP,
        arb_fee=args.arb_fee_bp * BP,
        liquidity_multiple=args.liquidity,
        arb_enabled=not args.no_arb,
        arb=ArbConfig(arb_fee=args.arb_fee_bp * BP),
        joint_orders=args.joint_orders,
        arb_sizing=args.arb_sizing,
    )


def synth_config(args, pair: str | None = None) -> SynthConfig:
    return SynthConfig(
        seed=args.seed, n_sessions=args.sessions, daily_vol=args.daily_vol,
        half_spread_bp=args.half_spread_bp, volume_concentration=args.volume_concentration,
        intraday_profile=not args.flat_volume, pair=pair or "SYNTH",
    )


def load_sessions(args) -> tuple[list, dict]:
    """Sessions plus a description of where they came from (for the manifest)."""
    if args.synthetic == bool(args.input):
        raise UsageError("give exactly one of --input FILE or --synthetic")
    if args.synthetic:
        cfg = synth_config(args, args.pair)
        return synth_sessions(cfg), {"synthetic": _jsonable(dataclasses.asdict(cfg))}
    data = Path(args.input).read_bytes()
    bars = parse_bars(io.BytesIO(data))
    report = SliceReport()
    groups = slice_sessions(bars, min_bars=args.min_bars, report=report)
    for day, count in report.dropped.items():
        log.warning("dropped %s (%d real bars)", day, count)
    pair = args.pair or Path(args.input).stem
    sessions = [normalize_session(g, pair) for g in groups]
    if not sessions:
        raise UsageError(f"{args.input}: no session has at least {args.min_bars} bars")
    source = {
        "input": Path(args.input).name,
        "input_sha256": hashlib.sha256(data).hexdigest(),
        "sessions_dropped": {str(k): v for k, v in report.dropped.items()},
    }
    return sessions, source


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return str(obj)


def _render(rows, columns, as_json: bool) -> str:
    buf = io.StringIO()
    if as_json:
        records = [{c: _jsonable(r.get(c)) for c in columns} for r in rows]
        json.dump(records, buf, indent=1, sort_keys=False)
        buf.write("\n")
    else:
        write_table(rows, columns, buf)
    return buf.getvalue()


class _Outputs:
    """Collects written files so the manifest can list them."""

    def __init__(self):
        self.files: list[tuple[str, str]] = []

    def write(self, path: str | None, text: str) -> None:
        if path is None:
            sys.stdout.write(text)
            return
        Path(path).write_text(text)
        self.files.append((Path(path).name, hashlib.sha256(text.encode()).hexdigest()))

    def manifest(self, path: str | None, command: str, config: dict, source: dict | None) -> None:
        if path is None:
            return
        man = {
            "tool": "fxamm",
            "version": __version__,
            "command": command,
            "config": config,
            "source": source,
            "outputs": [{"file": f, "sha256": h} for f, h in self.files],
        }
        Path(f"{path}.manifest.json").write_text(json.dumps(_jsonable(man), indent=1, sort_keys=True) + "\n")


def _effective(args, drop=("config", "verbose", "threads", "output", "json", "dump", "regression")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop}


# --- commands ----------------------------------------------------------------

def _sizes(text: str) -> list[float]:
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise UsageError(f"--sizes expects start:stop:step, got {text!r}")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return _floats(text)


QUOTE_COLUMNS = ("rule", "alpha", "quote_side", "size", "utilization", "bid", "ask")


def quote_rows(rule_kind: str, alphas: Sequence[float], fee: float, p0: float, n0: float,
               sizes: Sequence[float]) -> list[dict]:
    """Bid/ask rates against order size for both token sides.

    The ``domestic`` side quotes domestic per foreign for foreign-sized orders;
    the ``foreign`` side quotes foreign per domestic for domestic-sized orders.
    """
    rows = []
    for alpha in (alphas if rule_kind == "mixed" else [0.0]):
        pool = PoolState.create(p0 * n0, n0, CfmmRule(RuleKind(rule_kind), alpha, p0), fee)
        for size in sizes:
            bid = quote_exact_in(pool, Side.REDEEM_DOMESTIC, size).amount_out / size
            ask = quote_exact_out(pool, Side.REDEEM_FOREIGN, size).amount_in / size
            rows.append(dict(rule=rule_kind, alpha=alpha, quote_side="domestic", size=size,
                             utilization=size / pool.y, bid=bid, ask=ask))
        for size in sizes:
            bid = quote_exact_in(pool, Side.REDEEM_FOREIGN, size).amount_out / size
            ask = quote_exact_out(pool, Side.REDEEM_DOMESTIC, size).amount_in / size
            rows.append(dict(rule=rule_kind, alpha=alpha, quote_side="foreign", size=size,
                             utilization=size / pool.x, bid=bid, ask=ask))
    return rows


def cmd_quote(args) -> int:
    sizes = _sizes(args.sizes)
    if not sizes or min(sizes) <= 0:
        raise UsageError("--sizes must be positive")
    rows = quote_rows(args.rule, args.alpha, args.fee_bp * BP, args.p0, args.n0, sizes)
    out = _Outputs()
    out.write(args.output, _render(rows, QUOTE_COLUMNS, args.json))
    out.manifest(args.output, "quote", _effective(args), None)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = sim_config(args)
    sessions, source = load_sessions(args)
    results = run_batch(sessions, cfg, threads=args.threads)
    out = _Outputs()
    out.write(args.output, _render(session_rows(sessions, results), SESSION_COLUMNS, args.json))
    if args.dump:
        i = args.dump_session
        if not 0 <= i < len(sessions):
            raise UsageError(f"--dump-session {i} out of range 0..{len(sessions) - 1}")
        buf = io.StringIO()
        write_step_dump(run_session(sessions[i], cfg, keep_steps=True), buf)
        out.write(args.dump, buf.getvalue())
    if args.regression:
        ok = [(s, r) for s, r in zip(sessions, results) if isinstance(r, SessionResult)]
        unhedged, hedged = regress_pnl([r for _, r in ok], [s for s, _ in ok], args.volvar_mode)
        out.write(args.regression, _render(regression_rows(unhedged, hedged), REGRESSION_COLUMNS, args.json))
    out.manifest(args.output, "simulate", _effective(args), source)
    failed = len(results) - len(successes(results))
    if failed:
        log.warning("%d of %d sessions failed", failed, len(results))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = sim_config(args)
    sessions, source = load_sessions(args)
    axis = {"liquidity": "liquidity_multiple"}.get(args.axis, args.axis)
    values = [v * BP for v in args.values] if args.axis == "fee" else args.values
    if args.axis == "alpha" and args.rule != "mixed":
        raise UsageError("--axis alpha requires --rule mixed")
    cells = sweep(sessions, cfg, axis, values, threads=args.threads)
    rows = dist_rows(cells)
    if args.axis == "fee":
        for row in rows:
            row["value"] = row["value"] / BP
    out = _Outputs()
    out.write(args.output, _render(rows, DIST_COLUMNS, args.json))
    out.manifest(args.output, "sweep", _effective(args), source)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = synth_config(args)
    buf = io.StringIO()
    write_bars(synth_bars(cfg, base_price=args.base_price), buf, precision=args.precision)
    out = _Outputs()
    out.write(args.output, buf.getvalue())
    out.manifest(args.output, "gen-data", _effective(args), {"synthetic": _jsonable(dataclasses.asdict(cfg))})
    return EXIT_OK


COMMANDS = {"quote": cmd_quote, "simulate": cmd_simulate, "sweep": cmd_sweep, "gen-data": cmd_gen_data}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except (ParseError, OSError) as exc:
        print(f"fxamm: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FxAmmError, ValueError) as exc:
        print(f"fxamm: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
