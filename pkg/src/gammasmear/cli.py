"""Command-line front end.

Every run prints its effective configuration as one JSON line on stderr
(prefixed ``effective-config:``). ``--save-config FILE`` also writes it to
a file. ``gammasmear --replay FILE`` repeats a saved run.

Exit codes: 0 success, 2 input error, 3 numerical-convergence failure,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distfit import GammaParams, collapse_density, collapse_ks, compare_models, fit_chi
from .hedge import backtest
from .measure import (MeasureParams, characteristic_time, cumulants, edgeworth_tail_report,
                      measure_density)
from .pricing import (OptionContract, SeriesControl, calibrate, option_price,
                      price_quadrature)
from .quadrature import QuadratureError
from .sdesim import SdeConfig, SimulationUnstable, simulate_variance, simulate_volatility, \
    stationary_check
from .volest import MarketSeries, log_returns, normalized_returns, windowed_volatility

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4
CONFIG_ENV = "GAMMASMEAR_CONFIG_DIR"
UNITS = ("# units: time in trading days (dt0 = 1 day); variance per trading day; "
         "rates per trading day")


class InputError(ValueError):
    """Malformed or missing input."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


# ------------------------------------------------------------------- ingestion

def resolve_path(path: str | os.PathLike, must_exist: bool = True) -> Path:
    """Existing relative paths win; otherwise try the config directory."""
    p = Path(path)
    if p.exists() or p.is_absolute() or not must_exist:
        if must_exist and not p.exists():
            raise InputError(f"file not found: {p}")
        return p.resolve() if p.exists() else p
    base = os.environ.get(CONFIG_ENV)
    if base and (Path(base) / p).exists():
        return (Path(base) / p).resolve()
    raise InputError(f"file not found: {p}")


def _data_lines(fh):
    for lineno, line in enumerate(fh, 1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def _read_csv(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(resolve_path(path), newline="") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in next(csv.reader([lines[0][1]]))]
    rows = [(n, [c.strip() for c in next(csv.reader([ln]))]) for n, ln in lines[1:]]
    return header, rows


def ingest_prices(path, trading_day_length: int | None = None) -> MarketSeries:
    """Read a ``timestamp,price`` CSV with ISO-8601 timestamps."""
    header, rows = _read_csv(path)
    if header[:2] != ["timestamp", "price"]:
        raise InputError(f"{path}: header must be 'timestamp,price', got {','.join(header)!r}")
    ts, px = [], []
    for lineno, row in rows:
        if len(row) < 2:
            raise InputError(f"{path}:{lineno}: expected 2 fields")
        try:
            t = np.datetime64(row[0])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from exc
        try:
            p = float(row[1])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad price {row[1]!r}") from exc
        if not (math.isfinite(p) and p > 0):
            raise InputError(f"{path}:{lineno}: price must be > 0, got {row[1]!r}")
        if ts and not t > ts[-1]:
            raise InputError(f"{path}:{lineno}: timestamps must increase ({row[0]} after {ts[-1]})")
        ts.append(t)
        px.append(p)
    if len(px) < 2:
        raise InputError(f"{path}: need at least 2 prices")
    return MarketSeries(np.array(ts), np.array(px), trading_day_length=trading_day_length)


def read_column(path, column: str | None = None) -> np.ndarray:
    """One numeric column of a CSV (the last one by default)."""
    header, rows = _read_csv(path)
    idx = len(header) - 1 if column is None else header.index(column) if column in header else None
    if idx is None:
        raise InputError(f"{path}: no column {column!r}")
    vals = []
    for lineno, row in rows:
        try:
            vals.append(float(row[idx]))
        except (ValueError, IndexError) as exc:
            raise InputError(f"{path}:{lineno}: bad value") from exc
    return np.array(vals)


def read_json(path) -> dict:
    with open(resolve_path(path)) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc


def params_from_dict(d: dict) -> GammaParams:
    """Accepts ``mu`` with ``delta`` or ``nu``, or ``vbar`` with ``delta``."""
    try:
        if "mu" in d and "nu" in d:
            return GammaParams(float(d["mu"]), float(d["nu"]))
        if "mu" in d and "delta" in d:
            return GammaParams.from_mu_delta(float(d["mu"]), float(d["delta"]))
        if "vbar" in d and "delta" in d:
            return GammaParams.from_vbar_delta(float(d["vbar"]), float(d["delta"]))
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad parameters: {exc}") from exc
    raise InputError("parameters need mu with delta or nu, or vbar with delta")


def _per_day(rate: float, args) -> float:
    return rate / args.trading_days_per_year


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dump_json(obj, path=None) -> None:
    if isinstance(obj, dict) and "units" not in obj:
        obj = {**obj, "units": UNITS[len("# units: "):]}
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _write_csv(path, header: list[str], rows, units: str = UNITS) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        fh.write(units + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


# ----------------------------------------------------------------- subcommands

def cmd_estimate_vol(args) -> int:
    series = ingest_prices(args.prices)
    r = log_returns(series)
    if args.normalize:
        if not args.ntd:
            raise InputError("--normalize needs --ntd")
        r = normalized_returns(r, args.ntd)
    sig = windowed_volatility(r, args.window)
    ts = series.timestamps[: sig.size]
    _write_csv(args.output, ["eta", "timestamp", "volatility"],
               ((i, str(t), float(s)) for i, (t, s) in enumerate(zip(ts, sig))))
    return EXIT_OK


def cmd_fit_dist(args) -> int:
    vals = read_column(args.input, args.column)
    if args.variance:
        vals_var = vals
        main = compare_models(vals)
    else:
        vals_var = vals**2
        main = {"chi": fit_chi(vals)}
        main.update({f"{k}_variance": v for k, v in compare_models(vals_var).items()})
    out = {k: v.to_dict() for k, v in main.items()}
    if args.scale_collapse:
        T = float(args.scale_collapse)
        unit = GammaParams(main["gamma" if args.variance else "gamma_variance"].params.mu / T,
                           main["gamma" if args.variance else "gamma_variance"].params.nu / T)
        xs, ys = collapse_density(vals_var, T, unit)
        out["collapse"] = {"T": T, "ks": collapse_ks(vals_var, T, unit)}
        if args.collapse_output:
            _write_csv(args.collapse_output, ["v_tr", "scaled_density", "exp_minus_v_tr"],
                       ((float(a), float(b), math.exp(-a)) for a, b in zip(xs, ys)))
    _dump_json(out, args.output)
    return EXIT_OK


def _contract_from_args(args) -> OptionContract:
    return OptionContract(args.spot, args.strike, _per_day(args.rate, args), args.days, args.kind)


def _params_from_args(args) -> GammaParams:
    if args.vbar is not None:
        return GammaParams.from_vbar_delta(args.vbar, args.delta)
    if args.mu is None:
        raise InputError("give --mu or --vbar")
    return GammaParams.from_mu_delta(args.mu, args.delta)


def cmd_price(args) -> int:
    c = _contract_from_args(args)
    p = _params_from_args(args)
    if args.oracle:
        res = price_quadrature(c, p)
    else:
        res = option_price(c, p, SeriesControl(max_terms=args.terms))
    if not (math.isfinite(res.price) and res.price >= -1e-9 * c.strike):
        raise InvariantError(f"price {res.price} is negative or not finite")
    out = res.to_dict()
    out["contract"] = {"spot": c.spot, "strike": c.strike, "r_per_day": c.r_W, "days": c.t,
                       "kind": c.kind}
    out["params"] = p.to_dict()
    _dump_json(out, args.output)
    return EXIT_OK


def _contract_days(contract: dict, series: MarketSeries) -> float:
    if "days" in contract:
        return float(contract["days"])
    if "expiry" in contract:
        start = np.datetime64(series.timestamps[0], "D")
        return float(np.busday_count(start, np.datetime64(contract["expiry"], "D")))
    raise InputError("contract needs 'days' or 'expiry'")


def cmd_hedge_backtest(args) -> int:
    series = ingest_prices(args.prices)
    contract = read_json(args.contract)
    p = params_from_dict(read_json(args.params))
    try:
        c = OptionContract(float(series.prices[0]), float(contract["strike"]),
                           _per_day(float(contract.get("rate", 0.0)), args),
                           _contract_days(contract, series), "call")
    except KeyError as exc:
        raise InputError(f"contract file lacks {exc}") from exc
    path = backtest(series, c, p, SeriesControl(max_terms=args.terms))
    if np.any(path.portfolio_values >= 0):
        # an explicit call hedge is strictly negative while Phi- > 0
        bad = path.portfolio_values >= 0
        if np.any(np.abs(path.portfolio_values[bad]) > 1e-9 * c.strike):
            raise InvariantError("hedged portfolio is non-negative")
    if args.output:
        path.to_csv(args.output, UNITS[len("# units: "):])
    summary = path.summary()
    summary["r_per_day"] = c.r_W
    summary["fitted_rate_annual"] = path.fitted_rate * args.trading_days_per_year
    _dump_json(summary, args.summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfgd = read_json(args.config)
    if args.seed is not None:
        cfgd["seed"] = args.seed
    if args.dump and not cfgd.get("record_every"):
        cfgd["record_every"] = 1
    try:
        cfg = SdeConfig.from_dict(cfgd)
    except TypeError as exc:
        raise InputError(f"bad simulation config: {exc}") from exc
    sim = simulate_variance if args.sde == "variance" else simulate_volatility
    ens = sim(cfg, workers=args.workers)
    if not np.all(ens.terminal > 0):
        raise InvariantError("non-positive path value")
    law = "gamma" if args.sde == "variance" else "chi"
    rep = stationary_check(ens.terminal, ens.target(), law)
    out = {"summary": ens.summary(), "stationary_check": rep.to_dict(),
           "target": ens.target().to_dict()}
    if args.histogram:
        edges, dens = ens.histogram(args.bins)
        _write_csv(args.histogram, ["left", "right", "density"],
                   zip(edges[:-1].tolist(), edges[1:].tolist(), dens.tolist()))
    if args.dump:
        n_paths, n_rec = ens.dump_paths(args.dump)
        out["dump"] = {"path": str(args.dump), "n_paths": n_paths, "n_records": n_rec,
                       "layout": "little-endian float64, path-major"}
    _dump_json(out, args.output)
    return EXIT_OK


def _quote_days(row, col, lineno, path) -> float:
    if "days" in col:
        return float(row[col["days"]])
    try:
        start = np.datetime64(row[col["date"]], "D")
        end = np.datetime64(row[col["expiry_date"]], "D")
    except ValueError as exc:
        raise InputError(f"{path}:{lineno}: bad date ({exc})") from exc
    return float(np.busday_count(start, end))


def read_quotes(path, args) -> list[tuple[OptionContract, float]]:
    """Quote CSV with ``date,spot,strike,expiry_date,observed_price,rate``.

    ``days`` may replace the two dates and ``price`` may replace
    ``observed_price``; an optional ``kind`` column selects call or put.
    Rates are annual; days to expiry are counted in business days.
    """
    header, rows = _read_csv(path)
    col = {h: i for i, h in enumerate(header)}
    if "observed_price" in col:
        col["price"] = col["observed_price"]
    need = ["spot", "strike", "rate", "price"]
    missing = [h for h in need if h not in col]
    if "days" not in col and not {"date", "expiry_date"} <= col.keys():
        missing.append("days or date+expiry_date")
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    out = []
    for lineno, row in rows:
        try:
            c = OptionContract(float(row[col["spot"]]), float(row[col["strike"]]),
                               _per_day(float(row[col["rate"]]), args),
                               _quote_days(row, col, lineno, path),
                               row[col["kind"]] if "kind" in col else "call")
            out.append((c, float(row[col["price"]])))
        except (ValueError, IndexError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return out


def cmd_calibrate(args) -> int:
    quotes = read_quotes(args.quotes, args)
    init = GammaParams.from_mu_delta(args.init_mu, args.init_delta)
    res = calibrate(quotes, init, SeriesControl(max_terms=args.terms), restarts=args.restarts)
    out = res.to_dict()
    out["n_quotes"] = len(quotes)
    _dump_json(out, args.output)
    return EXIT_OK if res.converged else EXIT_CONVERGENCE


def cmd_diagnose(args) -> int:
    p = params_from_dict(read_json(args.params))
    t_kurt, t_width = characteristic_time(p)
    cum = cumulants(p, 8)
    out = {
        "params": p.to_dict(),
        "t_star_kurtosis": t_kurt,
        "t_star_width": t_width,
        "cumulants": {str(k): v for k, v in cum.c.items()},
        "kappa4": cum.kappa4,
        "edgeworth": edgeworth_tail_report(args.days, cum),
    }
    if args.grid_output:
        mp = MeasureParams(p, _per_day(args.rate, args), args.days)
        sd = math.sqrt(p.vbar * args.days)
        xs = mp.r_W * mp.t + sd * np.linspace(-args.width, args.width, args.points)
        if mp.shape <= 0.5:
            xs = xs[np.abs(xs - mp.r_W * mp.t) > 1e-12]
        dens = measure_density(xs, mp)
        _write_csv(args.grid_output, ["dx", "density"], zip(xs.tolist(), np.atleast_1d(dens).tolist()))
    _dump_json(out, args.output)
    return EXIT_OK


COMMANDS = {
    "estimate-vol": cmd_estimate_vol,
    "fit-dist": cmd_fit_dist,
    "price": cmd_price,
    "hedge-backtest": cmd_hedge_backtest,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "diagnose": cmd_diagnose,
}


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammasmear", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--replay", metavar="FILE", help="re-run a saved effective config")
    ap.add_argument("--save-config", metavar="FILE", help="also write the effective config here")
    ap.add_argument("--trading-days-per-year", type=float, default=252.0)
    # the same options after the subcommand; SUPPRESS keeps the values given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--save-config", metavar="FILE", default=argparse.SUPPRESS)
    common.add_argument("--trading-days-per-year", type=float, default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command")
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    s = sub.add_parser("estimate-vol", help="windowed volatility from prices")
    s.add_argument("--prices", required=True)
    s.add_argument("--window", type=int, required=True)
    s.add_argument("--normalize", action="store_true")
    s.add_argument("--ntd", type=int)
    s.add_argument("--output", default="-")

    s = sub.add_parser("fit-dist", help="Chi/Gamma and reference fits")
    s.add_argument("--input", required=True)
    s.add_argument("--column", default=None)
    s.add_argument("--variance", action="store_true", help="input holds variances")
    s.add_argument("--scale-collapse", type=float, default=None, metavar="T")
    s.add_argument("--collapse-output", default=None)
    s.add_argument("--output", default="-")

    s = sub.add_parser("price", help="price one option")
    s.add_argument("--spot", type=float, required=True)
    s.add_argument("--strike", type=float, required=True)
    s.add_argument("--rate", type=float, required=True, help="annual rate")
    s.add_argument("--days", type=float, required=True, help="trading days to expiry")
    s.add_argument("--mu", type=float, default=None)
    s.add_argument("--vbar", type=float, default=None, help="mean daily variance (instead of --mu)")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--kind", choices=("call", "put"), default="call")
    s.add_argument("--terms", type=int, default=25)
    s.add_argument("--oracle", action="store_true", help="force quadrature")
    s.add_argument("--output", default="-")

    s = sub.add_parser("hedge-backtest", help="delta-hedge backtest")
    s.add_argument("--prices", required=True)
    s.add_argument("--contract", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--terms", type=int, default=25)
    s.add_argument("--output", default=None, help="portfolio CSV")
    s.add_argument("--summary", default="-")

    s = sub.add_parser("simulate", help="SDE ensembles")
    s.add_argument("--sde", choices=("variance", "volatility"), required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--bins", type=int, default=60)
    s.add_argument("--histogram", default=None)
    s.add_argument("--dump", default=None, help="binary path dump")
    s.add_argument("--output", default="-")

    s = sub.add_parser("calibrate", help="fit (delta, mu) to option quotes")
    s.add_argument("--quotes", required=True)
    s.add_argument("--init-mu", type=float, required=True)
    s.add_argument("--init-delta", type=float, required=True)
    s.add_argument("--terms", type=int, default=80)
    s.add_argument("--restarts", type=int, default=3)
    s.add_argument("--output", default="-")

    s = sub.add_parser("diagnose", help="characteristic times, cumulants, density grid")
    s.add_argument("--params", required=True)
    s.add_argument("--days", type=float, default=1.0)
    s.add_argument("--rate", type=float, default=0.0, help="annual rate")
    s.add_argument("--grid-output", default=None)
    s.add_argument("--points", type=int, default=201)
    s.add_argument("--width", type=float, default=6.0, help="grid half-width in sd units")
    s.add_argument("--output", default="-")
    return ap


_PATH_ARGS = ("prices", "input", "contract", "params", "config", "quotes")
_META = ("replay", "save_config")


def effective_config(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in _META}
    for k in _PATH_ARGS:
        if d.get(k):
            d[k] = str(resolve_path(d[k]))
    return {"gammasmear": __version__, "args": d}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.replay:
            saved = read_json(args.replay)
            if "args" not in saved or "command" not in saved["args"]:
                raise InputError(f"{args.replay}: not an effective-config file")
            ns = vars(ap.parse_args([saved["args"]["command"]] + _required_stub(ap, saved["args"])))
            ns.update(saved["args"])
            ns["replay"], ns["save_config"] = None, args.save_config
            args = argparse.Namespace(**ns)
        if not args.command:
            ap.print_usage(sys.stderr)
            print("gammasmear: error: a subcommand is required", file=sys.stderr)
            return EXIT_INPUT
        cfg = effective_config(args)
        line = json.dumps(cfg, sort_keys=True)
        print(f"effective-config: {line}", file=sys.stderr)
        if args.save_config:
            Path(args.save_config).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        return COMMANDS[args.command](args)
    except InvariantError as exc:
        print(f"gammasmear: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError, KeyError, ZeroDivisionError) as exc:
        print(f"gammasmear: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationUnstable, QuadratureError, ArithmeticError) as exc:
        print(f"gammasmear: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def _required_stub(ap: argparse.ArgumentParser, saved: dict) -> list[str]:
    # satisfy required flags so argparse fills the defaults; saved values override
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[saved["command"]]
    out = []
    for a in sp._actions:
        if a.required and a.option_strings:
            val = saved.get(a.dest)
            if val is None:
                raise InputError(f"replay file lacks {a.dest}")
            out += [a.option_strings[0], str(val)]
    return out


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
