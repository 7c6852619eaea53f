"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .econo import GarchParams
from .errors import ConfigError, DataError, NumericalError
from .harness.backtest import rolling_forecast
from .harness.config import DEFAULT_GRID, load_config
from .harness.experiment import (
    SIM_EPOCH,
    fit_for,
    leaderboard_rows,
    load_dataset,
    run_experiment,
    run_grid,
    split_points,
    stage,
    write_outputs,
)
from .harness.models import load_model
from .rvpipe import RvSeries, daily_realized_vol, load_prices, write_rv_csv
from .simgen import simulate_garch11, simulate_rv_from_path

log = logging.getLogger("sigmavol")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _config(args):
    with stage("config"):
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    return cfg


def cmd_rv(args):
    with stage("rv"):
        series = daily_realized_vol(load_prices(args.prices), args.min_obs)
        write_rv_csv(series, args.out)
    log.info("wrote %d days to %s", len(series), args.out)


def cmd_simulate(args):
    with stage("simulate"):
        p = GarchParams(args.omega, args.alpha, args.beta)
        path = simulate_garch11(p, args.n, args.seed, args.burn_in)
        rv = simulate_rv_from_path(path, args.rv_noise)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dates = SIM_EPOCH + np.arange(args.n)
        write_rv_csv(RvSeries(dates, rv, path.returns), out / "rv.csv")
        with open(out / "sigma.csv", "w") as fh:
            fh.write("date,sigma2\n")
            for d, s in zip(dates, path.true_sigma2):
                fh.write(f"{d},{format(s, '.17g')}\n")
    log.info("wrote simulated path of length %d to %s", args.n, args.out)


def cmd_fit(args):
    cfg = _config(args)
    with stage("ingest"):
        data = load_dataset(cfg)
    with stage("split"):
        train_end, _ = split_points(cfg, len(data))
    with stage("fit"):
        model = fit_for(cfg, data, train_end)
    Path(args.out).write_text(model.export())
    log.info("fitted %s on %d points -> %s", model.name, train_end, args.out)


def cmd_forecast(args):
    cfg = _config(args)
    with stage("ingest"):
        data = load_dataset(cfg)
        model = load_model(args.params)
    with stage("forecast"):
        report = rolling_forecast(model, data, cfg.split.n_test, target=cfg.target, config=cfg.echo())
    write_outputs(args.out, report, [])
    print(json.dumps({"model": report.model, "mse": report.mse, "rmse": report.rmse}))


def cmd_grid(args):
    cfg = _config(args)
    if not cfg.grid:
        cfg = dataclasses.replace(cfg, grid=dict(DEFAULT_GRID)).validate()
    with stage("ingest"):
        data = load_dataset(cfg)
    with stage("split"):
        train_end, val_end = split_points(cfg, len(data))
    with stage("grid"):
        result = run_grid(cfg, data, train_end, val_end)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"best_index": result.best_index, "leaderboard": leaderboard_rows(result)}
    (out / "grid.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"best_index": result.best_index, "val_rmse": result.leaderboard[0].rmse}))


def cmd_run(args):
    cfg = _config(args)
    report = run_experiment(cfg, args.out)
    print(json.dumps({"model": report.model, "mse": report.mse, "rmse": report.rmse}))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sigmavol", description="Volatility forecasting experiments")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rv", help="prices CSV -> daily realized volatility CSV")
    p.add_argument("prices")
    p.add_argument("out")
    p.add_argument("--min-obs", type=int, default=30)
    p.set_defaults(func=cmd_rv)

    p = sub.add_parser("simulate", help="simulate a GARCH(1,1) path to rv.csv and sigma.csv")
    p.add_argument("--omega", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--beta", type=float, default=0.85)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--rv-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in [
        ("fit", cmd_fit, "fit the configured model on the training split and export it"),
        ("forecast", cmd_forecast, "rolling test-span forecast from exported parameters"),
        ("grid", cmd_grid, "grid search over the [grid] table, or a default grid when absent"),
        ("run", cmd_run, "full experiment from a config file"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", required=True)
        if name == "forecast":
            p.add_argument("--params", required=True)
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
