"""Command line: ``btboot {backtest,train,forecast,evaluate,simulate,diagnose}``.

Exit codes: 0 success, 2 configuration error, 3 file or data-format error,
4 numerical or degenerate-data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from .backtest import ResidualCollection, _json_default, run_backtest
from .config import RunConfig, load_config
from .dataset import Panel, load_panel, save_panel
from .evaluation.harness import MethodSpec, run_evaluation, standard_method
from .evaluation.synthetic import generate_synthetic
from .exceptions import BtbootError, ConfigError, DataError, DataIOError, SchemaError
from .pipeline import TrainedDFModel, forecast, quantile_frame, samples_frame, train
from .selector.diagnostics import dependence_report, selector_sanity_check
from .selector.selectors import make_selector

logger = logging.getLogger("btboot")

BOOTSTRAP_KEYS = ("formula", "B", "ratio_denominator", "seed", "delta")
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _parse_floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_override("bootstrap.seed", args.seed)
    if args.workers is not None:
        cfg = cfg.with_override("runtime.workers", args.workers)
    if getattr(args, "data", None):
        cfg = cfg.with_override("data.path", args.data)
    return cfg


def _provenance(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config": cfg.to_dict(), "overrides": dict(cfg.overrides), **extra}


def _load_data(cfg: RunConfig) -> Panel:
    if not cfg.data.path:
        raise ConfigError("data.path is required (set it in the config or pass --data)")
    return load_panel(cfg.data.path, cfg.data.schema())


def _out(args, default):
    return args.out or default


def cmd_backtest(args) -> int:
    cfg = _config(args)
    panel = _load_data(cfg)
    plan = cfg.backtest.plan(panel)
    coll = run_backtest(panel, cfg.model.build(), plan, seed=cfg.bootstrap.seed,
                        workers=cfg.runtime.resolved_workers())
    out = _out(args, "backtest_out")
    os.makedirs(out, exist_ok=True)
    coll.provenance.update(_provenance(cfg, "backtest"))
    coll.save(os.path.join(out, "residuals.csv"))
    print(f"wrote {len(coll)} residuals to {os.path.join(out, 'residuals.csv')}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    panel = _load_data(cfg)
    plan = cfg.backtest.plan(panel)
    model = train(panel, cfg.model.build(), plan, cfg.selector.kwargs(), cfg.bootstrap.build(),
                  workers=cfg.runtime.resolved_workers(), provenance={"run": _provenance(cfg, "train")})
    out = _out(args, "model_bundle")
    model.save(out)
    print(f"trained on {len(panel)} series with {len(model.collection)} residuals; bundle at {out}")
    return EXIT_OK


def _future_covariates(path, model: TrainedDFModel, cfg: RunConfig, horizon: int):
    names = list(model.history.covariate_names)
    if path is None:
        if names:
            raise ConfigError("--covariates is required: the model uses covariates " + ", ".join(names))
        return None, {sid: horizon for sid in model.history.ids}
    if not os.path.exists(path):
        raise DataIOError(f"covariates file not found: {path}")
    df = pd.read_csv(path, dtype={cfg.data.id_col: str}, float_precision="round_trip")
    need = [cfg.data.id_col, cfg.data.time_col, *names]
    missing = [c for c in need if c not in df.columns]
    if missing:
        raise SchemaError(f"covariates file lacks columns {missing}; expected {need}")
    grid = model.history.grid
    t = grid.to_index(df[cfg.data.time_col]) if grid.is_integer else _datetime_index(df[cfg.data.time_col], grid)
    df = df.assign(_t=t).sort_values([cfg.data.id_col, "_t"], kind="stable")
    out = {}
    for s in model.history:
        rows = df[(df[cfg.data.id_col] == s.id) & (df["_t"] > s.end)]
        ts = rows["_t"].to_numpy()
        expect = s.end + 1 + np.arange(horizon)
        if len(ts) < horizon or not np.array_equal(ts[:horizon], expect):
            raise SchemaError(
                f"series {s.id!r}: covariates must cover times {int(expect[0])}..{int(expect[-1])} "
                f"without gaps, found {len(ts)} rows"
            )
        X = rows[names].to_numpy(float)[:horizon]
        if np.isnan(X).any():
            raise DataError(f"series {s.id!r}: missing future covariate values")
        out[s.id] = X
    return out, {sid: horizon for sid in out}


def _datetime_index(values, grid):
    ts = pd.to_datetime(values, errors="coerce")
    if ts.isna().any():
        raise DataError("unparseable timestamps in covariates file")
    steps = (ts - pd.Timestamp(grid.origin)) / grid._step()
    return steps.to_numpy().astype(np.int64)


def cmd_forecast(args) -> int:
    cfg = _config(args)
    if args.taus is not None:
        cfg = cfg.with_override("forecast.taus", _parse_floats(args.taus, "--taus"))
    if args.horizon is not None:
        cfg = cfg.with_override("forecast.horizon", args.horizon)
    if args.formula is not None:
        cfg = cfg.with_override("bootstrap.formula", args.formula)
    if args.ratio_denominator is not None:
        cfg = cfg.with_override("bootstrap.ratio_denominator", args.ratio_denominator)
    if args.B is not None:
        cfg = cfg.with_override("bootstrap.B", args.B)
    if not os.path.isdir(args.bundle):
        raise DataIOError(f"model bundle not found: {args.bundle}")
    model = TrainedDFModel.load(args.bundle)
    # bundle settings apply unless a flag overrides them
    bcfg = replace(model.bootstrap, **{k: getattr(cfg.bootstrap, k) for k in BOOTSTRAP_KEYS
                                       if f"bootstrap.{k}" in cfg.overrides})
    fc, horizons = _future_covariates(args.covariates, model, cfg, cfg.forecast.horizon)
    dfs = forecast(model, fc, horizons, bcfg)
    out = _out(args, "forecast.csv")
    table = quantile_frame(dfs, cfg.forecast.taus, model.history.grid)
    table.to_csv(out, index=False, float_format="%.17g")
    if args.samples or cfg.forecast.samples:
        samples_frame(dfs).to_csv(args.samples or os.path.splitext(out)[0] + ".samples.csv",
                                  index=False, float_format="%.17g")
    root = os.path.splitext(out)[0]
    _write_json(root + ".provenance.json",
                _provenance(cfg, "forecast", bundle=os.path.abspath(args.bundle), bootstrap=bcfg.to_dict()))
    print(f"wrote {len(table)} rows to {out}")
    return EXIT_OK


def _methods(cfg: RunConfig, names):
    sel = cfg.selector.kwargs()
    out = []
    for name in names:
        m = standard_method(name, selector=sel)
        if m.kind == "backtest":
            m = MethodSpec(m.name, m.kind, m.formula, cfg.bootstrap.ratio_denominator, sel, cfg.bootstrap.delta)
        out.append(m)
    return out


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.folds is not None:
        cfg = cfg.with_override("eval.n_folds", args.folds)
    if args.methods is not None:
        cfg = cfg.with_override("eval.methods", [m.strip() for m in args.methods.split(",") if m.strip()])
    oracle = None
    if cfg.data.path:
        panel = _load_data(cfg)
    else:
        data = generate_synthetic(cfg.simulate.spec(cfg.bootstrap.seed))
        panel, oracle = data.panel, data.oracle
    names = cfg.eval.methods
    if oracle is None and any(n.upper() == "ORACLE" for n in names):
        raise ConfigError("eval.methods: ORACLE needs simulated data (leave data.path unset)")
    report = run_evaluation(panel, cfg.model.build(), _methods(cfg, names),
                            cfg.eval_plan(cfg.runtime.resolved_workers()), oracle)
    out = _out(args, "evaluation.json")
    doc = report.to_dict(include_runtime=False)
    doc["provenance"] = _provenance(cfg, "evaluate", data_fingerprint=panel.fingerprint())
    _write_json(out, doc)
    report.rows.to_csv(os.path.splitext(out)[0] + ".csv", index=False, float_format="%.17g")
    logger.info("evaluation took %.1fs", report.runtime_seconds)
    for name in sorted(report.methods):
        print(f"{name}: mean ACE {report.methods[name]['mean_ace']:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    for flag, key in (("n_series", "n_series"), ("length", "length"), ("noise_kind", "noise_kind"),
                      ("sigma", "sigma"), ("trend", "trend"), ("bias", "bias"),
                      ("n_noise_covariates", "n_noise_covariates")):
        v = getattr(args, flag)
        if v is not None:
            cfg = cfg.with_override(f"simulate.{key}", v)
    data = generate_synthetic(cfg.simulate.spec(cfg.bootstrap.seed))
    out = _out(args, "synthetic.csv")
    save_panel(data.panel, out, cfg.data.schema())
    _write_json(os.path.splitext(out)[0] + ".spec.json",
                {**_provenance(cfg, "simulate"), "spec": data.spec.to_dict(),
                 "forecaster_offset": data.forecaster_offset})
    print(f"wrote {len(data.panel)} series to {out}")
    return EXIT_OK


DEFAULT_DIAG_FEATURES = ("horizon", "split_point", "target_time", "forecast")


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    coll = ResidualCollection.load(args.residuals)
    feats = list(args.features.split(",")) if args.features else [
        *DEFAULT_DIAG_FEATURES, *(f"extra.{k}" for k in coll.extra)]
    rep = dependence_report(coll, feats, cap=cfg.selector.cap, seed=cfg.bootstrap.seed,
                            workers=cfg.runtime.resolved_workers())
    sel = make_selector(**cfg.selector.kwargs()).fit(coll)
    doc = {
        "dependence": rep.to_dict(),
        "sanity_check": selector_sanity_check(sel, coll),
        "provenance": _provenance(cfg, "diagnose", residuals=os.path.abspath(args.residuals)),
    }
    out = _out(args, "diagnostics.json")
    _write_json(out, doc)
    for row in rep.correlations:
        print(f"{row['feature']}: dcor {row['dcor']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML run configuration")
    common.add_argument("--seed", type=int, help="override bootstrap.seed")
    common.add_argument("--workers", type=int, help="override runtime.workers")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="btboot", description="Backtest-based bootstrap distribution forecasts")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("backtest", parents=[common], help="harvest predictive residuals")
    s.add_argument("--data", help="override data.path")
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("train", parents=[common], help="backtest, fit selector and model, write a bundle")
    s.add_argument("--data", help="override data.path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("forecast", parents=[common], help="quantile forecasts from a trained bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--covariates", help="long-format CSV of future covariates")
    s.add_argument("--horizon", type=int)
    s.add_argument("--taus", help="comma-separated quantile levels")
    s.add_argument("--formula", choices=["additive", "multiplicative"])
    s.add_argument("--ratio-denominator", choices=["backtest_forecast", "observed_response"])
    s.add_argument("--B", type=int)
    s.add_argument("--samples", help="also write raw bootstrap samples here")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("evaluate", parents=[common], help="nested evaluation backtest")
    s.add_argument("--data", help="override data.path; without data a synthetic panel is simulated")
    s.add_argument("--folds", type=int)
    s.add_argument("--methods", help="comma-separated subset of BA,BM,FR,FM,ORACLE")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic panel")
    s.add_argument("--n-series", type=int)
    s.add_argument("--length", type=int)
    s.add_argument("--noise-kind")
    s.add_argument("--sigma", type=float)
    s.add_argument("--trend", type=float)
    s.add_argument("--bias", type=float)
    s.add_argument("--n-noise-covariates", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("diagnose", parents=[common], help="dependence ranking and selector KS checks")
    s.add_argument("--residuals", required=True)
    s.add_argument("--features", help="comma-separated meta features")
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BtbootError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
