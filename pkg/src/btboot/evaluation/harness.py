"""Nested evaluation backtest for distribution-forecast methods.

Each evaluation fold splits the panel at a fold point ``J``. The residual
collection for that fold is built by a separate backtest that runs only on
the latter part of the training split, the point forecaster is refitted on
the whole training split, and every method forecasts the next ``horizon``
steps. Coverage is pooled over folds and series per ``(method, tau, horizon)``.
"""

from __future__ import annotations

import json
import math
import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import clone

from ..backtest import BacktestPlan, CovariatePerturbation, run_backtest
from ..bootstrap.baselines import baseline_fm, baseline_fr
from ..bootstrap.core import BootstrapConfig, check_tau
from ..bootstrap.forecast import forecast_distribution
from ..dataset import Panel, split_at
from ..exceptions import ConfigError, PlanSizingError
from ..selector.selectors import make_selector
from .metrics import ace, mape, pinball

METHOD_KINDS = ("backtest", "fr", "fm", "oracle")
DEFAULT_TAUS = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class EvalPlan:
    n_folds: int = 20
    horizon: int = 8
    taus: tuple = DEFAULT_TAUS
    nested_residual_fraction: float = 0.5
    backtest_step: int = 1
    residual_max_horizon: int | None = None
    first_fold: int | None = None
    seed: int = 0
    workers: int = 1
    bagging_stat: str = "median"
    fm_refits: int = 200
    B: int = 1000
    perturbation: CovariatePerturbation = field(default_factory=CovariatePerturbation)

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        check_tau(taus)
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ConfigError("eval taus must be strictly increasing")
        object.__setattr__(self, "taus", taus)
        if self.n_folds < 1 or self.horizon < 1:
            raise ConfigError("n_folds and horizon must be >= 1")
        if not 0 < self.nested_residual_fraction <= 1:
            raise ConfigError("nested_residual_fraction must lie in (0, 1]")

    def to_dict(self):
        d = asdict(self)
        d["perturbation"] = self.perturbation.to_dict()
        d["taus"] = list(self.taus)
        return d


@dataclass(frozen=True)
class MethodSpec:
    """One distribution-forecast method under evaluation.

    ``kind`` is ``backtest`` (BA/BM depending on ``formula``), ``fr``, ``fm``
    or ``oracle``; ``selector`` holds keyword arguments for
    :func:`~btboot.selector.make_selector`.
    """

    name: str
    kind: str = "backtest"
    formula: str = "additive"
    ratio_denominator: str = "backtest_forecast"
    selector: dict = field(default_factory=dict)
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigError(f"method kind must be one of {METHOD_KINDS}, got {self.kind!r}")

    def bootstrap_config(self, plan: EvalPlan) -> BootstrapConfig:
        return BootstrapConfig(self.formula, plan.B, self.ratio_denominator, plan.seed, self.delta)


def standard_method(name: str, selector: dict | None = None, **kw) -> MethodSpec:
    """BA, BM, FR or FM with the given selector settings."""
    sel = dict(selector or {})
    table = {
        "BA": dict(kind="backtest", formula="additive", selector=sel),
        "BM": dict(kind="backtest", formula="multiplicative", selector=sel),
        "FR": dict(kind="fr"),
        "FM": dict(kind="fm"),
        "ORACLE": dict(kind="oracle"),
    }
    try:
        base = table[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; expected one of {sorted(table)}") from None
    return MethodSpec(name=name, **{**base, **kw})


def fold_points(panel: Panel, plan: EvalPlan) -> list:
    """Evenly spaced fold points over the usable range."""
    last = panel.max_end - plan.horizon
    first = plan.first_fold
    if first is None:
        first = panel.min_start + (last - panel.min_start) // 2
    if last < first or first <= panel.min_start:
        raise PlanSizingError(
            f"panel span [{panel.min_start}, {panel.max_end}] is too short for horizon "
            f"{plan.horizon}: first fold {first}, last fold {last}"
        )
    pts = np.unique(np.round(np.linspace(first, last, plan.n_folds)).astype(int))
    if len(pts) < plan.n_folds:
        raise PlanSizingError(
            f"n_folds={plan.n_folds} exceeds the {last - first + 1} usable fold positions "
            f"between {first} and {last}"
        )
    return [int(p) for p in pts]


def nested_start(train: Panel, J: int, fraction: float) -> int:
    """First split point of the residual backtest inside the training split."""
    span = J - train.min_start + 1
    a = J - int(math.floor(fraction * span)) + 1
    a = max(a, train.min_start)
    if a > J - 1:
        raise PlanSizingError(f"training split ending at {J} leaves no room for a residual backtest")
    return a


def fold_artifacts(panel: Panel, forecaster, J: int, plan: EvalPlan, need_residuals=True):
    """Training split, nested residual collection and refitted model for fold ``J``.

    Nothing here reads observations after ``J``.
    """
    train, _ = split_at(panel, J)
    coll = None
    if need_residuals:
        rmh = plan.residual_max_horizon
        if rmh is None:
            rmh = 1 if forecaster.kind == "iterative" else plan.horizon
        bplan = BacktestPlan(nested_start(train, J, plan.nested_residual_fraction),
                             plan.backtest_step, rmh, plan.perturbation)
        coll = run_backtest(train, forecaster, bplan, seed=plan.seed)
    fitted = clone(forecaster).fit(train)
    return train, coll, fitted


def _run_fold(panel, forecaster, methods, plan, oracle, fold, J):
    need = any(m.kind == "backtest" for m in methods)
    train, coll, fitted = fold_artifacts(panel, forecaster, J, plan, need)
    min_len = forecaster.min_train_length
    hist = train.replace_series(
        s for s in train if len(s) >= min_len and panel[s.id].end > J
    )
    hmap = {s.id: min(plan.horizon, panel[s.id].end - J) for s in hist}
    fcov = {sid: panel[sid].X[J + 1 - panel[sid].start: J + 1 + k - panel[sid].start] for sid, k in hmap.items()}
    taus = np.array(plan.taus)
    rows = []
    for m in methods:
        if m.kind == "oracle":
            if oracle is None:
                raise ConfigError("oracle method requested without an oracle")
            pf_map = {}
            for s in hist:
                for h in range(1, hmap[s.id] + 1):
                    t = J + h
                    q = np.array([oracle.quantile(s.id, t, h, tau) for tau in taus])
                    med = oracle.quantile(s.id, t, h, 0.5)
                    pf_map[(s.id, t)] = (h, q, med)
            dfs = None
        else:
            cfg = m.bootstrap_config(plan)
            if m.kind == "backtest":
                sel = make_selector(**m.selector).fit(coll)
                dfs = forecast_distribution(fitted, hist, sel, coll, cfg, hmap, fcov)
            elif m.kind == "fr":
                dfs = baseline_fr(forecaster, hist, cfg, hmap, fcov, fitted=fitted)
            else:
                dfs = baseline_fm(forecaster, hist, cfg, hmap, plan.fm_refits, fcov, fitted=fitted)
        pfs = {}
        if dfs is None:
            items = [(sid, t, h, q, med) for (sid, t), (h, q, med) in pf_map.items()]
        else:
            items = [(d.series_id, d.time, d.horizon, d.quantile(taus), d.bagging(plan.bagging_stat)) for d in dfs]
            pfs = {(d.series_id, d.time): d.point_forecast for d in dfs}
        for sid, t, h, q, bag in items:
            s = panel[sid]
            truth = float(s.y[t - s.start])
            pf = pfs.get((sid, t), bag)
            rows.append((fold, J, m.name, sid, int(t), int(h), truth, float(pf), float(bag), *map(float, q)))
    return rows


@dataclass
class EvalReport:
    plan: dict
    fold_points: list
    methods: dict
    points: pd.DataFrame
    rows: pd.DataFrame
    runtime_seconds: float = 0.0

    def mean_ace(self, method: str) -> float:
        return self.methods[method]["mean_ace"]

    def to_dict(self, include_runtime=True) -> dict:
        d = {
            "plan": self.plan,
            "fold_points": self.fold_points,
            "n_folds": len(self.fold_points),
            "n_scored_points": int(self.points.groupby("method").size().min()) if len(self.points) else 0,
            "methods": self.methods,
        }
        if include_runtime:
            d["runtime_seconds"] = self.runtime_seconds
        return d

    def save(self, json_path, csv_path=None):
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        if csv_path:
            self.rows.to_csv(csv_path, index=False, float_format="%.17g")


def _summarise(points: pd.DataFrame, taus, horizon_max) -> tuple:
    qcols = [f"q_{t:g}" for t in taus]
    methods = {}
    flat = []
    for name, g in sorted(points.groupby("method", sort=True), key=lambda kv: kv[0]):
        y = g["truth"].to_numpy()
        co_tau, ace_tau, pin_tau = {}, {}, {}
        for tau, qc in zip(taus, qcols):
            co = float(np.mean(y <= g[qc].to_numpy()))
            co_tau[f"{tau:g}"] = co
            ace_tau[f"{tau:g}"] = ace(co, tau)
            pin_tau[f"{tau:g}"] = float(np.mean(pinball(y, g[qc].to_numpy(), tau)))
        cells = []
        by_h = {}
        for h, gh in sorted(g.groupby("horizon", sort=True), key=lambda kv: kv[0]):
            yh = gh["truth"].to_numpy()
            aces = [ace(float(np.mean(yh <= gh[qc].to_numpy())), tau) for tau, qc in zip(taus, qcols)]
            by_h[str(int(h))] = float(np.mean(aces))
            cells.extend(aces)
        mape_pf, excl = mape(y, g["point_forecast"].to_numpy(), return_excluded=True)
        mape_bag = mape(y, g["bagging"].to_numpy())
        methods[name] = {
            "mean_ace": float(np.mean(cells)),
            "mean_ace_pooled": float(np.mean(list(ace_tau.values()))),
            "coverage": co_tau,
            "ace": ace_tau,
            "ace_by_horizon": by_h,
            "pinball": pin_tau,
            "mape_point_forecast": mape_pf,
            "mape_bagging": mape_bag,
            "mape_relative_change": (mape_bag - mape_pf) / mape_pf if mape_pf > 0 else float("nan"),
            "mape_excluded_rows": excl,
            "n_points": int(len(g)),
        }
        for (fold, fp, h), gf in g.groupby(["fold", "fold_point", "horizon"], sort=True):
            yf = gf["truth"].to_numpy()
            for tau, qc in zip(taus, qcols):
                q = gf[qc].to_numpy()
                co = float(np.mean(yf <= q))
                flat.append((int(fold), int(fp), name, tau, int(h), len(yf), co, ace(co, tau),
                             float(np.mean(pinball(yf, q, tau)))))
    rows = pd.DataFrame(flat, columns=["fold", "fold_point", "method", "tau", "horizon", "n",
                                       "coverage", "ace", "pinball"])
    return methods, rows


def run_evaluation(panel: Panel, forecaster, methods, plan: EvalPlan = EvalPlan(), oracle=None) -> EvalReport:
    """Score distribution-forecast methods with the nested evaluation backtest.

    ``mean_ace`` averages ``|CO - tau|`` over the tau grid and the horizons,
    where each CO pools all folds and series at that horizon.
    """
    methods = [standard_method(m) if isinstance(m, str) else m for m in methods]
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError("method names must be unique")
    t0 = _time.perf_counter()
    points_j = fold_points(panel, plan)
    jobs = [(f, J) for f, J in enumerate(points_j)]
    if plan.workers > 1 and len(jobs) > 1:
        parts = Parallel(n_jobs=plan.workers)(
            delayed(_run_fold)(panel, forecaster, methods, plan, oracle, f, J) for f, J in jobs
        )
    else:
        parts = [_run_fold(panel, forecaster, methods, plan, oracle, f, J) for f, J in jobs]
    qcols = [f"q_{t:g}" for t in plan.taus]
    cols = ["fold", "fold_point", "method", "series_id", "time", "horizon", "truth",
            "point_forecast", "bagging", *qcols]
    points = pd.DataFrame([r for part in parts for r in part], columns=cols)
    points = points.sort_values(["fold", "method", "series_id", "time"], kind="stable").reset_index(drop=True)
    summary, rows = _summarise(points, plan.taus, plan.horizon)
    return EvalReport(plan.to_dict(), points_j, summary, points, rows, _time.perf_counter() - t0)
