"""Run configuration: one self-describing document for every command.

Sections mirror the library's components. Unknown keys are rejected with
the full dotted key in the message, and :meth:`RunConfig.to_dict` always
materialises every default so the provenance copy reconstructs the run.
"""

from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field

import yaml

from .backtest import BacktestPlan, CovariatePerturbation, load_estimates
from .bootstrap.core import BootstrapConfig
from .dataset import Panel, PanelSchema
from .evaluation.harness import DEFAULT_TAUS, EvalPlan, standard_method
from .evaluation.synthetic import SyntheticSpec
from .exceptions import ConfigError, DataIOError
from .forecasters import make_forecaster
from .selector.selectors import make_selector

CONFIG_VERSION = 1


def _key(f):
    return f.metadata.get("key", f.name)


@dataclass
class DataConfig:
    path: str | None = None
    id_col: str = "series_id"
    time_col: str = "timestamp"
    target_col: str = "target"
    freq: str = "int"
    covariates: list | None = None

    def schema(self) -> PanelSchema:
        return PanelSchema(self.id_col, self.time_col, self.target_col, self.freq,
                           None if self.covariates is None else tuple(self.covariates))


@dataclass
class ModelConfig:
    kind: str = "ridge"
    lambda_: float = field(default=1.0, metadata={"key": "lambda"})
    period: int = 1
    order: int = 1
    predictions: str | None = None
    offset: float = 0.0
    base: str = "ridge"

    def build(self):
        def one(kind):
            if kind == "ridge":
                return make_forecaster("ridge", alpha=self.lambda_)
            if kind == "seasonal_naive":
                return make_forecaster("seasonal_naive", period=self.period)
            if kind == "ar":
                return make_forecaster("ar", order=self.order)
            if kind == "external":
                if not self.predictions:
                    raise ConfigError("model.predictions is required for model.kind 'external'")
                return make_forecaster("external", path=self.predictions)
            return make_forecaster(kind)

        if self.kind == "offset":
            if self.base == "offset":
                raise ConfigError("model.base cannot be 'offset'")
            return make_forecaster("offset", base=one(self.base), offset=self.offset)
        return one(self.kind)


@dataclass
class PerturbationConfig:
    mode: str = "none"
    noise_scale: dict = field(default_factory=dict)
    target_covariates: list = field(default_factory=list)
    estimates: str | None = None


@dataclass
class BacktestConfig:
    start: int | None = None
    step: int = 1
    max_horizon: int = 1
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    meta_covariates: list = field(default_factory=list)

    def perturbation_obj(self, panel: Panel | None = None) -> CovariatePerturbation:
        p = self.perturbation
        est = None
        if p.mode == "historic_estimate_file":
            if not p.estimates:
                raise ConfigError("backtest.perturbation.estimates is required for historic_estimate_file")
            est = load_estimates(p.estimates, panel.grid if panel is not None else None)
        return CovariatePerturbation(p.mode, dict(p.noise_scale), tuple(p.target_covariates), est)

    def plan(self, panel: Panel) -> BacktestPlan:
        """Backtest plan; ``start=None`` resolves to the middle of the panel's span."""
        start = self.start
        if start is None:
            start = panel.min_start + (panel.max_end - panel.min_start) // 2
        return BacktestPlan(start, self.step, self.max_horizon, self.perturbation_obj(panel),
                            tuple(self.meta_covariates))


@dataclass
class SelectorConfig:
    variant: str = "identity"
    features: list = field(default_factory=lambda: ["horizon"])
    max_depth: int = 3
    min_leaf: int = 30
    n_min: int = 30
    rules: list = field(default_factory=list)
    cap: int = 2000

    def kwargs(self) -> dict:
        return dict(variant=self.variant, features=tuple(self.features), max_depth=self.max_depth,
                    min_leaf=self.min_leaf, n_min=self.n_min, rules=tuple(self.rules))


@dataclass
class BootstrapSection:
    formula: str = "additive"
    B: int = 1000
    ratio_denominator: str = "backtest_forecast"
    seed: int = 0
    delta: float | None = None

    def build(self) -> BootstrapConfig:
        return BootstrapConfig(self.formula, self.B, self.ratio_denominator, self.seed, self.delta)


@dataclass
class ForecastConfig:
    taus: list = field(default_factory=lambda: list(DEFAULT_TAUS))
    horizon: int = 1
    samples: bool = False


@dataclass
class EvalConfig:
    n_folds: int = 20
    horizon: int = 8
    taus: list = field(default_factory=lambda: list(DEFAULT_TAUS))
    nested_residual_fraction: float = 0.5
    backtest_step: int = 1
    residual_max_horizon: int | None = None
    first_fold: int | None = None
    bagging_stat: str = "median"
    fm_refits: int = 200
    methods: list = field(default_factory=lambda: ["BA", "BM", "FR", "FM"])


@dataclass
class SimulateConfig:
    n_series: int = 20
    length: int = 300
    noise_kind: str = "additive_gaussian"
    sigma: float = 1.0
    level_range: list = field(default_factory=lambda: [10.0, 100.0])
    trend: float = 0.0
    season_amplitude: float = 0.0
    season_period: int = 24
    bias: float = 0.0
    n_noise_covariates: int = 0

    def spec(self, seed: int) -> SyntheticSpec:
        d = dataclasses.asdict(self)
        d["level_range"] = tuple(d["level_range"])
        return SyntheticSpec(**d, seed=seed)


@dataclass
class RuntimeConfig:
    workers: int | None = None

    def resolved_workers(self) -> int:
        return int(self.workers) if self.workers else (os.cpu_count() or 1)


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    bootstrap: BootstrapSection = field(default_factory=BootstrapSection)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    overrides: dict = field(default_factory=dict, metadata={"internal": True})

    @classmethod
    def from_dict(cls, doc) -> "RunConfig":
        if doc is None:
            doc = {}
        cfg = _build(cls, doc, "")
        if cfg.version != CONFIG_VERSION:
            raise ConfigError(f"version: unsupported config version {cfg.version!r} (expected {CONFIG_VERSION})")
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return _dump(self)

    def validate(self) -> None:
        """Surface invalid values as config errors before any work starts."""
        self.bootstrap.build()
        if self.model.kind != "external":
            self.model.build()
        if self.forecast.horizon < 1:
            raise ConfigError("forecast.horizon must be >= 1")
        make_selector(**self.selector.kwargs())
        for m in self.eval.methods:
            standard_method(m)

    def with_override(self, dotted: str, value) -> "RunConfig":
        """Copy with one dotted key replaced; the override is recorded."""
        doc = self.to_dict()
        parts = dotted.split(".")
        node = doc
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = value
        out = RunConfig.from_dict(doc)
        out.overrides = {**self.overrides, dotted: value}
        return out

    def eval_plan(self, workers: int = 1) -> EvalPlan:
        e = self.eval
        bt = self.backtest
        return EvalPlan(e.n_folds, e.horizon, tuple(e.taus), e.nested_residual_fraction, e.backtest_step,
                        e.residual_max_horizon, e.first_fold, self.bootstrap.seed, workers, e.bagging_stat,
                        e.fm_refits, self.bootstrap.B, bt.perturbation_obj())


def _hints(cls):
    return typing.get_type_hints(cls)


def _check_scalar(value, default, hint, key):
    if value is None:
        if default is None or "None" in str(hint):
            return value
        raise ConfigError(f"config key {key!r} may not be null")
    base = default if default is not None else None
    if isinstance(base, bool) or hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects true/false, got {value!r}")
    elif isinstance(base, int) or "int" in str(hint) and "float" not in str(hint):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}")
    elif isinstance(base, float) or "float" in str(hint):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} expects a number, got {value!r}")
        value = float(value)
    elif isinstance(base, str) or hint is str or str(hint).startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} expects a string, got {value!r}")
    elif isinstance(base, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"config key {key!r} expects a mapping, got {value!r}")
    elif isinstance(base, list) or "list" in str(hint):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key {key!r} expects a list, got {value!r}")
        value = list(value)
    return value


def _build(cls, doc, prefix):
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {prefix.rstrip('.') or '<root>'!r} must be a mapping")
    hints = _hints(cls)
    fields = {_key(f): f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key {prefix + unknown[0]!r}")
    kwargs = {}
    for key, f in fields.items():
        if key not in doc:
            continue
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _build(hint, doc[key], f"{prefix}{key}.")
        else:
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            kwargs[f.name] = _check_scalar(doc[key], default, hint, prefix + key)
    return cls(**kwargs)


def _dump(obj):
    out = {}
    for f in dataclasses.fields(obj):
        if f.metadata.get("internal"):
            continue
        v = getattr(obj, f.name)
        out[_key(f)] = _dump(v) if dataclasses.is_dataclass(v) else (list(v) if isinstance(v, tuple) else v)
    return out


def load_config(path) -> RunConfig:
    """Read a JSON or YAML config; a missing path means all defaults."""
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise DataIOError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return RunConfig.from_dict(doc)
