import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from btboot.bootstrap import (
    BootstrapConfig, RatioSet, bagging_pf, baseline_fm, baseline_fr, bootstrap_additive,
    bootstrap_multiplicative, build_ratio_set, forecast_direct, forecast_distribution,
    forecast_iterative, in_sample_collection, quantile, quantile_shortcut_direct,
)
from btboot.bootstrap.forecast import DistributionForecast
from btboot.exceptions import ConfigError, DegenerateRatioError, NumericalError
from btboot.forecasters import ARForecaster, RidgeForecaster, SeasonalNaiveForecaster
from btboot.selector import IdentitySelector, RuleSelector
from helpers import make_collection, make_panel
from oracles import ar_binary_tree, interp_quantile

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(1, 40), elements=finite)
taus = st.floats(0.01, 0.99)


class TestQuantile:
    def test_examples(self):
        assert quantile(np.arange(1.0, 11.0), 0.5) == 5.5
        assert quantile([0.0, 1.0, 2.0, 3.0], 0.25) == 0.75
        assert quantile([7.0], 0.3) == 7.0

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_levels(self, tau):
        with pytest.raises(ValueError):
            quantile([1.0, 2.0], tau)

    @given(samples, taus)
    def test_matches_oracle(self, x, tau):
        assert quantile(np.sort(x), tau) == pytest.approx(interp_quantile(x, tau), abs=1e-9)

    @given(samples, taus, taus)
    def test_monotone_in_tau(self, x, t1, t2):
        x = np.sort(x)
        lo, hi = sorted((t1, t2))
        assert quantile(x, lo) <= quantile(x, hi) + 1e-9


class TestAdditive:
    def test_single_residual(self):
        out = bootstrap_additive(10.0, [2.0], BootstrapConfig(B=50))
        assert np.all(out == 12.0)

    def test_support(self):
        out = bootstrap_additive(0.0, [-1.0, 1.0], BootstrapConfig(B=500, seed=3))
        assert set(out.tolist()) == {-1.0, 1.0}
        assert 0.4 < np.mean(out > 0) < 0.6

    def test_empty(self):
        with pytest.raises(NumericalError):
            bootstrap_additive(0.0, [], BootstrapConfig())

    @given(finite, finite, st.integers(0, 10))
    def test_shift_equivariance(self, pf, c, seed):
        eps = np.linspace(-2, 3, 7)
        cfg = BootstrapConfig(B=64, seed=seed)
        np.testing.assert_allclose(bootstrap_additive(pf + c, eps, cfg), bootstrap_additive(pf, eps, cfg) + c,
                                   atol=1e-9)


class TestMultiplicative:
    def test_example(self):
        out = bootstrap_multiplicative(100.0, [0.1], BootstrapConfig(formula="multiplicative", B=20))
        np.testing.assert_allclose(out, 110.0)

    def test_ratio_examples(self):
        coll = make_collection([2.0, -1.0], forecast=[10.0, 4.0])
        rs = build_ratio_set(coll, BootstrapConfig(formula="multiplicative"))
        np.testing.assert_allclose(rs.ratios, [0.2, -0.25])
        assert rs.excluded == 0

    def test_observed_denominator(self):
        coll = make_collection([2.0], forecast=[8.0])
        rs = build_ratio_set(coll, BootstrapConfig(formula="multiplicative", ratio_denominator="observed_response"))
        np.testing.assert_allclose(rs.ratios, [0.2])

    def test_guard_excludes(self):
        coll = make_collection([1.0, 1.0, 1.0], forecast=[0.0, 1e-9, 5.0])
        rs = build_ratio_set(coll, BootstrapConfig(formula="multiplicative", delta=1e-3))
        assert rs.excluded == 2 and len(rs.ratios) == 1

    def test_all_excluded(self):
        coll = make_collection([1.0, 1.0], forecast=[0.0, 0.0])
        with pytest.raises(DegenerateRatioError):
            build_ratio_set(coll, BootstrapConfig(formula="multiplicative", delta=1e-3))

    @given(st.floats(0.01, 1e3), st.floats(0.01, 100), st.integers(0, 10))
    def test_scale_equivariance(self, pf, c, seed):
        r = np.linspace(-0.5, 0.5, 9)
        cfg = BootstrapConfig(formula="multiplicative", B=64, seed=seed)
        np.testing.assert_allclose(bootstrap_multiplicative(pf * c, r, cfg),
                                   c * bootstrap_multiplicative(pf, r, cfg), rtol=1e-9)


class TestShortcut:
    def test_additive(self):
        np.testing.assert_allclose(quantile_shortcut_direct(5.0, [3.0, 1.0, 2.0], [0.5]), [7.0])

    def test_multiplicative_negative_pf(self):
        q = quantile_shortcut_direct(-10.0, [-0.1, 0.0, 0.1], [0.1, 0.9], "multiplicative")
        assert q[0] < q[1]

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-0.9, 2)), st.floats(-100, 100),
           st.lists(taus, min_size=2, max_size=5))
    def test_monotone(self, r, pf, ts):
        ts = sorted(ts)
        for formula in ("additive", "multiplicative"):
            q = quantile_shortcut_direct(pf, r, ts, formula)
            assert np.all(np.diff(q) >= -1e-9)

    def test_matches_large_bootstrap(self):
        rng = np.random.default_rng(0)
        eps = rng.normal(size=200)
        out = bootstrap_additive(3.0, eps, BootstrapConfig(B=200_000, seed=1))
        q = quantile_shortcut_direct(3.0, eps, [0.1, 0.5, 0.9])
        np.testing.assert_allclose(quantile(out, [0.1, 0.5, 0.9]), q, atol=0.05)


def ridge_setup():
    x = np.arange(20.0)[:, None]
    panel = make_panel({"a": (2 * x[:, 0] + 1, x)}, ("x",))
    model = RidgeForecaster(alpha=1e-9).fit(panel)
    return panel, model


class TestDirect:
    def test_collapse_on_constant_residual(self):
        panel, model = ridge_setup()
        coll = make_collection(np.full(30, 3.0))
        sel = IdentitySelector().fit(coll)
        out = forecast_direct(model, panel, sel, coll, BootstrapConfig(B=100), 2,
                              {"a": np.array([[20.0], [21.0]])})
        assert [d.time for d in out] == [20, 21]
        for d in out:
            assert np.allclose(d.samples, d.point_forecast + 3.0)
        assert out[0].point_forecast == pytest.approx(41.0, abs=1e-5)

    def test_disjoint_horizon_cells(self):
        panel, model = ridge_setup()
        h = np.repeat([1, 2, 3], 20)
        coll = make_collection(np.where(h <= 1, -1.0, 1.0), h=h)
        sel = RuleSelector(rules=("horizon <= 1",), n_min=5).fit(coll)
        out = forecast_direct(model, panel, sel, coll, BootstrapConfig(B=50), 3,
                              {"a": np.array([[20.0], [21.0], [22.0]])})
        assert np.all(out[0].samples == out[0].point_forecast - 1.0)
        assert np.all(out[2].samples == out[2].point_forecast + 1.0)

    def test_B_one(self):
        panel, model = ridge_setup()
        coll = make_collection([0.5, -0.5])
        out = forecast_direct(model, panel, IdentitySelector().fit(coll), coll, BootstrapConfig(B=1), 1,
                              {"a": np.array([[20.0]])})
        assert out[0].B == 1

    def test_missing_covariates(self):
        from btboot.exceptions import DataError
        panel, model = ridge_setup()
        coll = make_collection([0.0])
        with pytest.raises(DataError):
            forecast_direct(model, panel, IdentitySelector().fit(coll), coll, BootstrapConfig(), 1)

    def test_deterministic(self):
        panel, model = ridge_setup()
        coll = make_collection(np.random.default_rng(0).normal(size=40))
        sel = IdentitySelector().fit(coll)
        fc = {"a": np.array([[20.0], [21.0]])}
        a = forecast_direct(model, panel, sel, coll, BootstrapConfig(B=64, seed=5), 2, fc)
        b = forecast_direct(model, panel, sel, coll, BootstrapConfig(B=64, seed=5), 2, fc)
        assert all(x.same_as(y) for x, y in zip(a, b))


class TestIterative:
    def test_binary_tree(self):
        y = np.array([1.0, 2.0, 1.5, 3.0, 2.5, 2.0])
        panel = make_panel({"a": y})
        m = ARForecaster(order=1)
        m.coef_ = np.array([0.5])
        m.intercept_ = 1.0
        coll = make_collection([-1.0, 1.0])
        out = forecast_iterative(m, panel, IdentitySelector().fit(coll), coll, BootstrapConfig(B=400), 2)
        assert len(out) == 2
        expect = ar_binary_tree(y, [0.5], 1.0, [-1.0, 1.0], 2)
        got = {round(v, 12) for v in out[1].samples}
        assert got == expect
        assert set(np.round(out[0].samples, 12)) == ar_binary_tree(y, [0.5], 1.0, [-1.0, 1.0], 1)

    def test_zero_residuals_follow_point_path(self):
        y = np.cumsum(np.random.default_rng(1).normal(size=30))
        panel = make_panel({"a": y})
        m = ARForecaster(order=2).fit(panel)
        coll = make_collection(np.zeros(5))
        out = forecast_iterative(m, panel, IdentitySelector().fit(coll), coll, BootstrapConfig(B=10), 4)
        for d in out:
            np.testing.assert_allclose(d.samples, d.point_forecast, atol=1e-9)

    def test_dispatch_and_determinism(self):
        y = np.cumsum(np.random.default_rng(2).normal(size=30))
        panel = make_panel({"a": y})
        m = ARForecaster(order=1).fit(panel)
        coll = make_collection(np.random.default_rng(3).normal(size=30))
        sel = IdentitySelector().fit(coll)
        a = forecast_distribution(m, panel, sel, coll, BootstrapConfig(B=32, seed=9), 3)
        b = forecast_iterative(m, panel, sel, coll, BootstrapConfig(B=32, seed=9), 3)
        assert all(x.same_as(y) for x, y in zip(a, b))

    def test_needs_one_step_map(self):
        panel, model = ridge_setup()
        coll = make_collection([0.0])
        with pytest.raises(ConfigError):
            forecast_iterative(model, panel, IdentitySelector().fit(coll), coll, BootstrapConfig(), 1,
                               {"a": np.array([[20.0]])})


class TestBagging:
    def test_median_and_mean(self):
        d = DistributionForecast("a", 1, 1, 0, 0.0, np.array([3.0, 1.0, 2.0, 10.0]))
        assert bagging_pf(d) == 2.5
        assert bagging_pf(d, "mean") == 4.0
        with pytest.raises(ConfigError):
            bagging_pf(d, "mode")

    def test_samples_sorted_and_frozen(self):
        d = DistributionForecast("a", 1, 1, 0, 0.0, np.array([3.0, 1.0]))
        assert list(d.samples) == [1.0, 3.0]
        with pytest.raises(ValueError):
            d.samples[0] = 5.0


class TestBaselines:
    def test_fr_collapses_for_interpolating_model(self):
        out = baseline_fr(SeasonalNaiveForecaster(period=1), make_panel({"a": np.full(20, 4.0)}),
                          BootstrapConfig(B=50), 3)
        for d in out:
            assert np.all(d.samples == 4.0)

    def test_fr_equals_additive_with_in_sample_residuals(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 1))
        panel = make_panel({"a": (3 * x[:, 0] + rng.normal(size=40), x)}, ("x",))
        fitted = RidgeForecaster(alpha=1.0).fit(panel)
        fc = {"a": np.array([[0.5], [1.0]])}
        cfg = BootstrapConfig(B=100, seed=4)
        fr = baseline_fr(RidgeForecaster(alpha=1.0), panel, cfg, 2, fc)
        coll = in_sample_collection(fitted, panel)
        ba = forecast_direct(fitted, panel, IdentitySelector().fit(coll), coll, cfg, 2, fc)
        assert all(a.same_as(b) for a, b in zip(fr, ba))

    def test_fm_zero_residuals(self):
        x = np.arange(20.0)[:, None]
        panel = make_panel({"a": (2 * x[:, 0] + 1, x)}, ("x",))
        out = baseline_fm(RidgeForecaster(alpha=1e-9), panel, BootstrapConfig(seed=1), 1, n_refits=5,
                          future_covariates={"a": np.array([[20.0]])})
        np.testing.assert_allclose(out[0].samples, 41.0, atol=1e-4)

    def test_fm_single_refit(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 1))
        panel = make_panel({"a": (x[:, 0] + rng.normal(size=30), x)}, ("x",))
        out = baseline_fm(RidgeForecaster(), panel, BootstrapConfig(), 1, n_refits=1,
                          future_covariates={"a": np.array([[0.0]])})
        assert out[0].B == 1

    def test_fm_mean_near_point_forecast(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(80, 1))
        panel = make_panel({"a": (2 * x[:, 0] + rng.normal(size=80), x)}, ("x",))
        out = baseline_fm(RidgeForecaster(alpha=0.1), panel, BootstrapConfig(seed=2), 1, n_refits=300,
                          future_covariates={"a": np.array([[0.3]])})
        d = out[0]
        se = d.samples.std(ddof=1) / np.sqrt(d.B)
        assert abs(d.samples.mean() - d.point_forecast) < 3 * se
