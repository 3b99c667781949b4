import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from btboot.selector.stats import distance_correlation, kolmogorov_sf, ks_two_sample
from oracles import dcor_bruteforce, ks_enumerate

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestDistanceCorrelation:
    def test_self_is_one(self):
        x = np.array([0.3, 1.0, -2.0, 5.0, 4.4])
        assert distance_correlation(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_constant_is_zero(self):
        assert distance_correlation(np.ones(6), np.arange(6.0)) == 0.0

    def test_hand_example(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.0, 4.0, 9.0, 16.0]
        assert distance_correlation(x, y) == pytest.approx(dcor_bruteforce(x, y), abs=1e-12)

    def test_matches_bruteforce_on_random_vectors(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            x, y = rng.normal(size=n), rng.normal(size=n) + rng.normal() * rng.normal(size=n)
            assert abs(distance_correlation(x, y) - dcor_bruteforce(list(x), list(y))) <= 1e-10

    @given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite))
    def test_symmetric_and_bounded(self, x, y):
        a, b = distance_correlation(x, y), distance_correlation(y, x)
        assert abs(a - b) <= 1e-12
        assert 0.0 <= a <= 1.0

    @given(arrays(float, 10, elements=st.floats(-100, 100)), st.floats(0.1, 10), st.floats(-50, 50),
           st.sampled_from([1, -1]))
    def test_affine_invariance(self, x, a, b, sign):
        y = np.sin(np.arange(10.0)) + 0.1 * np.arange(10.0)
        if np.ptp(x) < 1e-3:
            return
        assert distance_correlation(sign * a * x + b, y) == pytest.approx(distance_correlation(x, y), abs=1e-9)

    def test_subsample_cap_is_seeded(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=300), rng.normal(size=300)
        assert distance_correlation(x, y, cap=50, seed=1) == distance_correlation(x, y, cap=50, seed=1)

    def test_errors(self):
        with pytest.raises(ValueError):
            distance_correlation([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            distance_correlation([1.0], [1.0])


class TestKS:
    def test_identical(self):
        assert ks_two_sample([3.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)

    def test_disjoint(self):
        assert ks_two_sample([1.0, 2.0], [3.0, 4.0])[0] == 1.0

    def test_hand_example(self):
        assert ks_two_sample([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])[0] == pytest.approx(1.0 / 3.0)

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=12), st.lists(st.integers(-5, 5), min_size=1, max_size=12))
    def test_matches_step_enumeration_exactly(self, a, b):
        a, b = [float(v) for v in a], [float(v) for v in b]
        assert ks_two_sample(a, b)[0] == ks_enumerate(a, b)

    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=15),
           st.lists(st.integers(-50, 50), min_size=1, max_size=15))
    def test_invariant_under_monotone_transform(self, a, b):
        # exact in floating point for small integers
        f = lambda v: np.asarray(v, float) ** 3 + 5.0 * np.asarray(v, float)
        assert ks_two_sample(a, b)[0] == ks_two_sample(f(a), f(b))[0]

    def test_p_value_against_scipy_asymptotic(self):
        from scipy.special import kolmogorov
        for lam in (0.3, 0.7, 0.99, 1.0, 1.5, 3.0):
            assert kolmogorov_sf(lam) == pytest.approx(kolmogorov(lam), abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])
