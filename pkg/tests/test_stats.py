import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from dvlr.errors import DataError
from dvlr.stats import betainc_regularized, welch_statistic, welch_t_test


class TestReference:
    def test_shifted_ranges(self):
        # t = -1, df = 8 by hand; p cross-checked against scipy
        t, df = welch_statistic([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0, abs=1e-15) and df == pytest.approx(8.0, abs=1e-12)
        p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert abs(p - 0.347) < 1e-3
        assert p == pytest.approx(sps.ttest_ind([1, 2, 3, 4, 5], [2, 3, 4, 5, 6], equal_var=False).pvalue, abs=1e-12)

    def test_identical_samples(self):
        assert welch_t_test([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]) == 1.0

    def test_t_zero_invariance(self):
        a = [97.9, 98.1, 98.3]
        spread = [98.1 + 2 * (x - 98.1) for x in a]
        assert welch_t_test(a, a) == welch_t_test(spread, spread) == 1.0


class TestConventions:
    def test_constant_equal(self):
        assert welch_t_test([2.0, 2.0], [2.0, 2.0, 2.0]) == 1.0

    def test_constant_unequal(self):
        assert welch_t_test([2.0, 2.0], [3.0, 3.0]) == 0.0

    # scipy warns about the constant sample; its value is still the oracle
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_one_constant_sample_is_fine(self):
        p = welch_t_test([2.0, 2.0, 2.0], [1.0, 2.0, 3.5])
        assert p == pytest.approx(sps.ttest_ind([2.0, 2.0, 2.0], [1.0, 2.0, 3.5], equal_var=False).pvalue, abs=1e-10)

    def test_too_few(self):
        with pytest.raises(DataError):
            welch_t_test([1.0], [1.0, 2.0])


class TestBeta:
    @pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (4.0, 0.5, 0.9), (50.0, 0.5, 0.99), (1.0, 1.0, 0.25),
                                       (2.5, 7.0, 0.1), (0.5, 30.0, 0.001)])
    def test_against_scipy(self, a, b, x):
        assert betainc_regularized(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-13)

    def test_endpoints(self):
        assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
        assert betainc_regularized(2.0, 3.0, 1.0) == 1.0


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=12)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(samples, samples)
    def test_symmetric_and_bounded(self, a, b):
        p = welch_t_test(a, b)
        assert 0.0 <= p <= 1.0
        assert abs(p - welch_t_test(b, a)) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_scipy(self, seed):
        r = np.random.default_rng(seed)
        a = r.normal(98.0, r.uniform(0.01, 1.0), size=int(r.integers(2, 15)))
        b = r.normal(98.0 + r.normal(0, 0.5), r.uniform(0.01, 1.0), size=int(r.integers(2, 15)))
        ref = sps.ttest_ind(a, b, equal_var=False).pvalue
        assert math.isclose(welch_t_test(a, b), ref, rel_tol=1e-9, abs_tol=1e-14)

    def test_p_shrinks_as_gap_grows(self):
        base = [98.0, 98.2, 98.4, 98.1, 98.3]
        ps = [welch_t_test(base, [x + gap for x in base]) for gap in np.linspace(0, 1, 21)]
        assert all(x >= y for x, y in zip(ps, ps[1:]))
