import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dg_gauge import theory_lab
from dg_gauge.errors import GeneratorStarvation, InvalidInput
from dg_gauge.measures import FullErrorVector, LooErrorVector
from dg_gauge.theory_lab import (
    ChebyshevTrialConfig,
    DecreasingRangeConfig,
    UniformErrorModel,
    chebyshev_coverage,
    lemma_closed_form,
    lemma_monte_carlo,
    reconnection_bound_check,
    theorem1_residual,
    theorem2_bound_check,
)

U01 = UniformErrorModel(0.0, 1.0)


def quadrature_moments(a, b, k):
    """Mean and variance of the max of k U(a, b) draws from its CDF ((x-a)/(b-a))^k."""
    cdf_k = lambda x: ((x - a) / (b - a)) ** k
    m1 = b - integrate.quad(cdf_k, a, b)[0]
    m2 = b * b - integrate.quad(lambda x: 2 * x * cdf_k(x), a, b)[0]
    return m1, m2 - m1 * m1


class TestModel:
    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.6, 0.2), (-0.1, 0.5), (0.2, 1.1)])
    def test_invalid(self, a, b):
        with pytest.raises(InvalidInput):
            UniformErrorModel(a, b)


class TestLemmaClosedForm:
    def test_single_uniform(self):
        s = lemma_closed_form(U01, 1)
        assert s.mean == pytest.approx(0.5)
        assert s.variance == pytest.approx(1 / 12)

    def test_k2(self):
        s = lemma_closed_form(U01, 2)
        assert s.mean == pytest.approx(2 / 3, abs=1e-15)
        assert s.variance == pytest.approx(1 / 18, abs=1e-15)

    def test_shifted(self):
        s = lemma_closed_form(UniformErrorModel(0.2, 0.5), 3)
        assert s.mean == pytest.approx(0.425, abs=1e-15)
        assert s.variance == pytest.approx(0.003375, abs=1e-15)

    @pytest.mark.parametrize("a,b,k", [(0, 1, 2), (0.2, 0.5, 3), (0.1, 0.9, 7), (0.3, 0.35, 20)])
    def test_against_quadrature(self, a, b, k):
        s = lemma_closed_form(UniformErrorModel(a, b), k)
        mean, var = quadrature_moments(a, b, k)
        assert s.mean == pytest.approx(mean, rel=1e-9)
        assert s.variance == pytest.approx(var, rel=1e-6)

    def test_k_zero(self):
        with pytest.raises(InvalidInput):
            lemma_closed_form(U01, 0)


class TestLemmaMonteCarlo:
    def test_k1_clt_band(self):
        s = lemma_monte_carlo(U01, 1, 10**6, seed=3)
        assert abs(s.mean - 0.5) <= 3 * math.sqrt(1 / 12 / 10**6)

    def test_k5(self):
        s = lemma_monte_carlo(U01, 5, 10**6, seed=4)
        assert abs(s.mean - 5 / 6) <= 4 * math.sqrt(5 / (7 * 36) / 10**6)
        assert s.variance == pytest.approx(5 / (7 * 36), rel=0.05)

    @pytest.mark.parametrize("k", [2, 3])
    def test_derived_examples(self, k):
        model = UniformErrorModel(0.2, 0.5) if k == 3 else U01
        cf = lemma_closed_form(model, k)
        mc = lemma_monte_carlo(model, k, 10**6, seed=k)
        assert abs(mc.mean - cf.mean) <= 4 * math.sqrt(cf.variance / 10**6)
        assert mc.variance == pytest.approx(cf.variance, rel=0.05)

    def test_deterministic(self):
        assert lemma_monte_carlo(U01, 4, 70_000, 9) == lemma_monte_carlo(U01, 4, 70_000, 9)

    def test_thread_count_does_not_matter(self, monkeypatch):
        monkeypatch.setenv("DG_GAUGE_THREADS", "1")
        one = lemma_monte_carlo(U01, 3, 200_000, 5)
        monkeypatch.setenv("DG_GAUGE_THREADS", "8")
        eight = lemma_monte_carlo(U01, 3, 200_000, 5)
        assert one == eight

    def test_single_trial(self):
        s = lemma_monte_carlo(U01, 3, 1, 0)
        assert 0 <= s.mean <= 1 and s.variance == 0.0


class TestChebyshev:
    def test_paper_example(self):
        cfg = ChebyshevTrialConfig(5, 0.5, 10**5, seed=1)
        assert chebyshev_coverage(cfg, U01) >= 0.75

    def test_near_one_delta_is_vacuous(self):
        cfg = ChebyshevTrialConfig(5, 0.999, 1000, seed=1)
        assert chebyshev_coverage(cfg, U01) >= 0.0

    def test_shifted_model(self):
        cfg = ChebyshevTrialConfig(20, 0.5, 10**5, seed=2)
        assert chebyshev_coverage(cfg, UniformErrorModel(0.2, 0.9)) >= 0.75

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.2])
    def test_delta_bounds(self, delta):
        with pytest.raises(InvalidInput):
            ChebyshevTrialConfig(5, delta, 10, 0)


class TestTheorem1:
    def test_identity_for_zero_lower_end(self):
        # b = (N+1)/N * E[max] when a = 0
        for n in (1, 3, 10):
            assert (n + 1) / n * lemma_closed_form(U01, n).mean == pytest.approx(1.0)

    def test_decay(self):
        res = theorem1_residual(U01, [5, 10, 20, 40], 10**5, seed=0)
        vals = [r for _, r in res]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_reproducible(self):
        assert theorem1_residual(U01, [7], 1, 3) == theorem1_residual(U01, [7], 1, 3)


class TestTheorem2:
    def test_hand_tuple(self):
        # N=3, max=0.7, min=0.2 satisfies the range assumption and the bound
        n, hi, lo = 3, 0.7, 0.2
        assert hi >= 1 - 1 / n and lo <= 1 / n
        assert 1.0 <= hi + (hi - lo) / (n - 2)

    def test_extreme_tuple(self):
        a, b = 0.1, 0.6
        assert b <= b + (b - a) / (3 - 2)

    def test_example_config(self):
        cfg = DecreasingRangeConfig(10, UniformErrorModel(0.1, 0.6), 10**5, seed=7)
        assert theorem2_bound_check(cfg) == (0, 10**5)

    def test_small_n_rejected(self):
        with pytest.raises(InvalidInput):
            DecreasingRangeConfig(2, U01, 10, 0)

    def test_starvation(self, monkeypatch):
        # a sampler whose tuples never reach the top of the range
        def stuck(model, n_envs, size, seed, j):
            return np.full((size, n_envs), model.a + 0.5 * model.width)

        monkeypatch.setattr(theory_lab, "_draw_tuples", stuck)
        with pytest.raises(GeneratorStarvation):
            theorem2_bound_check(DecreasingRangeConfig(5, U01, 10, 0))

    @settings(max_examples=15, deadline=None)
    @given(
        st.floats(0.0, 0.9),
        st.floats(0.01, 1.0),
        st.integers(3, 60),
        st.integers(0, 2**32),
    )
    def test_never_violated(self, a, width, n, seed):
        b = min(1.0, a + width)
        if b <= a:
            return
        cfg = DecreasingRangeConfig(n, UniformErrorModel(a, b), 2000, seed)
        assert theorem2_bound_check(cfg)[0] == 0


class TestReconnection:
    def test_constant(self):
        full = FullErrorVector.from_errors([0.25] * 101)
        loo = LooErrorVector.from_errors([0.25] * 5)
        assert reconnection_bound_check(full, loo)

    def test_fails_without_range_assumption(self):
        from dg_gauge.synthetic_worlds import build_e_all, spurious_error

        training = [0.8, 0.82, 0.84, 0.86, 0.88, 0.9]
        full = FullErrorVector(tuple((i, spurious_error(training, e)) for i, e in build_e_all().all_envs))
        loo = LooErrorVector.from_errors([spurious_error(training, e) for e in training])
        assert max(loo.errors) <= 0.2 + 1e-12 and max(loo.errors) - min(loo.errors) <= 0.1 + 1e-12
        assert not reconnection_bound_check(full, loo)

    def test_worst_term_suffices(self):
        full = FullErrorVector.from_errors([0.1, 0.6, 0.3, 0.2])
        loo = LooErrorVector.from_errors([0.6, 0.2, 0.3])
        assert reconnection_bound_check(full, loo)
