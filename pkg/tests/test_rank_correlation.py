import itertools
import math
import random

import numpy as np
import pytest
import scipy.stats
from hypothesis import assume, given, strategies as st

from dg_gauge.errors import InvalidInput, UndefinedCorrelation
from dg_gauge.rank_correlation import (
    PairedSample,
    fractional_ranks,
    kendall_tau,
    seed_aggregate,
    spearman_rho,
)


def brute_tau_b(x, y):
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx = x[i] - x[j]
        dy = y[i] - y[j]
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif (dx > 0) == (dy > 0):
            c += 1
        else:
            d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def textbook_rho(x, y):
    """No-ties Spearman: 1 - 6 sum d^2 / (n (n^2 - 1)) with ranks from sorting."""
    n = len(x)
    rx = {v: r + 1 for r, v in enumerate(sorted(x))}
    ry = {v: r + 1 for r, v in enumerate(sorted(y))}
    d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(x, y))
    return 1 - 6 * d2 / (n * (n * n - 1))


class TestFractionalRanks:
    def test_examples(self):
        assert fractional_ranks([10, 20, 30]) == [1, 2, 3]
        assert fractional_ranks([5, 5, 7]) == [1.5, 1.5, 3]
        assert fractional_ranks([3, 1, 2]) == [3, 1, 2]

    def test_non_finite(self):
        with pytest.raises(InvalidInput):
            fractional_ranks([1, float("nan")])

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
    def test_rank_sum_and_scipy(self, xs):
        r = fractional_ranks(xs)
        n = len(xs)
        assert sum(r) == pytest.approx(n * (n + 1) / 2)
        np.testing.assert_allclose(r, scipy.stats.rankdata(xs, method="average"))


class TestSpearman:
    def test_examples(self):
        assert spearman_rho([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
        assert spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        # 1 - 6*4/(4*15)
        assert spearman_rho(PairedSample((1, 2, 3, 4), (2, 1, 4, 3))) == pytest.approx(0.6, abs=1e-12)

    def test_both_constant(self):
        with pytest.raises(UndefinedCorrelation):
            spearman_rho([1, 1, 1], [2, 2, 2])

    def test_one_constant(self):
        with pytest.raises(UndefinedCorrelation):
            spearman_rho([1, 1, 1], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(InvalidInput):
            spearman_rho([1], [1])

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            spearman_rho([1, 2], [1, 2, 3])

    def test_matches_textbook_formula_without_ties(self):
        rnd = random.Random(7)
        for _ in range(300):
            n = rnd.randint(2, 50)
            x = rnd.sample(range(1000), n)
            y = rnd.sample(range(1000), n)
            assert spearman_rho(x, y) == pytest.approx(textbook_rho(x, y), abs=1e-12)

    def test_matches_scipy_with_ties(self):
        rnd = random.Random(8)
        for _ in range(200):
            n = rnd.randint(3, 30)
            x = [rnd.randint(0, 4) for _ in range(n)]
            y = [rnd.randint(0, 4) for _ in range(n)]
            assume_ok = len(set(x)) > 1 and len(set(y)) > 1
            if not assume_ok:
                continue
            assert spearman_rho(x, y) == pytest.approx(scipy.stats.spearmanr(x, y)[0], abs=1e-12)


class TestKendall:
    def test_examples(self):
        assert kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
        assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        # C=4, D=2 over 6 pairs
        assert kendall_tau([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(1 / 3, abs=1e-12)

    def test_all_tied(self):
        with pytest.raises(UndefinedCorrelation):
            kendall_tau([1, 1, 1], [5, 5, 5])

    def test_brute_force_random(self):
        rnd = random.Random(11)
        for i in range(1000):
            n = rnd.randint(2, 50)
            if i % 2:
                x = [rnd.randint(0, 5) for _ in range(n)]
                y = [rnd.randint(0, 5) for _ in range(n)]
            else:
                x = [rnd.random() for _ in range(n)]
                y = [rnd.random() for _ in range(n)]
            try:
                ref = brute_tau_b(x, y)
            except ZeroDivisionError:
                with pytest.raises(UndefinedCorrelation):
                    kendall_tau(x, y)
                continue
            assert kendall_tau(x, y) == ref

    def test_matches_scipy_tau_b(self):
        x = [1, 2, 2, 3, 4, 4, 5]
        y = [2, 1, 3, 3, 5, 4, 4]
        assert kendall_tau(x, y) == pytest.approx(scipy.stats.kendalltau(x, y, variant="b")[0], abs=1e-12)


pairs_st = st.integers(2, 25).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
    )
)

int_pairs_st = st.integers(2, 25).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-20, 20), min_size=n, max_size=n),
        st.lists(st.integers(-20, 20), min_size=n, max_size=n),
    )
)


class TestProperties:
    @given(pairs_st)
    def test_bounds_and_symmetry(self, xy):
        x, y = xy
        assume(len(set(x)) > 1 and len(set(y)) > 1)
        for fn in (spearman_rho, kendall_tau):
            v = fn(x, y)
            assert -1.0 <= v <= 1.0
            assert fn(y, x) == pytest.approx(v, abs=1e-12)

    @given(int_pairs_st)
    def test_monotone_transform_invariance(self, xy):
        x, y = xy
        assume(len(set(x)) > 1 and len(set(y)) > 1)
        tx = [3 * v + 1 for v in x]
        ty = [v ** 3 for v in y]
        assert spearman_rho(tx, ty) == pytest.approx(spearman_rho(x, y), abs=1e-12)
        assert kendall_tau(tx, ty) == pytest.approx(kendall_tau(x, y), abs=1e-12)

    @given(pairs_st)
    def test_negation_without_ties(self, xy):
        x, y = xy
        assume(len(set(x)) > 1 and len(set(y)) == len(y))
        neg = [-v for v in y]
        assert spearman_rho(x, neg) == pytest.approx(-spearman_rho(x, y), abs=1e-12)
        assert kendall_tau(x, neg) == pytest.approx(-kendall_tau(x, y), abs=1e-12)


class TestSeedAggregate:
    def test_two_values(self):
        mean, std = seed_aggregate([0.4, 0.6])
        assert mean == pytest.approx(0.5)
        # sqrt(((-0.1)^2 + 0.1^2) / 1)
        assert std == pytest.approx(math.sqrt(0.02), abs=1e-12)
        assert std == pytest.approx(0.1414, abs=1e-4)

    def test_single(self):
        assert seed_aggregate([0.7]) == (0.7, 0.0)

    def test_constant(self):
        assert seed_aggregate([0.3, 0.3, 0.3]) == (pytest.approx(0.3), 0.0)

    def test_empty(self):
        with pytest.raises(InvalidInput):
            seed_aggregate([])
