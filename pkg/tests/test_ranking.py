"""Tau statistics against brute-force oracles, and the bootstrap engine."""

import numpy as np
import pytest

from transfer_bench.data import GroupedSeries
from transfer_bench.errors import StatisticsError, ValidationError
from transfer_bench.ranking import (
    BootstrapSummary,
    aggregated_weighted_tau,
    averaged_weighted_tau,
    bootstrap,
    hyperbolic_rank_weights,
    kendall_tau,
    pearson_r,
    weighted_tau,
)


from oracles import oracle_kendall, oracle_weighted_sums


def random_instance(rng, n, ties=False):
    if ties:
        x = rng.integers(0, max(2, n // 2), size=n).astype(float)
        y = rng.integers(0, max(2, n // 2), size=n).astype(float)
    else:
        x = rng.normal(size=n)
        y = rng.normal(size=n)
    return x, y


class TestKendall:
    def test_concordant(self):
        x = np.arange(10.0)
        assert kendall_tau(x, x + 1.0).value == 1.0

    def test_single_tied_pair(self):
        r = kendall_tau([1.0, 1.0], [1.0, 2.0])
        assert r.value == 0.0
        assert r.denominator == 1.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(10)
        for trial in range(60):
            x, y = random_instance(rng, int(rng.integers(3, 13)), ties=trial % 2 == 0)
            got = kendall_tau(x, y)
            assert abs(got.value - oracle_kendall(x, y)) <= 1e-12


class TestWeightedTau:
    def test_identical_ranking(self):
        rng = np.random.default_rng(11)
        for n in (2, 5, 9):
            x = rng.normal(size=n)
            assert weighted_tau(x, 2.0 * x + 1.0).value == 1.0

    def test_exact_reversal(self):
        x = np.random.default_rng(12).normal(size=8)
        assert weighted_tau(x, -x).value == -1.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(13)
        for trial in range(60):
            x, y = random_instance(rng, int(rng.integers(3, 13)), ties=trial % 3 == 0)
            got = weighted_tau(x, y)
            num, den = oracle_weighted_sums(x, y)
            assert abs(got.numerator - num) <= 1e-12 * max(1.0, abs(num))
            assert abs(got.denominator - den) <= 1e-12 * den
            assert abs(got.value - num / den) <= 1e-12

    def test_unit_weights_recover_kendall(self):
        # forcing every pair weight to 1 must reproduce the plain tau
        from transfer_bench.ranking import _tau_sums_stack

        rng = np.random.default_rng(14)
        for trial in range(100):
            x, y = random_instance(rng, int(rng.integers(3, 12)), ties=trial % 2 == 0)
            num_w, den_w = _tau_sums_stack(x[None, :], y[None, :], weighted=False)
            k = kendall_tau(x, y)
            assert num_w[0] / den_w[0] == k.value

    def test_symmetry_in_arguments(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            x, y = random_instance(rng, 9)
            assert weighted_tau(x, y).value == weighted_tau(y, x).value

    def test_rank_only_dependence(self):
        rng = np.random.default_rng(16)
        x, y = random_instance(rng, 10)
        base = weighted_tau(x, y).value
        assert weighted_tau(np.exp(x), y).value == pytest.approx(base, abs=1e-12)
        assert weighted_tau(x, y**3).value == pytest.approx(base, abs=1e-12)

    def test_negation_endpoints(self):
        x = np.random.default_rng(17).normal(size=10)
        assert weighted_tau(x, x).value == 1.0
        assert weighted_tau(-x, x).value == -1.0
        assert weighted_tau(-x, -x).value == 1.0

    def test_negating_both_preserves_plain_tau(self):
        # rank weights move with a joint reversal, so only the unweighted
        # tau is invariant mid-range; the weighted tau is checked at its
        # concordant/reversed endpoints in test_negation_endpoints
        rng = np.random.default_rng(18)
        for _ in range(10):
            x, y = random_instance(rng, 8)
            assert kendall_tau(-x, -y).value == pytest.approx(
                kendall_tau(x, y).value, abs=1e-12
            )

    def test_tie_weights_hand_case(self):
        # [3,1,3,2] descending -> the two 3s share positions 0,1 (mean 0.5)
        w = hyperbolic_rank_weights(np.array([3.0, 1.0, 3.0, 2.0]))
        np.testing.assert_allclose(w, [1 / 1.5, 1 / 4.0, 1 / 1.5, 1 / 3.0])


class TestPearson:
    def test_identity_and_reversal(self):
        assert pearson_r([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
        assert pearson_r([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_hand_computed(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0.0, 1.0, 4.0, 9.0])
        cov = np.mean((x - x.mean()) * (y - y.mean()))
        expect = cov / (x.std() * y.std())
        assert pearson_r(x, y) == pytest.approx(expect, abs=1e-15)

    def test_zero_variance(self):
        with pytest.raises(StatisticsError, match="zero variance"):
            pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestAggregated:
    def test_single_group_identity(self):
        rng = np.random.default_rng(20)
        for _ in range(100):
            x, y = random_instance(rng, 8)
            g = GroupedSeries((("d", x, y),))
            agg = aggregated_weighted_tau(g)
            w = weighted_tau(x, y)
            assert agg.value == w.value
            assert agg.numerator == w.numerator

    def test_two_concordant_groups(self):
        x = np.arange(6.0)
        g = GroupedSeries((("a", x, x), ("b", -x, -x)))
        assert aggregated_weighted_tau(g).value == 1.0

    def test_matches_per_group_oracle(self):
        rng = np.random.default_rng(21)
        groups = []
        num = den = 0.0
        for i in range(11):
            x, y = random_instance(rng, 10, ties=i % 2 == 0)
            groups.append((f"d{i}", x, y))
            dn, dd = oracle_weighted_sums(x, y)
            num += dn
            den += dd
        got = aggregated_weighted_tau(GroupedSeries(tuple(groups)))
        assert abs(got.value - num / den) <= 1e-12

    def test_averaged(self):
        x = np.arange(5.0)
        g = GroupedSeries((("a", x, x), ("b", x, np.array([2.0, 1.0, 4.0, 3.0, 5.0]))))
        per = [weighted_tau(x, y).value for _, x, y in g]
        assert averaged_weighted_tau(g) == pytest.approx(np.mean(per), abs=1e-15)

    def test_averaged_of_known_values(self):
        x = np.arange(4.0)
        g = GroupedSeries((("a", x, x), ("b", np.array([1.0, 2.0, 1.0, 2.0]),
                                         np.array([2.0, 1.0, 2.0, 1.0]))))
        assert averaged_weighted_tau(g) == pytest.approx(
            (1.0 + weighted_tau([1.0, 2.0, 1.0, 2.0], [2.0, 1.0, 2.0, 1.0]).value) / 2
        )

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            aggregated_weighted_tau(GroupedSeries(()))


def make_series(rng, n_groups=11, n=10, noise=0.3):
    groups = []
    for i in range(n_groups):
        x = rng.normal(size=n)
        y = x + rng.normal(scale=noise, size=n)
        groups.append((f"d{i}", x, y))
    return GroupedSeries(tuple(groups))


class TestBootstrap:
    def test_concordant_data_stays_concordant(self):
        # resamples of concordant data never produce a disagreeing pair,
        # but duplicated points are ties, which stay in the denominator
        # while contributing nothing to the numerator; draws therefore sit
        # slightly below 1 rather than exactly at it
        x = np.arange(10.0)
        g = GroupedSeries(tuple((f"d{i}", x, 3.0 * x) for i in range(5)))
        s = bootstrap(g, "aggregated_weighted_tau", iterations=1000, seed=7)
        assert s.point == 1.0
        assert np.all(s.draws > 0.8)
        assert np.all(s.draws <= 1.0)
        assert s.ci_high <= 1.0
        assert s.n_degenerate == 0

    def test_single_iteration_reproducible(self):
        g = make_series(np.random.default_rng(30))
        a = bootstrap(g, "aggregated_weighted_tau", iterations=1, seed=123)
        b = bootstrap(g, "aggregated_weighted_tau", iterations=1, seed=123)
        assert a.draws[0] == b.draws[0]

    def test_deterministic_across_runs(self):
        g = make_series(np.random.default_rng(31))
        a = bootstrap(g, "averaged_weighted_tau", iterations=200, seed=5)
        b = bootstrap(g, "averaged_weighted_tau", iterations=200, seed=5)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)

    def test_differential_oracle(self):
        # same seeded procedure coded independently: per-iteration Philox
        # stream keyed (seed, i), one integer block per group
        g = make_series(np.random.default_rng(32))
        seed, iters = 9, 50
        got = bootstrap(g, "aggregated_weighted_tau", iterations=iters, seed=seed)
        expected = []
        for i in range(iters):
            rng = np.random.Generator(np.random.Philox(key=[seed, i]))
            idx = rng.integers(0, 10, size=(len(g.groups), 10))
            num = den = 0.0
            for gi, (_, x, y) in enumerate(g.groups):
                dn, dd = oracle_weighted_sums(x[idx[gi]], y[idx[gi]])
                num += dn
                den += dd
            expected.append(num / den)
        np.testing.assert_allclose(got.draws, expected, atol=1e-12)
        assert abs(got.mean - np.mean(expected)) < 1e-12
        lo, hi = np.percentile(np.asarray(expected), [2.5, 97.5])
        assert abs(got.ci_low - lo) < 1e-12
        assert abs(got.ci_high - hi) < 1e-12

    def test_degenerate_resamples_counted(self):
        # a 2-point group resamples to a double-tie 25% of the time;
        # pearson is then undefined and the draw must be excluded
        g = GroupedSeries((("d", np.array([0.0, 1.0]), np.array([0.0, 1.0])),))
        s = bootstrap(g, "pearson", iterations=400, seed=0)
        assert s.n_degenerate > 0
        assert len(s.draws) + s.n_degenerate == 400

    def test_degenerate_point_estimate_is_error(self):
        g = GroupedSeries((("d", np.array([1.0, 1.0]), np.array([0.0, 1.0])),))
        with pytest.raises(StatisticsError, match="zero variance"):
            bootstrap(g, "pearson", iterations=10, seed=0)

    def test_all_iterations_degenerate_is_error(self):
        # find a seed whose single resample of a 2-point group duplicates
        # one element, making pearson undefined on every (= the only) draw
        g = GroupedSeries((("d", np.array([0.0, 1.0]), np.array([0.0, 1.0])),))
        seed = next(
            s
            for s in range(100)
            if len(set(np.random.Generator(np.random.Philox(key=[s, 0]))
                       .integers(0, 2, size=(1, 2)).ravel())) == 1
        )
        with pytest.raises(StatisticsError, match="were degenerate"):
            bootstrap(g, "pearson", iterations=1, seed=seed)

    def test_multi_group_rejected_for_single_group_stats(self):
        g = make_series(np.random.default_rng(33), n_groups=2)
        with pytest.raises(ValidationError, match="single group"):
            bootstrap(g, "weighted_tau", iterations=10, seed=0)

    def test_iterations_validated(self):
        g = make_series(np.random.default_rng(34), n_groups=1)
        with pytest.raises(ValidationError):
            bootstrap(g, "weighted_tau", iterations=0, seed=0)

    def test_unknown_statistic(self):
        g = make_series(np.random.default_rng(35), n_groups=1)
        with pytest.raises(ValidationError, match="unknown statistic"):
            bootstrap(g, "nope", iterations=10, seed=0)

    def test_ragged_groups_supported(self):
        rng = np.random.default_rng(36)
        groups = []
        for i, n in enumerate((5, 8, 11)):
            x = rng.normal(size=n)
            groups.append((f"d{i}", x, x + rng.normal(scale=0.3, size=n)))
        g = GroupedSeries(tuple(groups))
        s = bootstrap(g, "aggregated_weighted_tau", iterations=50, seed=4)
        assert isinstance(s, BootstrapSummary)
        assert len(s.draws) == 50
