import logging

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ligandsense as ls
from ligandsense import DomainError
from testingUtils import absorption_by_markov_chain, default_mixture

positive = st.floats(1e-3, 1e3)


@pytest.fixture(scope="module")
def kpr_fixture():
    mix = default_mixture(M=3)
    thresholds = ls.build_thresholds(mix.unbinding_rates, 3.0)
    return mix, thresholds, ls.kpr_rates(thresholds, 0.6)


class TestFunc_kpr_rates(object):
    def test_default_rates(self):
        scheme = ls.kpr_rates(ls.ThresholdScheme([0.0, 0.12, 0.6, np.inf]), 0.6)
        npt.assert_allclose(scheme.rates, [5.0, 1.25])
        assert scheme.M == 3

    def test_per_step_kappa(self):
        scheme = ls.kpr_rates([0.0, 1.0, 3.0], [1.0, 4.0])
        npt.assert_allclose(scheme.rates, [1.0, 2.0])

    @pytest.mark.parametrize("kappa", [0.0, -1.0])
    def test_invalid_kappa(self, kappa):
        with pytest.raises(DomainError):
            ls.kpr_rates([0.0, 1.0, 3.0], kappa)

    def test_needs_finite_thresholds(self):
        with pytest.raises(DomainError):
            ls.kpr_rates([0.0, 1.0, np.inf])


class TestFunc_kpr_absorption(object):
    @settings(max_examples=100, deadline=None)
    @given(b1=positive, b2=positive, k=positive)
    def test_three_substates(self, b1, b2, k):
        P = ls.kpr_absorption(ls.KprScheme([b1, b2]), k)
        expected = [k / (b1 + k),
                    b1 / (b1 + k) * k / (b2 + k),
                    b1 * b2 / ((b1 + k) * (b2 + k))]
        npt.assert_allclose(P, expected, rtol=1e-10, atol=1e-14)
        assert P.sum() == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(beta=st.lists(st.floats(0.1, 10.0), min_size=1, max_size=7), k=st.floats(0.1, 10.0))
    def test_matches_markov_chain(self, beta, k):
        P = ls.kpr_absorption(ls.KprScheme(beta), k)
        npt.assert_allclose(P, absorption_by_markov_chain(beta, k), rtol=1e-10, atol=1e-14)

    def test_single_substate(self):
        npt.assert_allclose(ls.kpr_absorption(ls.KprScheme([]), 3.0), [1.0])

    def test_no_progression(self):
        scheme = ls.kpr_rates([0.0, 0.12, 0.6], 1e-9)
        P = ls.kpr_absorption(scheme, 1.0)
        assert P[0] == pytest.approx(1.0, abs=1e-6)

    def test_matrix_columns(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        P = ls.kpr_absorption_matrix(scheme, mix.unbinding_rates)
        assert P.shape == (3, 3)
        npt.assert_allclose(P.sum(axis=0), 1.0)
        npt.assert_allclose(P[:, 1], ls.kpr_absorption(scheme, mix.unbinding_rates[1]))


class TestFunc_kpr_mixture_stats(object):
    def test_binomial_moments(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        stats = ls.kpr_mixture_stats(mix, scheme, 10000)
        npt.assert_allclose(stats.probabilities.sum(), 1.0)
        npt.assert_allclose(stats.mean, 10000 * stats.probabilities)
        npt.assert_allclose(stats.variance, stats.mean * (1 - stats.probabilities))

    def test_warns_on_small_N(self, kpr_fixture, caplog):
        mix, _, scheme = kpr_fixture
        with caplog.at_level(logging.WARNING, logger="ligandsense"):
            ls.kpr_mixture_stats(mix, scheme, 100)
        assert "coarse" in caplog.text


class TestFunc_simulate_receptors(object):
    def test_thread_independent(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        a = ls.simulate_receptors(mix, scheme, 1.0, 10000, 3, block_size=1000, threads=1)
        b = ls.simulate_receptors(mix, scheme, 1.0, 10000, 3, block_size=1000, threads=4)
        npt.assert_array_equal(a.n_D, b.n_D)
        assert a.n_S == b.n_S
        npt.assert_array_equal(a.bound_durations, b.bound_durations)

    def test_counts_are_consistent(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        counts = ls.simulate_receptors(mix, scheme, 1.0, 2000, 9)
        assert counts.n_D.sum() == 2000
        assert counts.bound_durations.shape == (2000,)
        assert counts.unbound_time > 0

    def test_means_match_theory(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        N, reps = 10000, 50
        runs = [ls.simulate_receptors(mix, scheme, 1.0, N, 100, replicate=r)
                for r in range(reps)]
        n_D = np.array([run.n_D for run in runs], dtype=float)
        n_S = np.array([run.n_S for run in runs], dtype=float)
        expected = ls.kpr_expected_counts(mix, scheme, 1.0, N)
        npt.assert_allclose(n_D.mean(axis=0), expected.n_D, rtol=0.01)
        se = n_S.std(ddof=1) / np.sqrt(reps)
        assert abs(n_S.mean() - expected.n_S) <= 4 * se

    def test_unbound_signal_is_overdispersed(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        N, reps = 1000, 400
        n_S = np.array([ls.simulate_receptors(mix, scheme, 1.0, N, 5, replicate=r).n_S
                        for r in range(reps)], dtype=float)
        mean, var = n_S.mean(), n_S.var(ddof=1)
        # Poisson counts mixed over exponential unbound durations
        assert var - mean > 3 * var * np.sqrt(2.0 / (reps - 1))
        assert var == pytest.approx(N * (1.0 + 1.0), rel=0.3)

    def test_block_split(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        N, reps = 2000, 200
        whole = np.array([ls.simulate_receptors(mix, scheme, 1.0, N, 1, replicate=r,
                                                block_size=N).n_D for r in range(reps)],
                         dtype=float)
        split = np.array([ls.simulate_receptors(mix, scheme, 1.0, N, 2, replicate=r,
                                                block_size=N // 10).n_D for r in range(reps)],
                         dtype=float)
        var_w, var_s = whole.var(axis=0, ddof=1), split.var(axis=0, ddof=1)
        se = np.sqrt((var_w + var_s) / reps)
        assert np.all(np.abs(whole.mean(axis=0) - split.mean(axis=0)) <= 3 * se)
        assert np.all(np.abs(var_s / var_w - 1.0) <= 3 * 2 * np.sqrt(1.0 / (reps - 1)))

    def test_needs_seed(self, kpr_fixture):
        mix, _, scheme = kpr_fixture
        with pytest.raises(DomainError):
            ls.simulate_receptors(mix, scheme, 1.0, 100, None)


class TestFunc_kpr_binning_bias(object):
    def test_absent_ligand(self):
        mix = default_mixture(M=3, ratios=[0.5, 0.0, 0.5])
        thresholds = ls.build_thresholds(mix.unbinding_rates, 3.0)
        bias = ls.kpr_binning_bias(mix, thresholds, ls.kpr_rates(thresholds))
        assert np.isnan(bias[1])
        assert np.all(np.isfinite(bias[[0, 2]]))

    def test_substate_mismatch(self, kpr_fixture):
        mix, thresholds, _ = kpr_fixture
        with pytest.raises(DomainError):
            ls.kpr_binning_bias(mix, thresholds, ls.KprScheme([1.0]))
