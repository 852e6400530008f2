import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

import ligandsense as ls
from ligandsense import DomainError
from testingUtils import assert_mean_within_se, default_mixture


class TestFunc_ratio_builders(object):
    def test_similarity_rates(self):
        npt.assert_allclose(ls.similarity_rates(3, 5.0), [25.0, 5.0, 1.0])
        npt.assert_allclose(ls.similarity_rates(2, 2.0, k_anchor=3.0), [6.0, 3.0])

    @pytest.mark.parametrize("chi", [1.0, 0.5, -2.0])
    def test_similarity_needs_chi_above_one(self, chi):
        with pytest.raises(DomainError):
            ls.similarity_rates(3, chi)

    def test_highest_affinity(self):
        npt.assert_allclose(ls.highest_affinity_ratios(5, 0.6), [0.1, 0.1, 0.1, 0.1, 0.6])

    def test_absence(self):
        npt.assert_allclose(ls.absence_ratios(4, [2]), [1. / 3, 0.0, 1. / 3, 1. / 3])
        with pytest.raises(DomainError):
            ls.absence_ratios(2, [1, 2])

    def test_unknown_shares(self):
        known, unknown = ls.unknown_ligand_ratios(5, [0.1])
        npt.assert_allclose(known, 0.18)
        npt.assert_allclose(known.sum() + unknown.sum(), 1.0)


class Test_LigandMixture(object):
    def test_concentrations(self):
        mix = ls.LigandMixture(2.0, [4.0, 1.0], [0.25, 0.75], total_concentration=8.0)
        npt.assert_allclose(mix.concentrations, [2.0, 6.0])
        npt.assert_allclose(mix.dissociation_constants, [2.0, 0.5])

    @pytest.mark.parametrize("rates, ratios", [
        ([1.0, 2.0], [0.5, 0.5]),     # increasing
        ([2.0, 2.0], [0.5, 0.5]),     # duplicate
        ([2.0, 1.0], [0.6, 0.6]),     # off the simplex
        ([2.0, 1.0], [1.2, -0.2]),    # negative
        ([2.0, -1.0], [0.5, 0.5]),
    ])
    def test_rejects_invalid(self, rates, ratios):
        with pytest.raises(DomainError):
            ls.LigandMixture(1.0, rates, ratios)

    def test_rejects_nonpositive_binding_rate(self):
        with pytest.raises(DomainError):
            ls.LigandMixture(0.0, [1.0], [1.0])

    def test_arrays_are_read_only(self):
        mix = default_mixture()
        with pytest.raises(ValueError):
            mix.ratios[0] = 1.0

    def test_with_unknown_ligands(self):
        mix, known_index = default_mixture().with_unknown_ligands([100.0], [0.1])
        npt.assert_allclose(mix.unbinding_rates, [625.0, 125.0, 100.0, 25.0, 5.0, 1.0])
        npt.assert_array_equal(known_index, [0, 1, 3, 4, 5])
        npt.assert_allclose(mix.ratios[known_index], 0.18)
        npt.assert_allclose(mix.ratios[2], 0.1)


class TestFunc_binding_statistics(object):
    def test_single_ligand_bound_probability(self):
        mix = ls.LigandMixture(1.0, [1.0], [1.0])
        assert ls.bound_probability(mix) == pytest.approx(0.5)
        mean, var = ls.bound_count_stats(mix, 100)
        assert mean == pytest.approx(50.0)
        assert var == pytest.approx(25.0)

    def test_diffusion_limited_rate(self):
        assert ls.diffusion_limited_binding_rate(2.0, 0.5) == pytest.approx(4.0)

    def test_pdf_integrates_to_one(self):
        mix = default_mixture()
        total = sum(quad(lambda t: ls.bound_time_pdf(mix, t), a, b, limit=200)[0]
                    for a, b in [(0, 0.01), (0.01, 1.0), (1.0, 60.0)])
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_cdf_is_monotone(self):
        mix = default_mixture()
        tau = np.linspace(0.0, 40.0, 500)
        cdf = ls.bound_time_cdf(mix, tau)
        assert cdf[0] == 0.0
        assert np.all(np.diff(cdf) >= 0)
        assert cdf[-1] == pytest.approx(1.0, abs=1e-12)

    def test_negative_duration(self):
        with pytest.raises(DomainError):
            ls.bound_time_pdf(default_mixture(), -1.0)


class TestFunc_sample_observations(object):
    def test_deterministic(self):
        mix = default_mixture()
        a = ls.sample_observations(mix, 500, 11)
        b = ls.sample_observations(mix, 500, 11)
        npt.assert_array_equal(a.bound_durations, b.bound_durations)
        assert a.unbound_time == b.unbound_time
        c = ls.sample_observations(mix, 500, 12)
        assert not np.array_equal(a.bound_durations, c.bound_durations)

    def test_unbound_durations(self):
        mix = default_mixture(total_concentration=2.0)
        obs = ls.sample_observations(mix, 20000, 3, keep_unbound=True)
        assert obs.unbound_time == pytest.approx(obs.unbound_durations.sum())
        assert_mean_within_se(obs.unbound_durations, 0.5)

    def test_type_frequencies(self):
        mix = default_mixture(M=3, ratios=[0.2, 0.3, 0.5])
        obs = ls.sample_observations(mix, 30000, 5)
        onehot = np.eye(3)[obs.ligand_types]
        assert_mean_within_se(onehot, mix.ratios)

    def test_needs_three_samples(self):
        with pytest.raises(DomainError):
            ls.sample_observations(default_mixture(), 2, 0)
        with pytest.raises(DomainError):
            ls.ObservationSet(1.0, [0.1, 0.2])


class TestFunc_log_likelihood(object):
    def test_unbound_term(self):
        assert ls.log_likelihood_unbound(1, 1.0, 1.0, 1.0) == pytest.approx(-1.0)

    def test_single_duration(self):
        value = ls.log_likelihood_bound([0.5], [1.0], [3.0])
        assert value == pytest.approx(np.log(3.0) - 1.5)

    def test_zero_ratio_and_long_durations(self):
        value = ls.log_likelihood_bound([1e4, 0.1], [0.0, 1.0], [5.0, 1.0])
        assert np.isfinite(value)
        assert value == pytest.approx(-1e4 - 0.1)

    def test_rejects_off_simplex(self):
        obs = ls.ObservationSet(3.0, [0.1, 0.2, 0.3])
        with pytest.raises(DomainError):
            ls.log_likelihood(obs, 1.0, [0.7, 0.7], 1.0, [2.0, 1.0])
        with pytest.raises(DomainError):
            ls.log_likelihood(obs, 0.0, [0.5, 0.5], 1.0, [2.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(tau=st.floats(0.0, 20.0), a=st.floats(0.01, 0.99))
    def test_matches_pdf(self, tau, a):
        mix = ls.LigandMixture(1.0, [4.0, 0.5], [a, 1.0 - a])
        expected = np.log(ls.bound_time_pdf(mix, tau))
        value = ls.log_likelihood_bound([tau], mix.ratios, mix.unbinding_rates)
        assert value == pytest.approx(float(expected), rel=1e-10, abs=1e-10)
