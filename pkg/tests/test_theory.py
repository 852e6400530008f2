import numpy as np
import numpy.testing as npt
import pytest

import ligandsense as ls
from ligandsense import DomainError
from testingUtils import assert_mean_within_se, default_mixture


@pytest.fixture(scope="module", params=[2, 3, 5])
def crlb_fixture(request):
    mix = default_mixture(M=request.param)
    N = 10000
    return mix, N, ls.crlb(mix.ratios, mix.unbinding_rates, N)


class TestFunc_moments(object):
    def test_total_variance(self):
        assert ls.var_total_estimator(1.0, 100) == pytest.approx(1.0 / 98)
        assert ls.var_total_estimator(2.0, 3) == pytest.approx(4.0)
        with pytest.raises(DomainError):
            ls.var_total_estimator(1.0, 2)

    def test_mean_reciprocal_unbound_time(self):
        assert ls.mean_reciprocal_unbound_time(1.0, 1.0, 100) == pytest.approx(1.0 / 99)
        with pytest.raises(DomainError):
            ls.mean_reciprocal_unbound_time(1.0, 1.0, 1)

    def test_count_covariance_rows_sum_to_zero(self):
        cov = ls.count_covariance([0.2, 0.3, 0.5], 100)
        npt.assert_allclose(cov.sum(axis=1), 0.0, atol=1e-12)
        npt.assert_allclose(np.diag(cov), [16.0, 21.0, 25.0])


class Test_ErrorReport(object):
    @pytest.mark.parametrize("kind", ["unbiased", "biased"])
    def test_mse_decomposition(self, kind):
        report = ls.estimator_analytics(kind, default_mixture(), 10000)
        npt.assert_allclose(report.mse, report.variance + report.bias ** 2, rtol=1e-10)
        assert report.average_nmse == pytest.approx(np.mean(report.nmse))

    def test_unbiased_has_no_bias(self):
        report = ls.estimator_analytics("unbiased", default_mixture(), 10000)
        npt.assert_allclose(report.bias, 0.0, atol=1e-12)

    def test_biased_with_exact_H(self):
        mix = default_mixture(M=3)
        S = ls.build_S(ls.build_thresholds(mix.unbinding_rates, 5.0), mix.unbinding_rates).S
        report = ls.biased_estimator_analytics(S, S, mix.ratios, 1.0, 1000)
        npt.assert_allclose(report.bias, 0.0, atol=1e-12)

    def test_biased_is_biased(self):
        report = ls.estimator_analytics("biased", default_mixture(), 10000)
        assert np.max(np.abs(report.bias)) > 1e-6

    def test_average_nmse_needs_present_ligands(self):
        mix = default_mixture(M=3, ratios=[0.5, 0.0, 0.5])
        report = ls.estimator_analytics("unbiased", mix, 10000)
        with pytest.raises(DomainError):
            report.average_nmse
        assert np.isfinite(report.total_normalized_mse)

    def test_retained_normalizer_matches_without_filtering(self):
        mix = default_mixture()
        a = ls.estimator_analytics("unbiased", mix, 10000, normalizer="sampled")
        b = ls.estimator_analytics("unbiased", mix, 10000, normalizer="retained")
        npt.assert_allclose(a.variance, b.variance, rtol=1e-10)


class TestFunc_fisher_information(object):
    def test_single_ligand(self):
        fisher = ls.fisher_information([1.0], [2.0], 10000)
        assert fisher.matrix[0, 0] == pytest.approx(10000, rel=1e-8)

    def test_symmetric_psd(self, crlb_fixture):
        _, _, result = crlb_fixture
        I = result.fisher.matrix
        npt.assert_allclose(I, I.T, atol=1e-10 * np.abs(I).max())
        assert np.linalg.eigvalsh(I).min() >= -1e-9 * np.trace(I)

    def test_ratio_identity(self, crlb_fixture):
        # sum_j I_ij alpha_j = N for every i
        mix, N, result = crlb_fixture
        npt.assert_allclose(result.fisher.matrix.dot(mix.ratios), N, rtol=1e-6)

    def test_zero_ratio(self):
        with pytest.raises(DomainError):
            ls.fisher_information([0.5, 0.0, 0.5], [25.0, 5.0, 1.0], 100)


class TestFunc_crlb(object):
    def test_simplex_restriction(self):
        mix = default_mixture(M=2)
        N = 10000
        tight = ls.crlb(mix.ratios, mix.unbinding_rates, N)
        loose = ls.crlb(mix.ratios, mix.unbinding_rates, N, simplex=False)
        npt.assert_allclose(loose.ratio_bound - tight.ratio_bound, mix.ratios ** 2 / N,
                            rtol=1e-8)
        # the unconstrained bound exceeds an unbiased estimator's variance
        report = ls.estimator_analytics("unbiased", mix, N)
        assert np.any(loose.ratio_bound > report.ratio_variance)
        assert np.all(tight.ratio_bound <= report.ratio_variance)

    def test_dominated_by_unbiased(self, crlb_fixture):
        mix, N, result = crlb_fixture
        report = ls.estimator_analytics("unbiased", mix, N)
        assert np.all(result.concentration_bound <= report.variance)
        assert np.all(result.ratio_bound <= report.ratio_variance)

    def test_absent_ligands(self):
        result = ls.crlb([0.5, 0.0, 0.5], [25.0, 5.0, 1.0], 1000)
        assert np.isnan(result.ratio_bound[1])
        assert np.all(np.isfinite(result.ratio_bound[[0, 2]]))
        npt.assert_array_equal(result.present, [True, False, True])

    def test_report(self):
        report = ls.crlb_report(default_mixture(M=3), 10000)
        npt.assert_allclose(report.bias, 0.0)
        npt.assert_allclose(report.variance, report.crlb)


class TestFunc_analytic_claims(object):
    @pytest.mark.parametrize("M", range(2, 11))
    def test_average_nmse_is_small(self, M):
        report = ls.estimator_analytics("unbiased", default_mixture(M=M), 10000)
        assert report.average_nmse < 1e-2

    def test_biased_wins_for_similar_ligands(self):
        mix = default_mixture(M=5, chi=1.5)
        biased = ls.estimator_analytics("biased", mix, 10000, nu=5.0)
        unbiased = ls.estimator_analytics("unbiased", mix, 10000, nu=3.0)
        assert biased.average_nmse < unbiased.average_nmse


class TestFunc_optimize_nu(object):
    def test_golden_matches_grid(self):
        mix = default_mixture()
        golden = ls.optimize_nu(mix, 10000)
        grid = ls.optimize_nu(mix, 10000, method="grid")
        assert golden.method == "golden"
        assert not golden.fallback
        assert 2.0 <= golden.nu <= 4.0
        spacing = (ls.NU_BOUNDS[1] - ls.NU_BOUNDS[0]) / (ls.NU_GRID_POINTS - 1)
        assert abs(golden.nu - grid.nu) <= spacing
        assert golden.objective <= grid.objective + 1e-12

    def test_invalid_bounds(self):
        with pytest.raises(DomainError):
            ls.optimize_nu(default_mixture(), 10000, bounds=(5.0, 1.0))

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            ls.optimize_nu(default_mixture(), 10000, method="newton")


class TestFunc_unknown_ligands(object):
    def test_bias_matches_monte_carlo(self):
        known = default_mixture()
        scheme = ls.build_thresholds(known.unbinding_rates, 3.0)
        report = ls.unknown_ligand_analytics(known.unbinding_rates, [100.0], [0.1], scheme,
                                             1.0, 10000)
        truth, known_index = known.with_unknown_ligands([100.0], [0.1])
        W = ls.build_S(scheme, known.unbinding_rates).W
        stats = ls.sample_sufficient_statistics(truth, scheme, 10000, 5, size=100000)
        ratios = ls.estimate_ratios_unbiased(stats.counts, 10000, W)
        se = ratios.std(axis=0, ddof=1) / np.sqrt(ratios.shape[0])
        assert np.all(np.abs(ratios.mean(axis=0) - report.ratio_mean) <= 4 * se)
        assert np.max(np.abs(report.bias)) > 1e-3

    def test_filtering_removes_fast_ligand(self):
        known = default_mixture()
        lower, upper = ls.filtering_bounds(known.unbinding_rates, 3.0)
        scheme = ls.build_thresholds(known.unbinding_rates, 3.0, lower, upper)
        report = ls.unknown_ligand_analytics(known.unbinding_rates, [1e5], [0.1], scheme,
                                             1.0, 10000)
        assert np.max(np.abs(report.bias)) < 1e-6

    @pytest.mark.parametrize("k_u, lo, hi", [(1e4, 1e-6, 5e-5), (3e4, 0.0, 1e-6)])
    def test_filtering_residual_bias(self, k_u, lo, hi):
        # the default lower filter leaves exp(-k_u T_0) of the fast ligand
        known = default_mixture()
        lower, upper = ls.filtering_bounds(known.unbinding_rates, 3.0)
        scheme = ls.build_thresholds(known.unbinding_rates, 3.0, lower, upper)
        report = ls.unknown_ligand_analytics(known.unbinding_rates, [k_u], [0.1], scheme,
                                             1.0, 10000)
        assert lo < np.max(np.abs(report.bias)) < hi

    def test_biased_kind(self):
        known = default_mixture()
        scheme = ls.build_thresholds(known.unbinding_rates, 5.0)
        report = ls.unknown_ligand_analytics(known.unbinding_rates, [100.0], [0.1], scheme,
                                             1.0, 10000, kind="biased")
        assert report.kind == "biased"
        assert report.M == 5


class TestFunc_monte_carlo_agreement(object):
    @pytest.mark.parametrize("kind, nu", [("unbiased", 3.0), ("biased", 5.0)])
    def test_similar_ligands(self, kind, nu):
        mix = default_mixture(M=5, chi=1.5)
        N, trials = 10000, 40000
        scheme = ls.build_thresholds(mix.unbinding_rates, nu)
        matrices = ls.build_S(scheme, mix.unbinding_rates)
        stats = ls.sample_sufficient_statistics(mix, scheme, N, 61, size=trials)
        if kind == "biased":
            R = ls.build_R(scheme, mix.unbinding_rates)
            ratios = ls.estimate_ratios_biased(stats.counts, N, R)
        else:
            ratios = ls.estimate_ratios_unbiased(stats.counts, N, matrices.W)
        c_tot = ls.estimate_total_concentration(stats.unbound_time, N, mix.binding_rate)
        c = c_tot[:, None] * ratios
        report = ls.estimator_analytics(kind, mix, N, nu=nu)
        assert_mean_within_se(c, report.mean)
        npt.assert_allclose(c.var(axis=0, ddof=1), report.variance, rtol=0.05)


class TestFunc_scale_free(object):
    @pytest.mark.parametrize("kind", ["unbiased", "biased"])
    def test_nmse_does_not_depend_on_total_concentration(self, kind):
        one = ls.estimator_analytics(kind, default_mixture(), 10000)
        ten = ls.estimator_analytics(kind, default_mixture(total_concentration=10.0), 10000)
        assert ten.average_nmse == pytest.approx(one.average_nmse, rel=1e-10)
        npt.assert_allclose(ten.nmse, one.nmse, rtol=1e-10)
        npt.assert_allclose(ten.variance, 100 * one.variance, rtol=1e-10)
