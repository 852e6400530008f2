import logging

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import solve_ivp

import ligandsense as ls
from ligandsense import DomainError, EstimatorKind, NoUnboundSignalError
from testingUtils import assert_mean_within_se, default_mixture


@pytest.fixture
def spec_fixture():
    W = np.array([[2.0, -0.5], [-0.2, 1.5]])
    return ls.CrnSpec(W, 1.0, n_D=[300.0, 700.0], n_S=1000.0)


class TestFunc_crn_steady_state(object):
    def test_formula(self):
        W = np.array([[2.0, 0.0], [0.0, 1.0]])
        npt.assert_allclose(ls.crn_steady_state([10.0, 20.0], 5.0, W, 2.0), [2.0, 2.0])

    def test_no_unbound_signal(self):
        with pytest.raises(NoUnboundSignalError):
            ls.crn_steady_state([1.0, 1.0], 0, np.eye(2), 1.0)


class TestFunc_crn_integrate(object):
    def test_reaches_steady_state(self, spec_fixture):
        spec = spec_fixture
        relax = 1.0 / spec.decay_rate
        traj = ls.crn_integrate(spec, 10 * relax, 0.05 * relax)
        target = ls.crn_steady_state(spec.n_D, spec.n_S, spec.weights, spec.binding_rate)
        npt.assert_allclose(traj.final, target, rtol=1e-3)
        npt.assert_array_equal(traj.n_Y[0], 0.0)
        assert traj.times[-1] == pytest.approx(10 * relax)

    def test_matches_reference_integrator(self, spec_fixture):
        spec = spec_fixture
        relax = 1.0 / spec.decay_rate
        traj = ls.crn_integrate(spec, 3 * relax, 0.01 * relax)
        ref = solve_ivp(lambda t, y: spec.derivative(y), (0.0, 3 * relax), spec.initial_Y,
                        t_eval=traj.times, rtol=1e-10, atol=1e-12)
        npt.assert_allclose(traj.n_Y, ref.y.T, rtol=1e-6, atol=1e-9)

    def test_unstable_step(self, spec_fixture):
        with pytest.raises(DomainError):
            ls.crn_integrate(spec_fixture, 1.0, 0.5 / spec_fixture.decay_rate)


class Test_CrnSpec(object):
    def test_negative_weights_warn(self, caplog):
        with caplog.at_level(logging.WARNING, logger="ligandsense"):
            spec = ls.CrnSpec([[1.0, -1.0], [0.0, 1.0]], 1.0, [1.0, 1.0], 10.0)
        assert spec.has_negative_weights
        assert "negative" in caplog.text

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            ls.CrnSpec(np.eye(2), 1.0, [1.0, 1.0, 1.0], 10.0)


class TestFunc_end_to_end_sense(object):
    def test_network_reads_binned_estimate(self):
        mix = default_mixture(M=3)
        result = ls.end_to_end_sense(mix, 10000, 5)
        assert result.crn_estimate.kind is EstimatorKind.CRN
        W = ls.build_S(ls.build_thresholds(mix.unbinding_rates, 3.0), mix.unbinding_rates).W
        npt.assert_allclose(result.crn_estimate.ratios, W.dot(result.counts.n_D) / 10000,
                            rtol=1e-10)
        npt.assert_allclose(result.crn_estimate.total_concentration,
                            10000 / result.counts.n_S)
        assert result.crn_estimate.total_concentration == pytest.approx(1.0, rel=0.06)

    def test_deterministic(self):
        mix = default_mixture(M=3)
        a = ls.end_to_end_sense(mix, 4000, 5, threads=1)
        b = ls.end_to_end_sense(mix, 4000, 5, threads=3)
        npt.assert_array_equal(a.crn_estimate.concentrations, b.crn_estimate.concentrations)
        npt.assert_array_equal(a.software_estimate.concentrations,
                               b.software_estimate.concentrations)

    def test_tracks_binning_bias(self):
        mix = default_mixture(M=3)
        thresholds = ls.build_thresholds(mix.unbinding_rates, 3.0)
        bias = ls.kpr_binning_bias(mix, thresholds, ls.kpr_rates(thresholds, 0.6))
        reps = 30
        dev = np.array([ls.end_to_end_sense(mix, 10000, 13, replicate=r).crn_estimate.ratios
                        / mix.ratios - 1.0 for r in range(reps)])
        se = dev.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(dev.mean(axis=0) - bias) <= 4 * se + 1e-3)


class TestFunc_crn_scaling(object):
    def test_steady_state_residual(self, spec_fixture):
        spec = spec_fixture
        Y = ls.crn_steady_state(spec.n_D, spec.n_S, spec.weights, spec.binding_rate)
        residual = spec.derivative(Y)
        assert np.max(np.abs(residual)) <= 1e-12 * np.max(np.abs(spec.production))

    def test_linear_in_n_D(self):
        W = np.array([[2.0, -0.5], [-0.2, 1.5]])
        a = ls.crn_steady_state([300.0, 0.0], 1000.0, W, 1.0)
        b = ls.crn_steady_state([0.0, 700.0], 1000.0, W, 1.0)
        npt.assert_allclose(ls.crn_steady_state([300.0, 700.0], 1000.0, W, 1.0), a + b,
                            rtol=1e-12)

    def test_halving_dt(self, spec_fixture):
        spec = spec_fixture
        relax = 1.0 / spec.decay_rate
        coarse = ls.crn_integrate(spec, 3 * relax, 0.01 * relax).final
        fine = ls.crn_integrate(spec, 3 * relax, 0.005 * relax).final
        npt.assert_allclose(fine, coarse, rtol=1e-6)

    def test_mu_halves_n_Y(self):
        mix = default_mixture(M=3)
        thresholds = ls.build_thresholds(mix.unbinding_rates, 3.0)
        W = ls.build_S(thresholds, mix.unbinding_rates).W
        scheme = ls.kpr_rates(thresholds)
        one = ls.kpr_expected_counts(mix, scheme, 1.0, 10000)
        two = ls.kpr_expected_counts(mix, scheme, 2.0, 10000)
        npt.assert_allclose(two.n_D, one.n_D)
        n_Y1 = ls.crn_steady_state(one.n_D, one.n_S, W, mix.binding_rate)
        n_Y2 = ls.crn_steady_state(two.n_D, two.n_S, W, mix.binding_rate)
        npt.assert_allclose(n_Y2, 0.5 * n_Y1, rtol=1e-12)

    def test_mu_halves_simulated_n_Y(self):
        mix = default_mixture(M=3)
        reps = 20
        n_Y = {mu: np.array([ls.end_to_end_sense(mix, 4000, 11, mu=mu, replicate=r).n_Y
                             for r in range(reps)]) for mu in (1.0, 2.0)}
        se = np.sqrt(n_Y[1.0].var(axis=0, ddof=1) / reps
                     + 4 * n_Y[2.0].var(axis=0, ddof=1) / reps)
        diff = n_Y[1.0].mean(axis=0) - 2 * n_Y[2.0].mean(axis=0)
        assert np.all(np.abs(diff) <= 4 * se)

    def test_total_concentration_scaling(self):
        N, reps = 4000, 20
        runs = {}
        for c_tot in (1.0, 2.0):
            mix = default_mixture(M=3, total_concentration=c_tot)
            runs[c_tot] = [ls.end_to_end_sense(mix, N, 19, replicate=r) for r in range(reps)]
        for c_tot, results in runs.items():
            n_S = np.array([res.counts.n_S for res in results], dtype=float)
            assert_mean_within_se(n_S, N / c_tot, band=3.0)
            c_hat = np.array([res.crn_estimate.total_concentration for res in results])
            assert_mean_within_se(c_hat, c_tot, band=3.0)
        a = np.array([res.crn_estimate.ratios for res in runs[1.0]])
        b = np.array([res.crn_estimate.ratios for res in runs[2.0]])
        se = np.sqrt(a.var(axis=0, ddof=1) / reps + b.var(axis=0, ddof=1) / reps)
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 3 * se)
