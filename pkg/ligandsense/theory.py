"""Closed-form and numerically integrated error analytics.

Every estimator in :mod:`ligandsense.estimators` is linear in the
interval counts, whose covariance is multinomial,

.. math:: \\mathrm{Cov}[n_i, n_j] = N (\\delta_{ij} p_i - p_i p_j),

and independent of the total unbound time. Means, variances and MSEs
of the concentration estimates therefore follow in closed form. The
Cramér-Rao bound needs the Fisher information of the exponential
mixture, which is integrated numerically.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .estimators import (DEFAULT_NU_BIASED, DEFAULT_NU_UNBIASED, EstimatorKind, NORMALIZERS,
                         build_H, build_S, build_thresholds, interval_mass_matrix)
from .kinetics import check_ratios, check_unbinding_rates, unknown_ligand_ratios
from .utils import (DomainError, IndistinguishableLigandsError, TINY,
                    UnidentifiableMixtureError, check_positive, parallel_map)

logger = logging.getLogger(__name__)

__all__ = [
    "ErrorReport", "FisherMatrix", "CrlbResult", "NuOptimum", "METRICS", "NU_BOUNDS",
    "NU_GRID_POINTS",
    "var_total_estimator", "mean_reciprocal_unbound_time", "count_covariance",
    "linear_ratio_moments", "unbiased_ratio_variance", "concentration_variance",
    "unbiased_estimator_analytics", "biased_estimator_analytics", "estimator_analytics",
    "fisher_information", "crlb", "crlb_report", "average_nmse", "total_normalized_mse",
    "report_metric", "unknown_ligand_analytics", "optimize_nu",
]

# Constants
FISHER_TOL = 1e-8
NU_BOUNDS = (0.2, 10.0)
NU_GRID_POINTS = 200
METRICS = ("average_nmse", "total_normalized_mse", "highest_nmse")


@dataclass(frozen=True)
class ErrorReport:
    """Per-ligand error statistics of a concentration estimator.

    The MSE is derived from the variance and the bias, so
    ``mse == variance + bias ** 2`` holds by construction.
    """
    kind: str
    true_values: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    total_concentration: float
    crlb: np.ndarray = field(default=None)
    ratio_mean: np.ndarray = field(default=None)
    ratio_variance: np.ndarray = field(default=None)

    @property
    def M(self):
        return self.true_values.shape[0]

    @property
    def bias(self):
        return self.mean - self.true_values

    @property
    def mse(self):
        return self.variance + self.bias ** 2

    @property
    def nmse(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.mse / self.true_values ** 2

    @property
    def average_nmse(self):
        return average_nmse(self)

    @property
    def total_normalized_mse(self):
        return total_normalized_mse(self)

    @property
    def highest_nmse(self):
        """NMSE of the highest-affinity (last) ligand."""
        if self.true_values[-1] == 0:
            raise DomainError("The highest-affinity ligand is absent; its NMSE is undefined")
        return float(self.nmse[-1])

    def __repr__(self):
        return "ErrorReport({}, M:{:d}, mse:{})".format(self.kind, self.M, self.mse)


@dataclass(frozen=True)
class FisherMatrix:
    """Fisher information of the ratios, without the simplex constraint.

    Attributes
    ----------
    matrix : array
        Shape (M, M). Symmetric.
    N : int
    tolerance : float
        Largest relative error estimate over the integrated entries.
    """
    matrix: np.ndarray
    N: int
    tolerance: float

    @property
    def M(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CrlbResult:
    """Lower bounds on the variance of unbiased estimators.

    Entries of absent ligands are NaN.
    """
    ratio_bound: np.ndarray
    concentration_bound: np.ndarray
    fisher: FisherMatrix
    present: np.ndarray


@dataclass(frozen=True)
class NuOptimum:
    nu: float
    objective: float
    method: str
    fallback: bool = False


###############################################################################
#                            Total concentration                              #
###############################################################################


def var_total_estimator(total_concentration, N):
    """Variance of :math:`\\hat c_{tot}`, :math:`c_{tot}^2/(N-2)`."""
    if N <= 2:
        raise DomainError("The variance of c_tot is finite only for N > 2, got {!r}".format(N))
    return total_concentration ** 2 / (N - 2.0)


def mean_reciprocal_unbound_time(total_concentration, binding_rate, N):
    """Mean of the inverse-gamma variable :math:`1/T_u`.

    .. math:: \\mathbb{E}[1/T_u] = \\frac{k^+ c_{tot}}{N - 1}
    """
    if N <= 1:
        raise DomainError("E[1/T_u] is finite only for N > 1, got {!r}".format(N))
    return binding_rate * total_concentration / (N - 1.0)


###############################################################################
#                           Linear ratio estimators                           #
###############################################################################


def _check_masses(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < -TINY) or np.any(p > 1 + TINY) or p.sum() > 1 + TINY:
        raise DomainError("Interval masses are not a probability vector: {}".format(p))
    return np.clip(p, 0.0, 1.0)


def count_covariance(p, N):
    """Multinomial covariance of the interval counts."""
    p = _check_masses(p)
    return N * (np.diag(p) - np.outer(p, p))


def linear_ratio_moments(A, p, N, normalizer="sampled"):
    """Mean and variance of :math:`\\hat\\alpha = A n / D`.

    Parameters
    ----------
    A : array
        Shape (M, M). `W` or `R`.
    p : array
        Shape (M,). Interval masses of the true channel.
    N : int
    normalizer : str
        ``sampled`` uses :math:`D = N`. ``retained`` uses :math:`D = N'`,
        approximated by conditioning on :math:`N' = N P_{ret}` events
        with masses :math:`p / P_{ret}`.

    Returns
    -------
    mean : array
    variance : array
    """
    if normalizer not in NORMALIZERS:
        raise DomainError("normalizer must be one of {}, got {!r}".format(NORMALIZERS, normalizer))
    p = _check_masses(p)
    if normalizer == "retained":
        retained = p.sum()
        if retained <= 0:
            raise DomainError("No probability mass is retained by the thresholds")
        p, N = p / retained, N * retained
    A = np.asarray(A, dtype=float)
    mean = A.dot(p)
    variance = np.einsum("li,ij,lj->l", A, count_covariance(p, N), A) / N ** 2
    return mean, np.maximum(variance, 0.0)


def _inverse(S):
    return scipy.linalg.lu_solve(scipy.linalg.lu_factor(S), np.eye(S.shape[0]))


def unbiased_ratio_variance(S, ratios, N, normalizer="sampled"):
    """Variance of the unbiased ratio estimate.

    .. math::

        \\mathrm{Var}[\\hat\\alpha_l] = \\frac{1}{N^2} \\sum_i \\sum_j
        w_{li} w_{lj} \\mathrm{Cov}[n_i, n_j]
    """
    S = np.asarray(S, dtype=float)
    ratios = check_ratios(ratios, S.shape[1])
    return linear_ratio_moments(_inverse(S), S.dot(ratios), N, normalizer)[1]


def concentration_variance(var_ratio, mean_ratio, total_concentration, N):
    """Variance of the product of the independent :math:`\\hat c_{tot}` and
    :math:`\\hat\\alpha`.

    .. math::

        \\mathrm{Var}[\\hat c] = \\mathrm{Var}[\\hat c_{tot}] \\mathrm{Var}[\\hat\\alpha]
        + \\mathrm{Var}[\\hat c_{tot}] (\\mathbb{E}[\\hat\\alpha] \\odot \\mathbb{E}[\\hat\\alpha])
        + \\mathrm{Var}[\\hat\\alpha] c_{tot}^2
    """
    var_tot = var_total_estimator(total_concentration, N)
    var_ratio = np.asarray(var_ratio, dtype=float)
    mean_ratio = np.asarray(mean_ratio, dtype=float)
    return var_tot * var_ratio + var_tot * mean_ratio ** 2 + var_ratio * total_concentration ** 2


def _linear_report(kind, A, p, true_ratios, total_concentration, N, normalizer):
    mean_r, var_r = linear_ratio_moments(A, p, N, normalizer)
    var_c = concentration_variance(var_r, mean_r, total_concentration, N)
    return ErrorReport(kind=kind,
                       true_values=total_concentration * np.asarray(true_ratios, dtype=float),
                       mean=total_concentration * mean_r,
                       variance=var_c,
                       total_concentration=total_concentration,
                       ratio_mean=mean_r,
                       ratio_variance=var_r)


def unbiased_estimator_analytics(S, ratios, total_concentration, N, normalizer="sampled"):
    """:class:`ErrorReport` of :math:`\\hat c = \\hat c_{tot} W n / N`."""
    S = np.asarray(S, dtype=float)
    ratios = check_ratios(ratios, S.shape[1])
    return _linear_report(EstimatorKind.UNBIASED.value, _inverse(S), S.dot(ratios), ratios,
                          total_concentration, N, normalizer)


def biased_estimator_analytics(S, H, ratios, total_concentration, N, normalizer="sampled"):
    """:class:`ErrorReport` of the simplified biased estimator.

    The ratio mean is :math:`R p` and the bias :math:`(R - W) p`, with
    :math:`R = H^{-1}`; the concentration bias scales it by
    :math:`c_{tot}`.
    """
    S = np.asarray(S, dtype=float)
    ratios = check_ratios(ratios, S.shape[1])
    R = _inverse(np.asarray(H, dtype=float))
    return _linear_report(EstimatorKind.BIASED.value, R, S.dot(ratios), ratios,
                          total_concentration, N, normalizer)


def estimator_analytics(kind, mix, N, nu=None, lower=0.0, upper=np.inf, normalizer="sampled",
                        tol=FISHER_TOL):
    """Analytic :class:`ErrorReport` of one estimator on a mixture.

    Parameters
    ----------
    kind : str or :class:`EstimatorKind`
        ``unbiased``, ``biased`` or ``crlb`` (the bound, reported as an
        unbiased estimator that attains it).
    mix : :class:`LigandMixture`
    N : int
    nu : float, optional
        Defaults to 3 for the unbiased estimator and 5 for the biased
        one.
    lower, upper : float, optional
        Filtering bounds.
    """
    kind = getattr(kind, "value", kind)
    if kind == "crlb":
        return crlb_report(mix, N, tol=tol)
    if kind not in (EstimatorKind.UNBIASED.value, EstimatorKind.BIASED.value):
        raise DomainError("No closed-form analytics for estimator {!r}".format(kind))
    if nu is None:
        nu = DEFAULT_NU_BIASED if kind == EstimatorKind.BIASED.value else DEFAULT_NU_UNBIASED
    scheme = build_thresholds(mix.unbinding_rates, nu, lower, upper)
    matrices = build_S(scheme, mix.unbinding_rates)
    if kind == EstimatorKind.UNBIASED.value:
        return unbiased_estimator_analytics(matrices.S, mix.ratios, mix.total_concentration, N,
                                            normalizer)
    H = build_H(scheme, mix.unbinding_rates)
    return biased_estimator_analytics(matrices.S, H, mix.ratios, mix.total_concentration, N,
                                      normalizer)


###############################################################################
#                          Fisher information & CRLB                          #
###############################################################################


def _fisher_entry(log_weights, rates, i, j, tol):
    k = rates
    d = k[i] + k[j] - k[-1]
    # p(tau) >= alpha_M k_M exp(-k_M tau) bounds the tail of the integrand
    amp = np.exp(np.log(k[i]) + np.log(k[j]) - log_weights[-1])
    log_kij = np.log(k[i]) + np.log(k[j])

    def integrand(tau):
        return np.exp(log_kij - (k[i] + k[j]) * tau - logsumexp(log_weights - k * tau))

    tau_max = (np.log(max(amp / (d * tol), 1.0)) + 5.0) / d
    breaks = np.unique(np.r_[0.0, 1.0 / k[(1.0 / k) < tau_max], tau_max])
    value, error = 0.0, 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        v, e = quad(integrand, a, b, epsabs=0.0, epsrel=tol, limit=200)
        value, error = value + v, error + e
    tail = amp / d * np.exp(-d * tau_max)
    if tail > tol * value:
        extra = (np.log(tail / (tol * value)) + 5.0) / d
        v, e = quad(integrand, tau_max, tau_max + extra, epsabs=0.0, epsrel=tol, limit=200)
        value, error = value + v, error + e
    logger.debug("Fisher entry (%d, %d): %.10g on [0, %.4g]", i, j, value, tau_max)
    return value, error / value if value > 0 else 0.0


def fisher_information(ratios, unbinding_rates, N, tol=FISHER_TOL, threads=None):
    """Fisher information of the ratios from `N` bound durations.

    .. math::

        I_{ij} = N k^-_i k^-_j \\int_0^\\infty
        \\frac{e^{-(k^-_i + k^-_j)\\tau}}{p(\\tau)} d\\tau

    The integrand is evaluated in log-space and integrated piecewise
    between the time scales :math:`1/k^-_l`; the upper limit is chosen
    so the neglected tail is below `tol` relative.

    Raises
    ------
    DomainError
        If a ratio is zero. Drop absent components first, as
        :func:`crlb` does.
    """
    k = check_unbinding_rates(unbinding_rates)
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios <= 0):
        raise DomainError("Fisher information needs strictly positive ratios; "
                          "drop absent components: {}".format(ratios))
    ratios = check_ratios(ratios, k.shape[0])
    tol = check_positive("tol", tol)
    log_weights = np.log(ratios) + np.log(k)
    M = k.shape[0]
    pairs = [(i, j) for i in range(M) for j in range(i, M)]
    results = parallel_map(lambda ij: _fisher_entry(log_weights, k, ij[0], ij[1], tol), pairs,
                           threads)
    I = np.zeros((M, M))
    achieved = 0.0
    for (i, j), (value, rel_err) in zip(pairs, results):
        I[i, j] = I[j, i] = N * value
        achieved = max(achieved, rel_err)
    return FisherMatrix(matrix=I, N=int(N), tolerance=achieved)


def crlb(ratios, unbinding_rates, N, total_concentration=1.0, tol=FISHER_TOL, simplex=True,
         threads=None):
    """Cramér-Rao lower bounds of the ratios and the concentrations.

    The ratio bound is the diagonal of the inverse Fisher matrix. With
    `simplex` (the default) the variance :math:`\\alpha_i^2/N` of the
    total-mass direction is removed from it, which no estimator whose
    ratios sum to one pays:

    .. math:: (I^{-1})_{ii} - \\alpha_i^2 / N

    This is the bound restricted to the simplex; it follows from
    :math:`I \\boldsymbol\\alpha = N \\mathbf{1}`. The concentration bound
    combines it with :math:`\\mathrm{Var}[\\hat c_{tot}]` through
    :func:`concentration_variance`.

    Zero ratios are excluded from the Fisher matrix and get NaN bounds.

    Raises
    ------
    UnidentifiableMixtureError
        If the Fisher matrix is singular.
    """
    ratios = check_ratios(ratios)
    k = check_unbinding_rates(unbinding_rates)
    present = ratios > 0
    sub = ratios[present]
    fisher = fisher_information(sub, k[present], N, tol=tol, threads=threads)
    cond = np.linalg.cond(fisher.matrix)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise UnidentifiableMixtureError(
            "Singular Fisher information (condition number {:.3e})".format(cond))
    bound = np.diag(scipy.linalg.inv(fisher.matrix))
    if simplex:
        bound = np.maximum(bound - sub ** 2 / N, 0.0)
    ratio_bound = np.full(ratios.shape, np.nan)
    ratio_bound[present] = bound
    conc_bound = np.full(ratios.shape, np.nan)
    conc_bound[present] = concentration_variance(bound, sub, total_concentration, N)
    return CrlbResult(ratio_bound=ratio_bound, concentration_bound=conc_bound,
                      fisher=fisher, present=present)


def crlb_report(mix, N, tol=FISHER_TOL, threads=None):
    """The CRLB as the report of an unbiased estimator attaining it."""
    result = crlb(mix.ratios, mix.unbinding_rates, N, mix.total_concentration, tol=tol,
                  threads=threads)
    c = mix.concentrations
    return ErrorReport(kind="crlb", true_values=c, mean=c.copy(),
                       variance=result.concentration_bound,
                       total_concentration=mix.total_concentration,
                       crlb=result.concentration_bound,
                       ratio_mean=mix.ratios.copy(), ratio_variance=result.ratio_bound)


###############################################################################
#                                   Metrics                                   #
###############################################################################


def average_nmse(report):
    """:math:`\\frac{1}{M} \\sum_i \\mathrm{MSE}[\\hat c_i] / c_i^2`.

    Raises
    ------
    DomainError
        If a true concentration is zero; use
        :func:`total_normalized_mse` for absence scenarios.
    """
    if np.any(report.true_values == 0):
        raise DomainError("Average NMSE is undefined with absent ligands; "
                          "use total_normalized_mse")
    return float(np.mean(report.nmse))


def total_normalized_mse(report, total_concentration=None):
    """:math:`\\sum_i \\mathrm{MSE}[\\hat c_i] / c_{tot}^2`.

    NaN entries, the bounds of absent ligands, are skipped.
    """
    c_tot = report.total_concentration if total_concentration is None else total_concentration
    return float(np.nansum(report.mse)) / c_tot ** 2


def report_metric(report, metric):
    """Evaluate one of :data:`METRICS` on a report."""
    if metric == "average_nmse":
        return average_nmse(report)
    if metric == "total_normalized_mse":
        return total_normalized_mse(report)
    if metric == "highest_nmse":
        return report.highest_nmse
    raise DomainError("Unknown metric {!r}; expected one of {}".format(metric, METRICS))


###############################################################################
#                               Unknown ligands                               #
###############################################################################


def unknown_ligand_analytics(known_rates, unknown_rates, unknown_ratios, scheme,
                             total_concentration, N, kind="unbiased", known_ratios=None,
                             normalizer="sampled"):
    """Errors on the known ligands when unknown ligands share the channel.

    The counts now have masses :math:`p = S_r \\alpha_r`, with
    :math:`S_r` the (M x [M+L]) interval-mass matrix of all ligands, so
    the unbiased estimator has mean :math:`S^{-1} S_r \\alpha_r`.
    Filtering bounds of `scheme` enter through :math:`S_r`.

    Parameters
    ----------
    known_rates : array
        Shape (M,). Rates the receiver is built for.
    unknown_rates, unknown_ratios : array
        Shape (L,).
    scheme : :class:`ThresholdScheme`
    total_concentration : float
        Total over known and unknown ligands.
    N : int
    kind : str, optional
        ``unbiased`` or ``biased``.
    known_ratios : array, optional
        True ratios of the known ligands. Defaults to an equal share of
        :math:`1 - \\sum \\alpha_u`.

    Returns
    -------
    out : :class:`ErrorReport`
        Errors on the known concentrations.
    """
    k = check_unbinding_rates(known_rates)
    k_u = np.atleast_1d(np.asarray(unknown_rates, dtype=float))
    if k_u.shape[0] < 1:
        raise DomainError("At least one unknown ligand is required")
    if known_ratios is None:
        known_ratios, alpha_u = unknown_ligand_ratios(k.shape[0], unknown_ratios)
    else:
        known_ratios = np.asarray(known_ratios, dtype=float)
        alpha_u = np.atleast_1d(np.asarray(unknown_ratios, dtype=float))
    if alpha_u.shape != k_u.shape:
        raise DomainError("Unknown rates and ratios must have the same shape")
    check_ratios(np.r_[known_ratios, alpha_u])
    matrices = build_S(scheme, k)
    kind = getattr(kind, "value", kind)
    if kind == EstimatorKind.UNBIASED.value:
        A = matrices.W
    elif kind == EstimatorKind.BIASED.value:
        A = _inverse(build_H(scheme, k))
    else:
        raise DomainError("No unknown-ligand analytics for estimator {!r}".format(kind))
    S_r = interval_mass_matrix(scheme.thresholds, np.r_[k, k_u])
    p = S_r.dot(np.r_[known_ratios, alpha_u])
    return _linear_report(kind, A, p, known_ratios, total_concentration, N, normalizer)


###############################################################################
#                              nu optimization                                #
###############################################################################


def optimize_nu(mix, N, bounds=NU_BOUNDS, tol=1e-3, method="golden", grid_points=NU_GRID_POINTS,
                kind="unbiased", metric="average_nmse"):
    """Threshold factor minimizing the analytic error metric.

    Golden-section search is bracketed by ``(lo, 3, hi)``. If that is not
    a bracket, or the search leaves the interval, a grid scan of
    `grid_points` values replaces it and the result is flagged.

    Parameters
    ----------
    mix : :class:`LigandMixture`
    N : int
    bounds : (float, float), optional
    tol : float, optional
        Absolute tolerance on nu.
    method : str, optional
        ``golden`` or ``grid``.

    Returns
    -------
    out : :class:`NuOptimum`
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0 < lo < hi:
        raise DomainError("nu bounds must satisfy 0 < lo < hi, got {}".format(bounds))

    def objective(nu):
        try:
            report = estimator_analytics(kind, mix, N, nu=nu)
        except IndistinguishableLigandsError:
            return np.inf
        return report_metric(report, metric)

    def grid_scan(fallback):
        nus = np.linspace(lo, hi, int(grid_points))
        values = np.array([objective(nu) for nu in nus])
        best = int(np.argmin(values))
        return NuOptimum(nu=float(nus[best]), objective=float(values[best]), method="grid",
                         fallback=fallback)

    if method == "grid":
        return grid_scan(False)
    if method != "golden":
        raise DomainError("Unknown nu search method {!r}".format(method))

    mid = DEFAULT_NU_UNBIASED if lo < DEFAULT_NU_UNBIASED < hi else 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = objective(lo), objective(mid), objective(hi)
    if not (f_mid < f_lo and f_mid < f_hi):
        logger.warning("nu=%.3g does not bracket a minimum on [%.3g, %.3g]; "
                       "falling back to a %d-point grid scan", mid, lo, hi, grid_points)
        return grid_scan(True)
    try:
        res = minimize_scalar(objective, bracket=(lo, mid, hi), method="golden",
                              tol=tol / (2.0 * mid))
    except (ValueError, RuntimeError) as err:
        logger.warning("Golden-section search failed (%s); falling back to a grid scan", err)
        return grid_scan(True)
    if not lo <= res.x <= hi:
        logger.warning("Golden-section search left [%.3g, %.3g]; falling back to a grid scan",
                       lo, hi)
        return grid_scan(True)
    logger.debug("nu_opt=%.5g after %d evaluations", res.x, res.nfev)
    return NuOptimum(nu=float(res.x), objective=float(res.fun), method="golden")
