"""Threshold schemes, estimator matrices and the concentration
estimators built on them.

The receiver splits bound durations into M intervals
:math:`[T_{i-1}, T_i)` and inverts the expected interval masses

.. math:: \\mathbb{E}[\\mathbf{n}] = N S \\boldsymbol{\\alpha}

to recover the ratios. The total concentration comes from the total
unbound time alone.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular
from scipy.special import logsumexp

from .kinetics import check_unbinding_rates
from .utils import (DomainError, IndistinguishableLigandsError, InternalConsistencyError,
                    NoEventsError, as_generator, check_positive)

logger = logging.getLogger(__name__)

__all__ = [
    "EstimatorKind", "ThresholdScheme", "EstimatorMatrices", "ConcentrationEstimate",
    "SufficientStatistics", "build_thresholds", "filtering_bounds",
    "interval_mass_matrix", "build_S", "build_H", "build_R", "bin_counts",
    "sample_sufficient_statistics", "estimate_total_concentration",
    "estimate_ratios_unbiased", "estimate_ratios_biased", "clip_to_simplex",
    "estimate_concentrations", "estimate_from_statistics", "ml_ratio_oracle",
    "CONDITION_LIMIT", "DEFAULT_NU_UNBIASED", "DEFAULT_NU_BIASED",
]

# Constants
CONDITION_LIMIT = 1e12
RECURSION_TOL = 1e-6
DEFAULT_NU_UNBIASED = 3.0
DEFAULT_NU_BIASED = 5.0
NORMALIZERS = ("sampled", "retained")


class EstimatorKind(Enum):
    UNBIASED = "unbiased"
    BIASED = "biased"
    ML_ORACLE = "ml_oracle"
    CRN = "crn"


###############################################################################
#                               Threshold schemes                             #
###############################################################################


class ThresholdScheme(object):
    """Time thresholds :math:`T_0 \\leq T_1 < \\dots < T_{M-1} \\leq T_M`.

    Parameters
    ----------
    thresholds : array
        Shape (M+1,). The first and last entries bound the retained
        events; the default scheme uses :math:`T_0 = 0` and
        :math:`T_M = \\infty`.
    nu : float, optional
        The threshold factor used to build the scheme, if any.
    """

    def __init__(self, thresholds, nu=None):
        T = np.array(thresholds, dtype=float)
        if T.ndim != 1 or T.shape[0] < 2:
            raise DomainError("A scheme needs at least two thresholds, got {}".format(T))
        if T[0] < 0 or np.isnan(T).any():
            raise DomainError("Thresholds must be non-negative: {}".format(T))
        if np.any(np.diff(T[1:-1]) <= 0):
            raise DomainError("Interior thresholds must be strictly increasing: {}".format(T))
        if not np.all(np.isfinite(T[:-1])):
            raise DomainError("Only the last threshold may be infinite: {}".format(T))
        if T.shape[0] > 2 and (T[0] > T[1] or T[-1] < T[-2]):
            raise DomainError(
                "Filtering bounds must enclose the interior thresholds: {}".format(T))
        if T[-1] <= T[0]:
            raise DomainError("Empty retention window [{}, {})".format(T[0], T[-1]))
        T.flags.writeable = False
        self._thresholds = T
        self._nu = nu

    def __repr__(self):
        return "ThresholdScheme(M:{:d}, nu:{}, window:[{:.4g}, {:.4g}))".format(
            self.M, self._nu, self.lower, self.upper)

    @property
    def M(self):
        """Number of intervals."""
        return self._thresholds.shape[0] - 1

    @property
    def thresholds(self):
        return self._thresholds

    @property
    def nu(self):
        return self._nu

    @property
    def lower(self):
        return self._thresholds[0]

    @property
    def upper(self):
        return self._thresholds[-1]

    @property
    def is_filtered(self):
        """True if events are dropped below `lower` or above `upper`."""
        return self.lower > 0 or np.isfinite(self.upper)


def build_thresholds(unbinding_rates, nu, lower=0.0, upper=np.inf):
    """Thresholds proportional to the inverse unbinding rates.

    .. math:: T_i = \\nu / k^-_i, \\quad i = 1, \\dots, M-1

    Parameters
    ----------
    unbinding_rates : array
        Shape (M,). Strictly decreasing.
    nu : float
        Threshold factor, positive.
    lower : float, optional
        :math:`T_0`. Events shorter than this are filtered out.
    upper : float, optional
        :math:`T_M`. Events at least this long are filtered out.

    Returns
    -------
    out : :class:`ThresholdScheme`
    """
    k = check_unbinding_rates(unbinding_rates)
    nu = check_positive("nu", nu)
    interior = nu / k[:-1]
    if np.any(np.diff(interior) <= 0):
        raise InternalConsistencyError(
            "Non-monotone thresholds from decreasing rates: {}".format(interior))
    return ThresholdScheme(np.r_[lower, interior, upper], nu=nu)


def filtering_bounds(unbinding_rates, nu, factor=5.0):
    """Filter window around the interior thresholds.

    The lower bound is :math:`T_1/\\mathrm{factor}` and the upper bound
    :math:`\\mathrm{factor} \\cdot T_{M-1}`. With one ligand, both are
    taken around :math:`\\nu/k^-_1`.

    Returns
    -------
    lower : float
    upper : float
    """
    k = check_unbinding_rates(unbinding_rates)
    nu = check_positive("nu", nu)
    factor = check_positive("factor", factor)
    if factor < 1:
        raise DomainError("Filtering factor must be at least 1, got {!r}".format(factor))
    first = nu / k[0]
    last = nu / k[-2] if k.shape[0] > 1 else first
    return first / factor, factor * last


###############################################################################
#                               Estimator matrices                            #
###############################################################################


@dataclass(frozen=True)
class EstimatorMatrices:
    """Matrices hardwired into a receiver for one threshold scheme.

    Attributes
    ----------
    S : array
        Shape (M, M). Interval masses, :math:`s_{ij} = P(\\tau_b \\in
        [T_{i-1}, T_i) | j)`.
    W : array
        Shape (M, M). :math:`S^{-1}`.
    condition_number : float
        2-norm condition number of `S`.
    nu : float
    thresholds : array
    unbinding_rates : array
    H : array, optional
        Upper-triangular approximation of `S`.
    R : array, optional
        :math:`H^{-1}`.
    """
    S: np.ndarray
    W: np.ndarray
    condition_number: float
    nu: float
    thresholds: np.ndarray
    unbinding_rates: np.ndarray
    H: np.ndarray = field(default=None)
    R: np.ndarray = field(default=None)

    @property
    def M(self):
        return self.S.shape[0]


def interval_mass_matrix(thresholds, unbinding_rates):
    """Probability that a ligand of each rate unbinds in each interval.

    .. math:: s_{ij} = e^{-k_j T_{i-1}} - e^{-k_j T_i}

    The rates need not be the receiver's own, which gives the
    rectangular matrix of a channel holding unknown ligands.

    Parameters
    ----------
    thresholds : array
        Shape (M+1,).
    unbinding_rates : array
        Shape (L,). Any positive rates.

    Returns
    -------
    out : array
        Shape (M, L).
    """
    T = np.asarray(thresholds, dtype=float)
    k = np.atleast_1d(np.asarray(unbinding_rates, dtype=float))
    if np.any(k <= 0):
        raise DomainError("Unbinding rates must be positive: {}".format(k))
    survival = np.exp(-np.outer(T, k))
    return survival[:-1] - survival[1:]


def build_S(scheme, unbinding_rates):
    """Build :math:`S` and invert it by LU with partial pivoting.

    Raises
    ------
    IndistinguishableLigandsError
        If the condition number of `S` exceeds :data:`CONDITION_LIMIT`.
    """
    k = check_unbinding_rates(unbinding_rates)
    if k.shape[0] != scheme.M:
        raise DomainError("Scheme has {} intervals but {} rates were given".format(
            scheme.M, k.shape[0]))
    S = interval_mass_matrix(scheme.thresholds, k)
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IndistinguishableLigandsError(cond, CONDITION_LIMIT)
    W = lu_solve(lu_factor(S), np.eye(scheme.M))
    logger.debug("Built S (M=%d, nu=%s): cond=%.3e", scheme.M, scheme.nu, cond)
    return EstimatorMatrices(S=S, W=W, condition_number=cond, nu=scheme.nu,
                             thresholds=scheme.thresholds, unbinding_rates=k)


def build_H(scheme, unbinding_rates):
    """Upper-triangular approximation of :math:`S`.

    The diagonal drops the mass beyond :math:`T_i`,
    :math:`h_{ii} = e^{-k_i T_{i-1}}`; the upper part equals that of `S`
    and the lower part is zero.
    """
    k = check_unbinding_rates(unbinding_rates)
    T = scheme.thresholds
    H = np.triu(interval_mass_matrix(T, k), 1)
    H[np.diag_indices_from(H)] = np.exp(-k * T[:-1])
    return H


def _recursive_inverse(H, T, k):
    M = H.shape[0]
    R = np.zeros_like(H)
    for j in range(M):
        kappa = np.exp(k[j] * T[j])
        R[j, j] = kappa
        for i in range(j):
            R[i, j] = -kappa * np.dot(R[i, i:j], H[i:j, j])
    return R


def build_R(scheme, unbinding_rates, matrices=None):
    """Inverse of :math:`H` by column recursion, checked against
    triangular back-substitution.

    .. math::

        r_{ij} = \\kappa_j \\Big(\\delta_{ij} - \\sum_{k=i}^{j-1} r_{ik} h_{kj}\\Big),
        \\quad \\kappa_j = e^{k^-_j T_{j-1}}

    Parameters
    ----------
    scheme : :class:`ThresholdScheme`
    unbinding_rates : array
    matrices : :class:`EstimatorMatrices`, optional
        If given, a copy with `H` and `R` attached is returned instead
        of the bare `R`.

    Raises
    ------
    InternalConsistencyError
        If the recursion and the triangular solve disagree by more than
        1e-6 relative.
    """
    k = check_unbinding_rates(unbinding_rates)
    if scheme.nu is not None and scheme.nu < DEFAULT_NU_BIASED:
        logger.warning("nu=%.3g < %.0f: the triangular approximation of S is coarse",
                       scheme.nu, DEFAULT_NU_BIASED)
    H = build_H(scheme, k)
    R = _recursive_inverse(H, scheme.thresholds, k)
    R_direct = solve_triangular(H, np.eye(H.shape[0]), lower=False)
    mismatch = np.max(np.abs(R - R_direct)) / max(1.0, np.max(np.abs(R_direct)))
    if mismatch > RECURSION_TOL:
        raise InternalConsistencyError(
            "Recursive inverse of H differs from back-substitution by {:.3e}".format(mismatch))
    if matrices is None:
        return R
    return replace(matrices, H=H, R=R)


###############################################################################
#                              Counts and sampling                            #
###############################################################################


def bin_counts(obs, scheme):
    """Count bound durations per interval.

    Parameters
    ----------
    obs : :class:`ObservationSet` or array
        Observations, or the bound durations themselves.
    scheme : :class:`ThresholdScheme`

    Returns
    -------
    n : array
        Shape (M,). :math:`n_i = \\#\\{\\tau_b \\in [T_{i-1}, T_i)\\}`.
    n_retained : int
        :math:`N' = \\sum_i n_i`. Events outside :math:`[T_0, T_M)` are
        dropped.
    """
    tau = getattr(obs, "bound_durations", obs)
    tau = np.asarray(tau, dtype=float)
    T = scheme.thresholds
    kept = tau[(tau >= T[0]) & (tau < T[-1])]
    idx = np.searchsorted(T, kept, side="right") - 1
    n = np.bincount(idx, minlength=scheme.M)
    return n, int(n.sum())


@dataclass(frozen=True)
class SufficientStatistics:
    """Unbound time and interval counts of one sensing round."""
    unbound_time: np.ndarray
    counts: np.ndarray
    n_samples: int

    @property
    def n_events(self):
        return self.counts.sum(axis=-1)


def sample_sufficient_statistics(mix, scheme, N, seed, size=None):
    """Draw :math:`T_u` and the interval counts directly.

    :math:`T_u \\sim \\Gamma(N, 1/(k^+ c_{tot}))` and the counts follow a
    multinomial over the scheme's intervals plus one cell for dropped
    events. This is distributionally identical to binning the output
    of :func:`sample_observations`, at a fraction of the cost.

    Parameters
    ----------
    mix : :class:`LigandMixture`
        The true channel. It may hold ligands the scheme was not built
        for.
    scheme : :class:`ThresholdScheme`
    N : int
    seed : int or :class:`numpy.random.Generator`
    size : int, optional
        Number of independent rounds. Arrays get a leading axis of this
        length.

    Returns
    -------
    out : :class:`SufficientStatistics`
    """
    N = int(N)
    if N < 3:
        raise DomainError("N must be at least 3, got {}".format(N))
    rng = as_generator(seed)
    p = interval_mass_matrix(scheme.thresholds, mix.unbinding_rates).dot(mix.ratios)
    p_drop = max(0.0, 1.0 - p.sum())
    pvals = np.r_[p, p_drop]
    pvals /= pvals.sum()
    rate = mix.binding_rate * mix.total_concentration
    T_u = rng.gamma(shape=N, scale=1.0 / rate, size=size)
    counts = rng.multinomial(N, pvals, size=size)[..., :-1]
    return SufficientStatistics(unbound_time=T_u, counts=counts, n_samples=N)


###############################################################################
#                                  Estimators                                 #
###############################################################################


def estimate_total_concentration(unbound_time, N, binding_rate):
    """Unbiased estimate of the total concentration.

    .. math:: \\hat{c}_{tot} = \\frac{N - 1}{k^+ T_u}

    The estimate is unbiased for :math:`N > 1`; its variance is only
    finite for :math:`N > 2`.

    Parameters
    ----------
    unbound_time : float or array
    N : int
    binding_rate : float
    """
    if N < 2:
        raise DomainError("N must be at least 2, got {!r}".format(N))
    T_u = np.asarray(unbound_time, dtype=float)
    if np.any(~(T_u > 0)):
        raise DomainError("Total unbound time must be positive")
    return (N - 1) / (binding_rate * T_u)


def _check_events(n_events):
    if np.any(np.asarray(n_events) <= 0):
        raise NoEventsError("No binding event was retained by the thresholds")


def estimate_ratios_unbiased(n, n_events, W):
    """Method-of-moments ratio estimate, :math:`\\hat\\alpha = W n / N'`.

    The estimate is unconstrained: entries may be negative or exceed 1.
    `n` may carry leading batch axes.
    """
    _check_events(n_events)
    n = np.asarray(n, dtype=float)
    return n.dot(np.asarray(W).T) / np.expand_dims(n_events, -1)


def estimate_ratios_biased(n, n_events, R):
    """Simplified biased ratio estimate.

    .. math:: \\hat\\alpha^*_l = \\frac{1}{N'} \\sum_{i \\geq l} r_{li} n_i

    Only counts at or above interval `l` enter the estimate of ligand
    `l`; the highest-affinity ligand uses :math:`n_M` alone.
    """
    _check_events(n_events)
    n = np.asarray(n, dtype=float)
    return n.dot(np.triu(R).T) / np.expand_dims(n_events, -1)


def clip_to_simplex(ratios):
    """Euclidean projection of ratio estimates onto the simplex."""
    v = np.asarray(ratios, dtype=float)
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, v.shape[-1] + 1)
    rho = np.sum(u - css / ind > 0, axis=-1, keepdims=True)
    theta = np.take_along_axis(css, rho - 1, axis=-1) / rho
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class ConcentrationEstimate:
    """Estimate :math:`\\hat c = \\hat c_{tot} \\hat{\\boldsymbol\\alpha}`.

    Attributes
    ----------
    total_concentration : float
    ratios : array
        Shape (M,). Not projected on the simplex unless `clipped`.
    kind : :class:`EstimatorKind`
    n_samples : int
        Samples behind :math:`\\hat c_{tot}`.
    n_events : int
        Retained binding events behind the ratios.
    clipped : bool
    """
    total_concentration: float
    ratios: np.ndarray
    kind: EstimatorKind
    n_samples: int
    n_events: int
    clipped: bool = False

    @property
    def concentrations(self):
        return self.total_concentration * self.ratios


def _as_kind(kind):
    if isinstance(kind, EstimatorKind):
        return kind
    try:
        return EstimatorKind(kind)
    except ValueError:
        raise DomainError("Unknown estimator kind {!r}".format(kind))


def estimate_from_statistics(kind, unbound_time, n_samples, counts, matrices, binding_rate,
                             clip=False, normalizer="sampled"):
    """Concentration estimate from sufficient statistics.

    Parameters
    ----------
    kind : :class:`EstimatorKind` or str
        ``unbiased`` or ``biased``.
    unbound_time : float
    n_samples : int
        :math:`N`, the number of receptor samples.
    counts : array
        Shape (M,). Interval counts.
    matrices : :class:`EstimatorMatrices`
        Must carry `R` for the biased kind.
    binding_rate : float
    clip : bool, optional
        Project the ratios on the simplex.
    normalizer : str, optional
        ``sampled`` divides the counts by :math:`N`, which keeps the
        ratio estimate unbiased under filtering; ``retained`` divides by
        the retained count :math:`N'`.

    Returns
    -------
    out : :class:`ConcentrationEstimate`
    """
    kind = _as_kind(kind)
    if normalizer not in NORMALIZERS:
        raise DomainError("normalizer must be one of {}, got {!r}".format(NORMALIZERS, normalizer))
    counts = np.asarray(counts)
    n_events = int(counts.sum())
    _check_events(n_events)
    denominator = n_samples if normalizer == "sampled" else n_events
    if kind is EstimatorKind.UNBIASED:
        ratios = estimate_ratios_unbiased(counts, denominator, matrices.W)
    elif kind is EstimatorKind.BIASED:
        if matrices.R is None:
            raise DomainError("The biased estimator needs matrices with R; call build_R")
        ratios = estimate_ratios_biased(counts, denominator, matrices.R)
    else:
        raise DomainError("{} cannot be computed from interval counts".format(kind.value))
    if clip:
        ratios = clip_to_simplex(ratios)
    c_tot = float(estimate_total_concentration(unbound_time, n_samples, binding_rate))
    return ConcentrationEstimate(c_tot, ratios, kind, int(n_samples), n_events, clip)


def estimate_concentrations(kind, obs, scheme, matrices, binding_rate, clip=False,
                            normalizer="sampled", tol=1e-8, max_iter=10000):
    """Estimate every ligand concentration from one :class:`ObservationSet`.

    :math:`\\hat c_{tot}` always uses the full :math:`N` and the total
    unbound time; the ratio estimate uses the events retained by
    `scheme`.
    """
    kind = _as_kind(kind)
    if kind is EstimatorKind.ML_ORACLE:
        ratios = ml_ratio_oracle(obs.bound_durations, matrices.unbinding_rates,
                                 tol=tol, max_iter=max_iter)
        c_tot = float(estimate_total_concentration(obs.unbound_time, obs.N, binding_rate))
        return ConcentrationEstimate(c_tot, ratios, kind, obs.N, obs.N, False)
    n, n_retained = bin_counts(obs, scheme)
    logger.debug("Binned %d of %d events: %s", n_retained, obs.N, n)
    return estimate_from_statistics(kind, obs.unbound_time, obs.N, n, matrices, binding_rate,
                                    clip=clip, normalizer=normalizer)


###############################################################################
#                                 EM oracle                                   #
###############################################################################


def ml_ratio_oracle(bound_durations, unbinding_rates, tol=1e-8, max_iter=10000, init=None,
                    return_trace=False):
    """Maximum-likelihood ratios by expectation-maximization.

    The component rates are known, so only the weights are updated:

    .. math::

        \\gamma_{lj} \\propto \\alpha_j k^-_j e^{-k^-_j \\tau_l}, \\quad
        \\alpha_j \\leftarrow \\frac{1}{N} \\sum_l \\gamma_{lj}

    Parameters
    ----------
    bound_durations : array
        Shape (N,).
    unbinding_rates : array
        Shape (M,), M >= 2.
    tol : float, optional
        Stop when the largest change of a ratio falls below `tol`.
    max_iter : int, optional
    init : array, optional
        Starting ratios; uniform by default.
    return_trace : bool, optional
        Also return the log-likelihood before each update and at the
        last iterate.

    Returns
    -------
    ratios : array
        Shape (M,). On the simplex.
    trace : list of float
        Only if `return_trace`.
    """
    k = check_unbinding_rates(unbinding_rates)
    M = k.shape[0]
    if M < 2:
        raise DomainError("The EM oracle needs M >= 2 components")
    tol = check_positive("tol", tol)
    if int(max_iter) < 1:
        raise DomainError("max_iter must be at least 1, got {!r}".format(max_iter))
    tau = np.atleast_1d(np.asarray(bound_durations, dtype=float))
    log_comp = np.log(k) - np.outer(tau, k)
    alpha = np.full(M, 1.0 / M) if init is None else np.asarray(init, dtype=float)
    trace = []
    converged = False
    with np.errstate(divide="ignore"):
        for it in range(int(max_iter)):
            log_w = np.log(alpha) + log_comp
            log_norm = logsumexp(log_w, axis=1)
            trace.append(float(log_norm.sum()))
            new_alpha = np.exp(log_w - log_norm[:, None]).mean(axis=0)
            step = np.max(np.abs(new_alpha - alpha))
            alpha = new_alpha
            if step < tol:
                converged = True
                break
        trace.append(float(logsumexp(np.log(alpha) + log_comp, axis=1).sum()))
    if converged:
        logger.debug("EM converged after %d iterations", it + 1)
    else:
        logger.warning("EM did not converge after %d iterations (last step %.3e)",
                       max_iter, step)
    alpha = alpha / alpha.sum()
    if return_trace:
        return alpha, trace
    return alpha
