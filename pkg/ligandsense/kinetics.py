"""This module contains :class:`LigandMixture` and
:class:`ObservationSet`, the channel state and the receptor statistics
sampled from it, together with the equilibrium binding statistics of a
single receptor type exposed to a mixture of ligands.

All ligand types share one binding rate :math:`k^+`; they differ by
their unbinding rates :math:`k^-_1 > k^-_2 > \\dots > k^-_M`, i.e. the
last ligand type has the highest affinity.
"""
import logging

import numpy as np
from scipy.special import logsumexp

from .utils import DomainError, SIMPLEX_TOL, as_generator, check_positive

logger = logging.getLogger(__name__)

__all__ = [
    "LigandMixture", "ObservationSet",
    "uniform_ratios", "highest_affinity_ratios", "absence_ratios",
    "unknown_ligand_ratios", "similarity_rates",
    "diffusion_limited_binding_rate", "bound_probability",
    "bound_count_stats", "sample_observations", "sample_unbound_time",
    "bound_time_pdf", "bound_time_cdf", "log_likelihood",
    "log_likelihood_unbound", "log_likelihood_bound",
]


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


def check_ratios(ratios, M=None):
    """Validate a concentration ratio vector and return it as an array.

    Raises
    ------
    DomainError
        If an entry is negative, or if the entries do not sum to one
        within 1e-12.
    """
    ratios = np.atleast_1d(np.asarray(ratios, dtype=float))
    if M is not None and ratios.shape != (M,):
        raise DomainError("Expected {} ratios, got shape {}".format(M, ratios.shape))
    if np.any(~np.isfinite(ratios)) or np.any(ratios < 0):
        raise DomainError("Concentration ratios must be non-negative: {}".format(ratios))
    if abs(ratios.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError("Concentration ratios must sum to 1, got {!r}".format(ratios.sum()))
    return ratios


def check_unbinding_rates(rates):
    """Validate strictly decreasing, positive unbinding rates."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if rates.ndim != 1 or rates.shape[0] == 0:
        raise DomainError("Unbinding rates must be a non-empty vector")
    if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
        raise DomainError("Unbinding rates must be positive: {}".format(rates))
    if np.any(np.diff(rates) >= 0):
        raise DomainError(
            "Unbinding rates must be strictly decreasing (distinct ligands): {}".format(rates))
    return rates


###############################################################################
#                              Ratio/rate builders                            #
###############################################################################


def similarity_rates(M, chi, k_anchor=1.0):
    """Unbinding rates following the similarity rule.

    .. math:: k^-_{M-i} = \\chi^i k^-_M, \\quad i = 0, \\dots, M-1

    Parameters
    ----------
    M : int
        Number of ligand types.
    chi : float
        Similarity parameter, strictly larger than one.
    k_anchor : float, optional
        Unbinding rate :math:`k^-_M` of the highest-affinity ligand.

    Returns
    -------
    out : array
        Shape (M,). Strictly decreasing rates.
    """
    if int(M) < 1:
        raise DomainError("M must be at least 1, got {!r}".format(M))
    if not chi > 1:
        raise DomainError("Similarity parameter chi must exceed 1, got {!r}".format(chi))
    check_positive("k_anchor", k_anchor)
    powers = np.arange(int(M) - 1, -1, -1)
    return k_anchor * float(chi) ** powers


def uniform_ratios(M):
    """Equal concentration ratios."""
    return np.full(int(M), 1.0 / int(M))


def highest_affinity_ratios(M, alpha_M):
    """Ratio :math:`\\alpha_M` for the last ligand, the rest shared equally."""
    if not 0 <= alpha_M <= 1:
        raise DomainError("alpha_M must lie in [0, 1], got {!r}".format(alpha_M))
    if M == 1:
        return np.ones(1)
    ratios = np.full(M, (1.0 - alpha_M) / (M - 1))
    ratios[-1] = alpha_M
    return ratios


def absence_ratios(M, absent):
    """Equal ratios over the present ligands, zero for `absent`.

    Parameters
    ----------
    M : int
    absent : iterable of int
        One-based indices of the absent ligand types.
    """
    absent = sorted(set(int(i) for i in absent))
    if any(i < 1 or i > M for i in absent):
        raise DomainError("Absent indices must lie in 1..{}: {}".format(M, absent))
    if len(absent) >= M:
        raise DomainError("At least one ligand type must be present")
    ratios = np.ones(M)
    ratios[[i - 1 for i in absent]] = 0.0
    return ratios / ratios.sum()


def unknown_ligand_ratios(M, unknown_ratios):
    """Ratios of the known ligands once unknown ligands take their share.

    Returns
    -------
    known : array
        Shape (M,). Each known ligand gets :math:`(1 - \\sum \\alpha_u)/M`.
    unknown : array
        The unknown ratios as an array.
    """
    unknown = np.atleast_1d(np.asarray(unknown_ratios, dtype=float))
    if np.any(unknown < 0) or unknown.sum() >= 1:
        raise DomainError("Unknown ratios must be non-negative and sum below 1")
    known = np.full(M, (1.0 - unknown.sum()) / M)
    return known, unknown


###############################################################################
#                                 Domain types                                #
###############################################################################


class LigandMixture(object):
    """The channel state seen by a single receptor type.

    Parameters
    ----------
    binding_rate : float
        Common binding rate :math:`k^+` (per concentration per second).
    unbinding_rates : array
        Shape (M,). Strictly decreasing unbinding rates (per second).
    ratios : array
        Shape (M,). Concentration ratios :math:`\\alpha_i = c_i/c_{tot}`.
    total_concentration : float, optional
        :math:`c_{tot}`. Units are arbitrary; every reported metric is
        normalized, so the default of 1 loses no generality.

    Raises
    ------
    DomainError
        If any invariant is violated. Duplicate unbinding rates are
        rejected because they make the interval-mass matrix singular.
    """

    def __init__(self, binding_rate, unbinding_rates, ratios, total_concentration=1.0):
        self._binding_rate = check_positive("binding_rate", binding_rate)
        self._unbinding_rates = _frozen(check_unbinding_rates(unbinding_rates))
        self._ratios = _frozen(check_ratios(ratios, self._unbinding_rates.shape[0]))
        self._total_concentration = check_positive("total_concentration", total_concentration)

    @classmethod
    def from_similarity(cls, M, chi, k_anchor=1.0, ratios=None,
                        binding_rate=1.0, total_concentration=1.0):
        """Build a mixture whose rates follow :func:`similarity_rates`."""
        rates = similarity_rates(M, chi, k_anchor)
        if ratios is None:
            ratios = uniform_ratios(M)
        return cls(binding_rate, rates, ratios, total_concentration)

    def __repr__(self):
        return "LigandMixture(M:{:d}, k+:{:g}, c_tot:{:g})".format(
            self.M, self.binding_rate, self.total_concentration)

    def with_total_concentration(self, total_concentration):
        """A copy of the mixture at another total concentration."""
        return LigandMixture(self.binding_rate, self.unbinding_rates, self.ratios,
                             total_concentration)

    def with_unknown_ligands(self, unbinding_rates, ratios):
        """The channel once ligands unknown to the receiver are added.

        The known ratios are scaled by :math:`1 - \\sum \\alpha_u` and the
        combined rates are re-sorted in decreasing order.

        Returns
        -------
        mix : :class:`LigandMixture`
            The combined mixture.
        known_index : array
            Shape (M,). Position of each known ligand in the combined
            mixture.
        """
        rates_u = np.atleast_1d(np.asarray(unbinding_rates, dtype=float))
        ratios_u = np.atleast_1d(np.asarray(ratios, dtype=float))
        if rates_u.shape != ratios_u.shape:
            raise DomainError("Unknown rates and ratios must have the same shape")
        if np.any(ratios_u < 0) or ratios_u.sum() >= 1:
            raise DomainError("Unknown ratios must be non-negative and sum below 1")
        rates = np.r_[self.unbinding_rates, rates_u]
        all_ratios = np.r_[self.ratios * (1.0 - ratios_u.sum()), ratios_u]
        order = np.argsort(-rates, kind="stable")
        position = np.empty_like(order)
        position[order] = np.arange(order.shape[0])
        mix = LigandMixture(self.binding_rate, rates[order], all_ratios[order],
                            self.total_concentration)
        return mix, position[:self.M]

    @property
    def M(self):
        """Number of ligand types."""
        return self._unbinding_rates.shape[0]

    @property
    def binding_rate(self):
        return self._binding_rate

    @property
    def unbinding_rates(self):
        return self._unbinding_rates

    @property
    def ratios(self):
        return self._ratios

    @property
    def total_concentration(self):
        return self._total_concentration

    @property
    def concentrations(self):
        """Individual concentrations :math:`c_i = \\alpha_i c_{tot}`."""
        return self._ratios * self._total_concentration

    @property
    def dissociation_constants(self):
        """:math:`K_{D,i} = k^-_i / k^+`."""
        return self._unbinding_rates / self._binding_rate


class ObservationSet(object):
    """Receptor statistics collected during one sensing round.

    Each of the `N` receptors contributes one unbound duration and one
    bound duration.

    Parameters
    ----------
    unbound_time : float
        Total unbound time :math:`T_u` over all receptors (seconds).
    bound_durations : array
        Shape (N,). Bound durations :math:`\\tau_b` (seconds).
    seed : int, optional
        Seed the observations were drawn with, if any.
    ligand_types : array, optional
        Shape (N,). Zero-based type of the ligand behind each binding
        event. Only known for simulated data.
    unbound_durations : array, optional
        Shape (N,). Individual unbound durations, if kept.
    """

    def __init__(self, unbound_time, bound_durations, seed=None,
                 ligand_types=None, unbound_durations=None):
        bound_durations = np.atleast_1d(np.asarray(bound_durations, dtype=float))
        if bound_durations.ndim != 1 or bound_durations.shape[0] < 3:
            raise DomainError("An ObservationSet needs N >= 3 bound durations, got {}".format(
                bound_durations.shape))
        if np.any(~(bound_durations > 0)):
            raise DomainError("Bound durations must be positive")
        self._unbound_time = check_positive("unbound_time", unbound_time)
        self._bound_durations = _frozen(bound_durations)
        self.seed = seed
        self._ligand_types = None if ligand_types is None else np.asarray(ligand_types, dtype=int)
        self._unbound_durations = None if unbound_durations is None else _frozen(unbound_durations)

    def __repr__(self):
        return "ObservationSet(N:{:d}, T_u:{:.6g})".format(self.N, self.unbound_time)

    @property
    def N(self):
        """Number of receptor samples."""
        return self._bound_durations.shape[0]

    @property
    def unbound_time(self):
        return self._unbound_time

    @property
    def bound_durations(self):
        return self._bound_durations

    @property
    def ligand_types(self):
        return self._ligand_types

    @property
    def unbound_durations(self):
        return self._unbound_durations


###############################################################################
#                         Equilibrium binding statistics                      #
###############################################################################


def diffusion_limited_binding_rate(diffusivity, receptor_size):
    """Binding rate of a circular receptor, :math:`k^+ = 4 D a`.

    Parameters
    ----------
    diffusivity : float
        Ligand diffusion coefficient :math:`D`.
    receptor_size : float
        Receptor radius :math:`a`.
    """
    D = check_positive("diffusivity", diffusivity)
    a = check_positive("receptor_size", receptor_size)
    return 4.0 * D * a


def bound_probability(mix):
    """Equilibrium probability that a receptor is bound.

    .. math:: p_B = \\frac{\\sum_i c_i / K_{D,i}}{1 + \\sum_i c_i / K_{D,i}}
    """
    x = np.sum(mix.concentrations / mix.dissociation_constants)
    return x / (1.0 + x)


def bound_count_stats(mix, n_receptors):
    """Mean and variance of the binomial number of bound receptors.

    Parameters
    ----------
    mix : :class:`LigandMixture`
    n_receptors : int
        Number of independent receptors :math:`N_R`.

    Returns
    -------
    mean : float
    variance : float
    """
    if int(n_receptors) < 1:
        raise DomainError("Receptor count must be at least 1, got {!r}".format(n_receptors))
    p = bound_probability(mix)
    return p * n_receptors, p * (1.0 - p) * n_receptors


def bound_time_pdf(mix, tau):
    """Density of the bound duration, a mixture of exponentials.

    .. math:: p(\\tau) = \\sum_j \\alpha_j k^-_j e^{-k^-_j \\tau}

    Parameters
    ----------
    mix : :class:`LigandMixture`
    tau : float or array
        Durations, non-negative.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("Bound durations must be non-negative")
    k = mix.unbinding_rates
    terms = mix.ratios * k * np.exp(-np.multiply.outer(tau, k))
    return terms.sum(axis=-1)


def bound_time_cdf(mix, tau):
    """Cumulative distribution of the bound duration."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("Bound durations must be non-negative")
    k = mix.unbinding_rates
    terms = mix.ratios * (1.0 - np.exp(-np.multiply.outer(tau, k)))
    return terms.sum(axis=-1)


###############################################################################
#                                   Sampling                                  #
###############################################################################


def sample_unbound_time(mix, N, rng):
    """Total unbound time of `N` receptors, :math:`T_u \\sim \\Gamma(N, k^+ c_{tot})`."""
    rate = mix.binding_rate * mix.total_concentration
    return rng.gamma(shape=N, scale=1.0 / rate)


def sample_observations(mix, N, seed, keep_unbound=False):
    """Draw one sensing round of `N` receptors at equilibrium.

    Every receptor contributes one unbound duration
    :math:`\\tau_u \\sim \\mathrm{Exp}(k^+ c_{tot})` and one bound
    duration; the bound ligand type is drawn from the ratios and the
    bound duration from the exponential of its unbinding rate.

    Parameters
    ----------
    mix : :class:`LigandMixture`
    N : int
        Number of receptors, at least 3.
    seed : int or :class:`numpy.random.Generator`
        The output is a deterministic function of the seed.
    keep_unbound : bool, optional
        Keep the individual unbound durations on the result.

    Returns
    -------
    out : :class:`ObservationSet`
    """
    N = int(N)
    if N < 3:
        raise DomainError("sample_observations needs N >= 3, got {}".format(N))
    rng = as_generator(seed)
    rate_u = mix.binding_rate * mix.total_concentration
    tau_u = rng.exponential(1.0 / rate_u, size=N)
    types = rng.choice(mix.M, size=N, p=mix.ratios)
    tau_b = rng.exponential(1.0 / mix.unbinding_rates[types])
    logger.debug("Sampled %d receptors: T_u=%.6g", N, tau_u.sum())
    return ObservationSet(tau_u.sum(), tau_b,
                          seed=seed if not isinstance(seed, np.random.Generator) else None,
                          ligand_types=types,
                          unbound_durations=tau_u if keep_unbound else None)


###############################################################################
#                                  Likelihood                                 #
###############################################################################


def log_likelihood_unbound(N, unbound_time, total_concentration, binding_rate):
    """Parameter-dependent part of :math:`\\mathcal{L}(T_u | c_{tot})`.

    .. math:: N \\ln c_{tot} - k^+ c_{tot} T_u
    """
    c = check_positive("total_concentration", total_concentration)
    return N * np.log(c) - binding_rate * c * unbound_time


def log_likelihood_bound(bound_durations, ratios, unbinding_rates):
    """:math:`\\mathcal{L}(\\{\\tau_b\\} | \\alpha) = \\sum_l \\ln p(\\tau_{b,l})`.

    Evaluated in log-space, so long durations do not underflow.
    Zero ratios are allowed.
    """
    ratios = check_ratios(ratios, np.shape(unbinding_rates)[0])
    k = np.asarray(unbinding_rates, dtype=float)
    tau = np.atleast_1d(np.asarray(bound_durations, dtype=float))
    with np.errstate(divide="ignore"):
        log_w = np.log(ratios) + np.log(k)
    log_terms = log_w - np.multiply.outer(tau, k)
    return float(np.sum(logsumexp(log_terms, axis=1)))


def log_likelihood(obs, total_concentration, ratios, binding_rate, unbinding_rates):
    """Log-likelihood of an :class:`ObservationSet`, up to a constant.

    Only the two parameter-dependent terms are returned; the term that
    depends on neither :math:`c_{tot}` nor :math:`\\alpha` is dropped,
    so absolute values are offset by an unknown constant.

    Raises
    ------
    DomainError
        If `total_concentration` is not positive or `ratios` is off the
        simplex.
    """
    return (log_likelihood_unbound(obs.N, obs.unbound_time, total_concentration, binding_rate)
            + log_likelihood_bound(obs.bound_durations, ratios, unbinding_rates))
