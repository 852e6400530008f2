"""Kinetic-proofreading receptor.

A bound receptor walks through M substates. From substate :math:`j < M`
it advances at rate :math:`\\beta_j` or unbinds at the rate
:math:`k^-_i` of its ligand; unbinding from substate `j` releases one
:math:`D_j` molecule. Unbound receptors produce S molecules at rate
:math:`\\mu`. The counts of D play the role of the interval counts of
the software estimator, and the count of S that of the unbound time.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .estimators import ThresholdScheme, build_S
from .kinetics import check_unbinding_rates
from .utils import (DomainError, chunk_indices, check_positive, derive_rng, parallel_map)

logger = logging.getLogger(__name__)

__all__ = [
    "KprScheme", "KprGaussian", "MessengerCounts", "DEFAULT_KAPPA",
    "kpr_rates", "kpr_absorption", "kpr_absorption_matrix", "kpr_mixture_stats",
    "kpr_expected_counts", "simulate_receptors", "kpr_binning_bias",
]

# Constants
DEFAULT_KAPPA = 0.6
MIN_GAUSSIAN_N = 1000
BLOCK_SIZE = 4096
KPR_STREAM = 0x6B7072


class KprScheme(object):
    """Transition rates of an M-substate proofreading receptor.

    Parameters
    ----------
    rates : array
        Shape (M-1,). :math:`\\beta_{j,j+1} > 0`.
    kappas : array, optional
        Shape (M-1,). Tuning parameters the rates were built from.
    thresholds : array, optional
        Shape (M,). :math:`T_0, \\dots, T_{M-1}` the rates were built
        from.
    """

    def __init__(self, rates, kappas=None, thresholds=None):
        rates = np.atleast_1d(np.asarray(rates, dtype=float))
        if rates.ndim != 1 or np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            raise DomainError("KPR transition rates must be positive and finite: {}".format(rates))
        rates.flags.writeable = False
        self._rates = rates
        self.kappas = None if kappas is None else np.asarray(kappas, dtype=float)
        self.thresholds = None if thresholds is None else np.asarray(thresholds, dtype=float)

    def __repr__(self):
        return "KprScheme(M:{:d}, beta:{})".format(self.M, np.array2string(self._rates,
                                                                             precision=4))

    @property
    def M(self):
        """Number of substates."""
        return self._rates.shape[0] + 1

    @property
    def rates(self):
        return self._rates


def kpr_rates(thresholds, kappa=DEFAULT_KAPPA):
    """Transition rates matched to a threshold scheme.

    .. math:: \\beta_{i,i+1} = \\frac{\\kappa_i}{T_i - T_{i-1}}, \\quad i = 1, \\dots, M-1

    Parameters
    ----------
    thresholds : :class:`ThresholdScheme` or array
        A scheme, or the thresholds :math:`T_0, \\dots, T_{M-1}`. The
        last threshold of a scheme, :math:`T_M`, is not used.
    kappa : float or array, optional
        Tuning parameters, positive. 3/5 by default.

    Returns
    -------
    out : :class:`KprScheme`
    """
    if isinstance(thresholds, ThresholdScheme):
        T = np.asarray(thresholds.thresholds[:-1], dtype=float)
    else:
        T = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if np.any(~np.isfinite(T)):
        raise DomainError("KPR rates need finite thresholds T_0..T_(M-1): {}".format(T))
    widths = np.diff(T)
    if np.any(widths <= 0):
        raise DomainError("Thresholds must be strictly increasing: {}".format(T))
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), widths.shape).copy()
    if np.any(kappa <= 0):
        raise DomainError("Tuning parameters kappa must be positive: {}".format(kappa))
    return KprScheme(kappa / widths, kappas=kappa, thresholds=T)


def kpr_absorption(scheme, unbinding_rate):
    """Probability that a ligand unbinds from each substate.

    .. math::

        P_{D_j|i} = \\frac{k^-_i}{\\beta_j + k^-_i} \\prod_{l<j}
        \\frac{\\beta_l}{\\beta_l + k^-_i}, \\quad
        P_{D_M|i} = \\prod_{l<M} \\frac{\\beta_l}{\\beta_l + k^-_i}

    Parameters
    ----------
    scheme : :class:`KprScheme`
    unbinding_rate : float

    Returns
    -------
    out : array
        Shape (M,). Sums to one.
    """
    k = check_positive("unbinding_rate", unbinding_rate)
    beta = scheme.rates
    advance = np.cumprod(np.r_[1.0, beta / (beta + k)])
    out = advance.copy()
    out[:-1] *= k / (beta + k)
    return out


def kpr_absorption_matrix(scheme, unbinding_rates):
    """Absorption probabilities of several ligands.

    Returns
    -------
    out : array
        Shape (M, L). Column `i` is :func:`kpr_absorption` of rate `i`,
        the proofreading analogue of the interval-mass matrix.
    """
    rates = np.atleast_1d(np.asarray(unbinding_rates, dtype=float))
    return np.column_stack([kpr_absorption(scheme, k) for k in rates])


@dataclass(frozen=True)
class KprGaussian:
    """Gaussian approximation of the steady-state D counts."""
    probabilities: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    N: int

    def pdf(self, j, x):
        """Density of :math:`n_{D_j}` (zero-based `j`) at `x`."""
        return norm.pdf(x, loc=self.mean[j], scale=np.sqrt(self.variance[j]))


def kpr_mixture_stats(mix, scheme, N):
    """Steady-state statistics of the D counts over `N` receptors.

    .. math:: P_{D_j} = \\sum_i \\alpha_i P_{D_j|i}

    Each :math:`n_{D_j}` is binomial with mean :math:`N P_{D_j}` and
    variance :math:`N P_{D_j} (1 - P_{D_j})`, approximated by a Gaussian.
    """
    if N < MIN_GAUSSIAN_N:
        logger.warning("N=%d < %d: the Gaussian approximation of the D counts is coarse",
                       N, MIN_GAUSSIAN_N)
    P = kpr_absorption_matrix(scheme, mix.unbinding_rates).dot(mix.ratios)
    return KprGaussian(probabilities=P, mean=N * P, variance=N * P * (1.0 - P), N=int(N))


@dataclass(frozen=True)
class MessengerCounts:
    """Second-messenger counts from one sensing round.

    Attributes
    ----------
    n_D : array
        Shape (M,). Released D molecules per substate.
    n_S : float
        S molecules produced while unbound.
    N : int
        Receptors simulated.
    mu : float
        S production rate.
    unbound_time : float, optional
        Total unbound time of the same trajectories.
    bound_durations : array, optional
        Shape (N,). Bound durations of the same trajectories.
    ligand_types : array, optional
        Shape (N,). Zero-based bound ligand types.
    """
    n_D: np.ndarray
    n_S: float
    N: int
    mu: float
    unbound_time: float = None
    bound_durations: np.ndarray = field(default=None, repr=False)
    ligand_types: np.ndarray = field(default=None, repr=False)


def kpr_expected_counts(mix, scheme, mu, N):
    """Noiseless counts: :math:`N P_{D_j}` and :math:`\\mu N/(k^+ c_{tot})`."""
    mu = check_positive("mu", mu)
    P = kpr_absorption_matrix(scheme, mix.unbinding_rates).dot(mix.ratios)
    n_S = mu * N / (mix.binding_rate * mix.total_concentration)
    return MessengerCounts(n_D=N * P, n_S=n_S, N=int(N), mu=mu,
                           unbound_time=N / (mix.binding_rate * mix.total_concentration))


def _simulate_block(mix, beta, mu, n, rng):
    tau_u = rng.exponential(1.0 / (mix.binding_rate * mix.total_concentration), size=n)
    n_S = rng.poisson(mu * tau_u).sum()
    types = rng.choice(mix.M, size=n, p=mix.ratios)
    k = mix.unbinding_rates[types]
    substate = np.full(n, beta.shape[0], dtype=int)
    bound = np.zeros(n)
    active = np.ones(n, dtype=bool)
    for j, b in enumerate(beta):
        idx = np.flatnonzero(active)
        t_off = rng.exponential(1.0 / k[idx])
        t_adv = rng.exponential(1.0 / b, size=idx.shape[0])
        off = t_off < t_adv
        bound[idx] += np.where(off, t_off, t_adv)
        substate[idx[off]] = j
        active[idx[off]] = False
    idx = np.flatnonzero(active)
    bound[idx] += rng.exponential(1.0 / k[idx])
    n_D = np.bincount(substate, minlength=beta.shape[0] + 1)
    return n_D, n_S, tau_u.sum(), bound, types


def simulate_receptors(mix, scheme, mu, N, seed, replicate=0, block_size=BLOCK_SIZE,
                       threads=None):
    """Event-driven Monte Carlo of `N` proofreading receptors.

    Each receptor contributes one unbound duration
    :math:`\\tau_u \\sim \\mathrm{Exp}(k^+ c_{tot})`, producing
    :math:`\\mathrm{Poisson}(\\mu \\tau_u)` S molecules, and then one
    binding of a ligand drawn from the ratios. The bound receptor walks
    the substates by competing exponentials until it unbinds.
    Activation is instantaneous.

    Receptors are simulated in fixed blocks, each with its own stream
    derived from `seed`, so the result does not depend on `threads`.

    Parameters
    ----------
    mix : :class:`LigandMixture`
    scheme : :class:`KprScheme`
    mu : float
        S production rate.
    N : int
    seed : int
    replicate : int, optional
        Index of an independent sensing round under the same seed.
    block_size : int, optional
    threads : int, optional

    Returns
    -------
    out : :class:`MessengerCounts`
    """
    mu = check_positive("mu", mu)
    N = int(N)
    if N < 1:
        raise DomainError("At least one receptor is required, got {}".format(N))
    if seed is None:
        raise DomainError("An explicit integer seed is required")
    blocks = chunk_indices(N, int(block_size))

    def run(item):
        b, (start, stop) = item
        return _simulate_block(mix, scheme.rates, mu, stop - start,
                               derive_rng(seed, KPR_STREAM, replicate, b))

    parts = parallel_map(run, list(enumerate(blocks)), threads)
    n_D = np.sum([p[0] for p in parts], axis=0)
    n_S = int(np.sum([p[1] for p in parts]))
    T_u = float(np.sum([p[2] for p in parts]))
    counts = MessengerCounts(n_D=n_D, n_S=n_S, N=N, mu=mu, unbound_time=T_u,
                             bound_durations=np.concatenate([p[3] for p in parts]),
                             ligand_types=np.concatenate([p[4] for p in parts]))
    logger.debug("Simulated %d receptors in %d blocks: n_D=%s, n_S=%d",
                 N, len(blocks), n_D, n_S)
    return counts


def kpr_binning_bias(mix, thresholds, scheme):
    """Expected relative deviation of the proofreading ratio estimate.

    The receiver inverts the interval masses `S` of `thresholds`, but
    the D counts follow the absorption matrix :math:`P_{kpr}`, so

    .. math:: \\mathbb{E}[W n_D / N] / \\alpha - 1 = W P_{kpr} \\alpha / \\alpha - 1

    Parameters
    ----------
    mix : :class:`LigandMixture`
    thresholds : :class:`ThresholdScheme`
    scheme : :class:`KprScheme`

    Returns
    -------
    out : array
        Shape (M,). NaN for absent ligands.
    """
    k = check_unbinding_rates(mix.unbinding_rates)
    if scheme.M != k.shape[0]:
        raise DomainError("KPR scheme has {} substates for {} ligands".format(scheme.M,
                                                                          k.shape[0]))
    W = build_S(thresholds, k).W
    expected = W.dot(kpr_absorption_matrix(scheme, k).dot(mix.ratios))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = expected / mix.ratios - 1.0
    out[mix.ratios == 0] = np.nan
    return out
