"""Mean-field chemical reaction network computing the estimate.

Reactions, for every ligand type `i` and substate `j`::

    D_j --w_ij--> D_j + Y_i
    S + Y_i --k+--> S

so that

.. math::

    \\frac{d n_{Y_i}}{dt} = \\sum_j w_{ij} n_{D_j} - k^+ n_S n_{Y_i}

relaxes to :math:`n_{Y_i} = \\sum_j w_{ij} n_{D_j} / (k^+ n_S)`, which is
the concentration estimate up to the factor :math:`\\mu`.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .estimators import (DEFAULT_NU_UNBIASED, ConcentrationEstimate, EstimatorKind, build_S,
                         build_thresholds, estimate_concentrations)
from .kinetics import ObservationSet
from .kpr import DEFAULT_KAPPA, kpr_rates, simulate_receptors
from .utils import DomainError, NoUnboundSignalError, check_positive

logger = logging.getLogger(__name__)

__all__ = [
    "CrnSpec", "CrnTrajectory", "SensingResult", "crn_steady_state", "crn_integrate",
    "end_to_end_sense", "STABILITY_LIMIT",
]

STABILITY_LIMIT = 0.1


class CrnSpec(object):
    """Rates and initial counts of the estimator network.

    Parameters
    ----------
    weights : array
        Shape (M, M). Production rates :math:`w_{ij}` of :math:`Y_i` by
        :math:`D_j`. Negative entries are accepted at the mean-field
        level and flagged.
    binding_rate : float
        Consumption rate :math:`k^+`.
    n_D : array
        Shape (M,). D counts, constant during the computation.
    n_S : float
        S count, constant during the computation.
    mu : float, optional
        S production rate upstream of the network.
    """

    def __init__(self, weights, binding_rate, n_D, n_S, mu=1.0):
        W = np.atleast_2d(np.asarray(weights, dtype=float))
        n_D = np.atleast_1d(np.asarray(n_D, dtype=float))
        if W.shape[1] != n_D.shape[0]:
            raise DomainError("Weights of shape {} do not match {} D species".format(
                W.shape, n_D.shape[0]))
        if np.any(n_D < 0) or n_S < 0:
            raise DomainError("Molecule counts must be non-negative")
        self.weights = W
        self.binding_rate = check_positive("binding_rate", binding_rate)
        self.mu = check_positive("mu", mu)
        self.n_D = n_D
        self.n_S = float(n_S)
        self.initial_Y = np.zeros(W.shape[0])
        if self.has_negative_weights:
            logger.warning("%d of %d CRN production rates are negative; "
                           "the network is only realizable at the mean-field level",
                           int(np.sum(W < 0)), W.size)

    def __repr__(self):
        return "CrnSpec(M:{:d}, k+:{:g}, n_S:{:g})".format(self.weights.shape[0],
                                                          self.binding_rate, self.n_S)

    @property
    def has_negative_weights(self):
        return bool(np.any(self.weights < 0))

    @property
    def production(self):
        """Constant production term :math:`W n_D`."""
        return self.weights.dot(self.n_D)

    @property
    def decay_rate(self):
        return self.binding_rate * self.n_S

    def derivative(self, Y):
        return self.production - self.decay_rate * Y


def crn_steady_state(n_D, n_S, weights, binding_rate):
    """Steady-state Y counts, :math:`W n_D / (k^+ n_S)`.

    Raises
    ------
    NoUnboundSignalError
        If no S molecule was produced.
    """
    if n_S <= 0:
        raise NoUnboundSignalError("n_S = 0: the unbound time was not transduced")
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    return W.dot(np.asarray(n_D, dtype=float)) / (binding_rate * n_S)


@dataclass(frozen=True)
class CrnTrajectory:
    times: np.ndarray
    n_Y: np.ndarray

    @property
    def final(self):
        return self.n_Y[-1]


def crn_integrate(spec, t_end, dt):
    """Integrate the rate equations from :math:`n_Y = 0` with fixed-step RK4.

    Parameters
    ----------
    spec : :class:`CrnSpec`
    t_end : float
    dt : float
        Largest step. The step actually taken divides `t_end` evenly.

    Returns
    -------
    out : :class:`CrnTrajectory`
        Times of shape (K+1,) and counts of shape (K+1, M).

    Raises
    ------
    DomainError
        If :math:`dt \\, k^+ n_S \\geq 0.1`.
    """
    t_end = check_positive("t_end", t_end)
    dt = check_positive("dt", dt)
    if dt * spec.decay_rate >= STABILITY_LIMIT:
        raise DomainError("dt * k+ * n_S = {:.3g} >= {}; use dt < {:.3g}".format(
            dt * spec.decay_rate, STABILITY_LIMIT, STABILITY_LIMIT / spec.decay_rate))
    steps = int(np.ceil(t_end / dt - 1e-9))
    h = t_end / steps
    Y = np.empty((steps + 1, spec.initial_Y.shape[0]))
    Y[0] = spec.initial_Y
    f = spec.derivative
    for s in range(steps):
        y = Y[s]
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        Y[s + 1] = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return CrnTrajectory(times=np.linspace(0.0, t_end, steps + 1), n_Y=Y)


@dataclass(frozen=True)
class SensingResult:
    """Outcome of one proofreading-receptor sensing round.

    Attributes
    ----------
    crn_estimate : :class:`ConcentrationEstimate`
        :math:`\\mu n_Y`, read out of the network.
    software_estimate : :class:`ConcentrationEstimate`
        Unbiased estimate from the unbound time and bound durations of
        the same trajectories.
    counts : :class:`MessengerCounts`
    n_Y : array
    spec : :class:`CrnSpec`
    """
    crn_estimate: ConcentrationEstimate
    software_estimate: ConcentrationEstimate
    counts: object
    n_Y: np.ndarray
    spec: CrnSpec


def end_to_end_sense(mix, N, seed, nu=DEFAULT_NU_UNBIASED, kappa=DEFAULT_KAPPA, mu=1.0,
                     replicate=0, threads=None):
    """Proofreading receptors, then the estimator network.

    The receiver is built for the rates of `mix`. The network reads
    :math:`n_Y = W n_D / (k^+ n_S)`, so that

    .. math:: \\hat c_{crn} = \\mu n_Y, \\quad
              \\hat c_{tot,crn} = \\frac{\\mu N}{k^+ n_S}, \\quad
              \\hat\\alpha_{crn} = W n_D / N

    Parameters
    ----------
    mix : :class:`LigandMixture`
    N : int
        Receptors.
    seed : int
    nu : float, optional
    kappa : float or array, optional
    mu : float, optional
        S production rate; 1 per second by default.
    replicate : int, optional
        Index of an independent round under the same seed.

    Returns
    -------
    out : :class:`SensingResult`
    """
    thresholds = build_thresholds(mix.unbinding_rates, nu)
    matrices = build_S(thresholds, mix.unbinding_rates)
    scheme = kpr_rates(thresholds, kappa)
    counts = simulate_receptors(mix, scheme, mu, N, seed, replicate=replicate, threads=threads)
    spec = CrnSpec(matrices.W, mix.binding_rate, counts.n_D, counts.n_S, mu=mu)
    n_Y = crn_steady_state(counts.n_D, counts.n_S, matrices.W, mix.binding_rate)
    c_tot = mu * N / (mix.binding_rate * counts.n_S)
    crn_estimate = ConcentrationEstimate(c_tot, mu * n_Y / c_tot, EstimatorKind.CRN,
                                         int(N), int(N))
    obs = ObservationSet(counts.unbound_time, counts.bound_durations, seed=seed,
                         ligand_types=counts.ligand_types)
    software = estimate_concentrations(EstimatorKind.UNBIASED, obs, thresholds, matrices,
                                       mix.binding_rate)
    logger.debug("CRN estimate %s, software estimate %s",
                 crn_estimate.concentrations, software.concentrations)
    return SensingResult(crn_estimate=crn_estimate, software_estimate=software,
                         counts=counts, n_Y=n_Y, spec=spec)
