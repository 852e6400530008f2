import numpy as np
import scipy.linalg

from ligandsense import LigandMixture

# Standard errors allowed between a Monte Carlo mean and its target
SE_BAND = 4.0


def default_mixture(M=5, chi=5.0, ratios=None, total_concentration=1.0):
    """Reference mixture: k_M = 1/s, k+ = 1."""
    return LigandMixture.from_similarity(M, chi, 1.0, ratios=ratios,
                                         total_concentration=total_concentration)


def absorption_by_markov_chain(beta, k):
    """Exit probabilities of the proofreading chain by a dense solve.

    Transient states are the substates 1..M; substate j exits to D_j
    at rate k and advances at rate beta_j.
    """
    beta = np.asarray(beta, dtype=float)
    M = beta.shape[0] + 1
    Q = np.zeros((M, M))
    B = np.zeros((M, M))
    for j in range(M):
        out = k
        if j < M - 1:
            Q[j, j + 1] = beta[j]
            out += beta[j]
        Q[j, j] = -out
        B[j, j] = k
    return scipy.linalg.solve(-Q, B)[0]


def assert_mean_within_se(samples, target, band=SE_BAND, axis=0):
    """Mean of `samples` within `band` standard errors of `target`."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    se = samples.std(axis=axis, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(mean - target) <= band * se), \
        "mean {} vs target {} (se {})".format(mean, target, se)
