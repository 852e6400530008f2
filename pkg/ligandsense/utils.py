"""
Utility functions shared by the estimation, simulation and experiment
modules: exception types, random stream derivation, worker pools and
logging setup.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import coloredlogs
import numpy as np

LOGGER = logging.getLogger(__name__)

__all__ = [
    "LigandSenseError", "DomainError", "IndistinguishableLigandsError",
    "UnidentifiableMixtureError", "NoEventsError", "NoUnboundSignalError", "ConfigError",
    "InternalConsistencyError", "derive_rng", "parallel_map", "setup_logging",
]

# Constants
TINY = 1e-8
SIMPLEX_TOL = 1e-12
THREADS_ENV = "LIGANDSENSE_THREADS"


###############################################################################
#                               Exception types                               #
###############################################################################


class LigandSenseError(RuntimeError):
    """Base class of every error raised by `ligandsense`."""


class DomainError(LigandSenseError, ValueError):
    """An input lies outside the domain of the operation."""


class IndistinguishableLigandsError(DomainError):
    """The interval-mass matrix is singular or too ill-conditioned.

    Happens when two unbinding rates are (nearly) equal, or when the
    thresholds put almost all mass of several ligands into the same
    interval.
    """

    def __init__(self, condition_number, limit):
        self.condition_number = condition_number
        self.limit = limit
        msg = ("Indistinguishable ligands: condition number of S is {:.3e} "
               "(limit {:.1e}). Spread the unbinding rates or change nu."
               .format(condition_number, limit))
        super(IndistinguishableLigandsError, self).__init__(msg)


class UnidentifiableMixtureError(DomainError):
    """The Fisher information matrix is singular."""


class NoEventsError(DomainError):
    """No binding event survived the threshold filter."""


class NoUnboundSignalError(DomainError):
    """The CRN received no S molecule, so the unbound time is unknown."""


class ConfigError(DomainError):
    """Invalid configuration value.

    Parameters
    ----------
    field : str
        Dotted name of the offending field.
    msg : str
        Explanation.
    """

    def __init__(self, field, msg):
        self.field = field
        self.msg = msg
        super(ConfigError, self).__init__("{}: {}".format(field, msg))


class InternalConsistencyError(LigandSenseError):
    """Two computations that must agree did not."""


def check_positive(name, value):
    """Raise :class:`DomainError` unless `value` is a finite, positive number."""
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise DomainError("{} must be positive and finite, got {!r}".format(name, value))
    return value


###############################################################################
#                            Random number streams                            #
###############################################################################


def derive_rng(seed, *keys):
    """Return an independent generator for the stream `(seed, *keys)`.

    The stream only depends on the integers given, never on the order
    in which streams are requested. This is what makes Monte Carlo
    results identical for any number of workers.

    Parameters
    ----------
    seed : int
        Master seed.
    keys : int
        Stream identifiers, e.g. a tag and a trial index.

    Returns
    -------
    out : :class:`numpy.random.Generator`
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_generator(seed):
    """Coerce an int, a `SeedSequence` or a `Generator` into a `Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise DomainError("An explicit seed or Generator is required")
    return np.random.default_rng(seed)


###############################################################################
#                                 Worker pools                                #
###############################################################################


def thread_count(default=1):
    """Number of workers allowed by ``LIGANDSENSE_THREADS``."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        LOGGER.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return default
    return max(1, n)


def parallel_map(func, items, threads=None):
    """Map `func` over `items`, preserving order.

    With a single worker the map runs inline, which keeps tracebacks
    readable.
    """
    items = list(items)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    LOGGER.debug("Mapping %d work items over %d threads", len(items), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def chunk_indices(n, chunk):
    """Split ``range(n)`` into consecutive ``(start, stop)`` blocks."""
    return [(start, min(start + chunk, n)) for start in range(0, n, chunk)]


###############################################################################
#                                   Logging                                   #
###############################################################################


def setup_logging(level="INFO"):
    """Install colored console logging on the package logger."""
    logger = logging.getLogger("ligandsense")
    coloredlogs.install(level=level, logger=logger,
                        fmt="%(asctime)s %(name)s %(levelname)s %(message)s")
    return logger
