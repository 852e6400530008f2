"""Scenario configuration and the sweeps built on it.

A :class:`ScenarioConfig` is read from YAML::

    schema_version: 1
    mixture:
      M: 5
      chi: 5.0
    monte_carlo:
      N: 10000
      seed: 7

Every section and key is optional except `schema_version`; unknown
keys are rejected.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
import yaml
from scipy.stats import norm

from .crn import end_to_end_sense
from .estimators import (NORMALIZERS, build_R, build_S, build_thresholds, clip_to_simplex,
                         estimate_concentrations, estimate_ratios_biased,
                         estimate_ratios_unbiased, estimate_total_concentration,
                         filtering_bounds, sample_sufficient_statistics)
from .kinetics import (LigandMixture, ObservationSet, absence_ratios, highest_affinity_ratios,
                       similarity_rates, uniform_ratios)
from .kpr import kpr_binning_bias, kpr_mixture_stats, kpr_rates, simulate_receptors
from .theory import (METRICS, crlb, crlb_report, estimator_analytics, optimize_nu,
                     report_metric, unknown_ligand_analytics)
from .utils import (ConfigError, DomainError, UnidentifiableMixtureError, chunk_indices,
                    derive_rng, parallel_map)

logger = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig", "MixtureConfig", "EstimatorConfig", "MonteCarloConfig", "KprConfig",
    "FilteringConfig", "UnknownConfig", "SweepRow", "KprFigure",
    "SWEEP_VARIABLES", "SWEEP_ESTIMATORS", "SWEEP_COLUMNS",
    "load_config", "dump_config", "default_grid", "run_sweep", "sweep_table",
    "run_kpr_figure", "run_kappa_sweep", "run_crn_replicates", "run_estimate",
    "crlb_table", "observation_table", "observations_from_table", "kpr_setup",
]

# Constants
SCHEMA_VERSION = 1
SWEEP_VARIABLES = ("M", "chi", "N", "alpha_M", "absence", "k_u", "alpha_u")
SWEEP_ESTIMATORS = ("crlb", "unbiased", "biased", "nu_optimized")
ESTIMATE_KINDS = ("unbiased", "biased", "ml_oracle")
SWEEP_COLUMNS = ["var", "estimator", "analytic", "mc", "mc_se", "crlb"]
MC_CHUNK = 1000
SWEEP_STREAM = 0x737770
DEFAULT_UNKNOWN_RATE = 100.0
DEFAULT_UNKNOWN_RATIO = 0.1


###############################################################################
#                                Configuration                                #
###############################################################################


@dataclass
class MixtureConfig:
    M: int = 5
    chi: float = 5.0
    k_anchor: float = 1.0
    binding_rate: float = 1.0
    total_concentration: float = 1.0
    ratios: list = None
    alpha_M: float = None
    absent: list = field(default_factory=list)


@dataclass
class EstimatorConfig:
    kinds: list = field(default_factory=lambda: ["unbiased"])
    nu_unbiased: float = 3.0
    nu_biased: float = 5.0
    normalizer: str = "sampled"
    metric: str = "average_nmse"
    clip: bool = False


@dataclass
class MonteCarloConfig:
    N: int = 10000
    trials: int = 10000
    seed: int = 0


@dataclass
class KprConfig:
    M: int = 3
    nu: float = 3.0
    kappa: float = 0.6
    mu: float = 1.0
    replicates: int = 1000
    bins: int = 30


@dataclass
class FilteringConfig:
    enabled: bool = False
    factor: float = 5.0
    lower: float = None
    upper: float = None


@dataclass
class UnknownConfig:
    rates: list = field(default_factory=list)
    ratios: list = field(default_factory=list)


SECTIONS = {
    "mixture": MixtureConfig,
    "estimators": EstimatorConfig,
    "monte_carlo": MonteCarloConfig,
    "kpr": KprConfig,
    "filtering": FilteringConfig,
    "unknown": UnknownConfig,
}


def _coerce(section, f, value):
    name = "{}.{}".format(section, f.name)
    if value is None or f.type not in (int, float, bool, str):
        return value
    if f.type is bool:
        if not isinstance(value, bool):
            raise ConfigError(name, "expected true/false, got {!r}".format(value))
        return value
    if f.type is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(name, "expected an integer, got {!r}".format(value))
        return int(value)
    try:
        return f.type(value)
    except (TypeError, ValueError):
        raise ConfigError(name, "expected {}, got {!r}".format(f.type.__name__, value))


@dataclass
class ScenarioConfig:
    """Every knob of a scenario, with the reference-scenario defaults.

    Defaults: five ligands with similarity parameter 5 and
    :math:`k^-_M = 1` per second, equal ratios, :math:`N = 10^4`
    samples and :math:`10^4` Monte Carlo trials.
    """
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    estimators: EstimatorConfig = field(default_factory=EstimatorConfig)
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    kpr: KprConfig = field(default_factory=KprConfig)
    filtering: FilteringConfig = field(default_factory=FilteringConfig)
    unknown: UnknownConfig = field(default_factory=UnknownConfig)

    @classmethod
    def from_dict(cls, data):
        """Build and validate a config from a parsed YAML mapping."""
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a mapping, got {}".format(type(data).__name__))
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version",
                              "expected {}, got {!r}".format(SCHEMA_VERSION, version))
        sections = {}
        for name, values in data.items():
            if name not in SECTIONS:
                raise ConfigError(name, "unknown section")
            if values is None:
                values = {}
            if not isinstance(values, dict):
                raise ConfigError(name, "expected a mapping")
            known = {f.name: f for f in fields(SECTIONS[name])}
            kwargs = {}
            for key, value in values.items():
                if key not in known:
                    raise ConfigError("{}.{}".format(name, key), "unknown key")
                kwargs[key] = _coerce(name, known[key], value)
            sections[name] = SECTIONS[name](**kwargs)
        config = cls(**sections)
        config.validate()
        return config

    def to_dict(self):
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        return out

    def copy(self):
        return copy.deepcopy(self)

    def validate(self):
        """Raise :class:`ConfigError` naming the first invalid field."""
        mx = self.mixture
        if mx.M < 1:
            raise ConfigError("mixture.M", "at least one ligand type is required")
        if not mx.chi > 1:
            raise ConfigError("mixture.chi", "similarity parameter must exceed 1")
        for name in ("k_anchor", "binding_rate", "total_concentration"):
            if not getattr(mx, name) > 0:
                raise ConfigError("mixture." + name, "must be positive")
        try:
            self.mixture_model()
        except DomainError as err:
            raise ConfigError("mixture", str(err))
        est = self.estimators
        bad = [k for k in est.kinds if k not in SWEEP_ESTIMATORS + ESTIMATE_KINDS]
        if bad:
            raise ConfigError("estimators.kinds", "unknown estimators {}".format(bad))
        for name in ("nu_unbiased", "nu_biased"):
            if not getattr(est, name) > 0:
                raise ConfigError("estimators." + name, "must be positive")
        if est.normalizer not in NORMALIZERS:
            raise ConfigError("estimators.normalizer", "expected one of {}".format(NORMALIZERS))
        if est.metric not in METRICS:
            raise ConfigError("estimators.metric", "expected one of {}".format(METRICS))
        mc = self.monte_carlo
        if mc.N < 3:
            raise ConfigError("monte_carlo.N", "at least 3 samples are required")
        if mc.trials < 1:
            raise ConfigError("monte_carlo.trials", "at least one trial is required")
        if mc.seed < 0:
            raise ConfigError("monte_carlo.seed", "must be non-negative")
        kp = self.kpr
        if kp.M < 2:
            raise ConfigError("kpr.M", "at least two substates are required")
        for name in ("nu", "kappa", "mu"):
            if not getattr(kp, name) > 0:
                raise ConfigError("kpr." + name, "must be positive")
        if kp.replicates < 1:
            raise ConfigError("kpr.replicates", "at least one replicate is required")
        if kp.bins < 1:
            raise ConfigError("kpr.bins", "at least one bin is required")
        if not self.filtering.factor >= 1:
            raise ConfigError("filtering.factor", "must be at least 1")
        for name in ("lower", "upper"):
            value = getattr(self.filtering, name)
            if value is not None and value < 0:
                raise ConfigError("filtering." + name, "must be non-negative")
        un = self.unknown
        if len(un.rates) != len(un.ratios):
            raise ConfigError("unknown.ratios", "needs one ratio per unknown rate")
        if any(not r > 0 for r in un.rates):
            raise ConfigError("unknown.rates", "must be positive")
        if any(r < 0 for r in un.ratios) or sum(un.ratios) >= 1:
            raise ConfigError("unknown.ratios", "must be non-negative and sum below 1")
        return self

    def mixture_model(self):
        """The mixture of ligands known to the receiver.

        Returns
        -------
        out : :class:`LigandMixture`
        """
        mx = self.mixture
        rates = similarity_rates(mx.M, mx.chi, mx.k_anchor)
        if mx.ratios is not None:
            ratios = mx.ratios
        elif mx.alpha_M is not None:
            ratios = highest_affinity_ratios(mx.M, mx.alpha_M)
        elif mx.absent:
            ratios = absence_ratios(mx.M, mx.absent)
        else:
            ratios = uniform_ratios(mx.M)
        return LigandMixture(mx.binding_rate, rates, ratios, mx.total_concentration)

    def true_mixture(self):
        """The channel, including unknown ligands.

        Returns
        -------
        mix : :class:`LigandMixture`
        known_index : array
            Position of each known ligand in `mix`.
        """
        known = self.mixture_model()
        if not self.unknown.rates:
            return known, np.arange(known.M)
        return known.with_unknown_ligands(self.unknown.rates, self.unknown.ratios)

    def filter_bounds(self, unbinding_rates, nu):
        """:math:`(T_0, T_M)` for the configured filtering."""
        fl = self.filtering
        if not fl.enabled:
            return 0.0, np.inf
        lower, upper = filtering_bounds(unbinding_rates, nu, fl.factor)
        return (lower if fl.lower is None else fl.lower,
                upper if fl.upper is None else fl.upper)

    @property
    def metric(self):
        """The configured metric, or the total normalized MSE with absent ligands."""
        if self.mixture.absent:
            return "total_normalized_mse"
        return self.estimators.metric


def load_config(path):
    """Read a :class:`ScenarioConfig` from YAML; ``defaults`` or None gives the defaults."""
    if path is None or path == "defaults":
        return ScenarioConfig()
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as err:
        raise ConfigError(str(path), "invalid YAML: {}".format(err))
    except OSError as err:
        raise ConfigError(str(path), err.strerror or str(err))
    config = ScenarioConfig.from_dict(data)
    logger.info("Loaded scenario from %s", path)
    return config


def dump_config(config):
    """Serialize a config to YAML text with sorted keys."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


###############################################################################
#                                    Sweeps                                   #
###############################################################################


@dataclass(frozen=True)
class SweepRow:
    var: object
    estimator: str
    analytic: float
    mc: float
    mc_se: float
    crlb: float
    nu: float

    def record(self):
        return {name: getattr(self, name) for name in SWEEP_COLUMNS}


def default_grid(variable, start=None, stop=None, num=None, M=5):
    """Default sweep grid over the usual axis range of each variable.

    Unknown-ligand rates avoid the default known rates, so the combined
    mixture stays distinguishable.
    """
    if variable not in SWEEP_VARIABLES:
        raise ConfigError("sweep.var", "expected one of {}".format(SWEEP_VARIABLES))
    if variable == "M":
        lo, hi = (2 if start is None else start), (10 if stop is None else stop)
        return list(range(int(lo), int(hi) + 1))
    if variable == "absence":
        return [[]] + [[i] for i in range(1, M + 1)]
    num = 10 if num is None else int(num)
    if num < 1:
        raise ConfigError("sweep.num", "at least one grid point is required")
    if variable == "N":
        lo, hi = (1e2 if start is None else start), (1e5 if stop is None else stop)
        return sorted(set(int(round(x)) for x in np.geomspace(lo, hi, num)))
    if variable == "k_u":
        lo, hi = (0.3 if start is None else start), (3e4 if stop is None else stop)
        return list(np.geomspace(lo, hi, num))
    lo, hi = {"chi": (1.5, 10.0), "alpha_M": (0.05, 0.95), "alpha_u": (0.0, 0.3)}[variable]
    lo, hi = (lo if start is None else start), (hi if stop is None else stop)
    return list(np.linspace(lo, hi, num))


def _point_config(config, variable, value):
    cfg = config.copy()
    if variable == "M":
        cfg.mixture.M = int(value)
        cfg.mixture.ratios = None
        cfg.mixture.absent = []
    elif variable == "chi":
        cfg.mixture.chi = float(value)
    elif variable == "N":
        cfg.monte_carlo.N = int(value)
    elif variable == "alpha_M":
        cfg.mixture.alpha_M = float(value)
        cfg.mixture.ratios = None
    elif variable == "absence":
        cfg.mixture.absent = [int(i) for i in np.atleast_1d(value)]
        cfg.mixture.ratios = None
        cfg.estimators.metric = "total_normalized_mse"
    elif variable == "k_u":
        cfg.unknown.rates = [float(value)]
        cfg.unknown.ratios = list(config.unknown.ratios[:1]) or [DEFAULT_UNKNOWN_RATIO]
    elif variable == "alpha_u":
        cfg.unknown.ratios = [float(value)]
        cfg.unknown.rates = list(config.unknown.rates[:1]) or [DEFAULT_UNKNOWN_RATE]
    try:
        return cfg.validate()
    except ConfigError as err:
        raise ConfigError(err.field, "grid value {!r}: {}".format(value, err.msg))


def _label(variable, value):
    if variable == "absence":
        absent = [int(i) for i in np.atleast_1d(value)]
        return "+".join(str(i) for i in absent) if absent else "none"
    if variable in ("M", "N"):
        return int(value)
    return float(value)


def _trial_errors(c_hat, c_true, metric, total_concentration):
    sq = (c_hat - c_true) ** 2
    if metric == "average_nmse":
        return np.mean(sq / c_true ** 2, axis=-1)
    if metric == "total_normalized_mse":
        return sq.sum(axis=-1) / total_concentration ** 2
    return sq[..., -1] / c_true[-1] ** 2


def _monte_carlo(cfg, truth, known_index, known, scheme, kind, trials, keys):
    N = cfg.monte_carlo.N
    matrices = build_S(scheme, known.unbinding_rates)
    if kind == "biased":
        matrices = build_R(scheme, known.unbinding_rates, matrices)
    c_true = truth.concentrations[known_index]
    errors = []
    for c, (start, stop) in enumerate(chunk_indices(trials, MC_CHUNK)):
        rng = derive_rng(cfg.monte_carlo.seed, SWEEP_STREAM, *(keys + (c,)))
        stats = sample_sufficient_statistics(truth, scheme, N, rng, size=stop - start)
        n_events = stats.n_events
        denominator = N if cfg.estimators.normalizer == "sampled" else n_events
        if kind == "biased":
            ratios = estimate_ratios_biased(stats.counts, denominator, matrices.R)
        else:
            ratios = estimate_ratios_unbiased(stats.counts, denominator, matrices.W)
        if cfg.estimators.clip:
            ratios = clip_to_simplex(ratios)
        c_tot = estimate_total_concentration(stats.unbound_time, N, truth.binding_rate)
        errors.append(_trial_errors(c_tot[:, None] * ratios, c_true, cfg.metric,
                                    truth.total_concentration))
    errors = np.concatenate(errors)
    se = errors.std(ddof=1) / np.sqrt(errors.shape[0]) if errors.shape[0] > 1 else np.nan
    return float(errors.mean()), float(se)


def _evaluate_point(cfg, variable, index, value, estimators, trials):
    known = cfg.mixture_model()
    truth, known_index = cfg.true_mixture()
    N = cfg.monte_carlo.N
    metric = cfg.metric
    has_unknown = bool(cfg.unknown.rates)
    crlb_value = np.nan
    if not has_unknown:
        try:
            crlb_value = report_metric(crlb_report(known, N), metric)
        except UnidentifiableMixtureError as err:
            logger.warning("No CRLB at %s=%s: %s", variable, value, err)
    label = _label(variable, value)
    rows = []
    for est in estimators:
        if est == "crlb":
            rows.append(SweepRow(label, est, crlb_value, np.nan, np.nan, crlb_value, np.nan))
            continue
        kind = "biased" if est == "biased" else "unbiased"
        if est == "nu_optimized":
            nu = optimize_nu(known, N, metric=metric).nu
        elif kind == "biased":
            nu = cfg.estimators.nu_biased
        else:
            nu = cfg.estimators.nu_unbiased
        lower, upper = cfg.filter_bounds(known.unbinding_rates, nu)
        scheme = build_thresholds(known.unbinding_rates, nu, lower, upper)
        if has_unknown:
            report = unknown_ligand_analytics(
                known.unbinding_rates, cfg.unknown.rates, cfg.unknown.ratios, scheme,
                truth.total_concentration, N, kind=kind,
                known_ratios=truth.ratios[known_index], normalizer=cfg.estimators.normalizer)
        else:
            report = estimator_analytics(kind, known, N, nu=nu, lower=lower, upper=upper,
                                         normalizer=cfg.estimators.normalizer)
        analytic = report_metric(report, metric)
        keys = (SWEEP_VARIABLES.index(variable), index, SWEEP_ESTIMATORS.index(est))
        mc, se = _monte_carlo(cfg, truth, known_index, known, scheme, kind, trials, keys)
        rows.append(SweepRow(label, est, analytic, mc, se, crlb_value, nu))
        logger.debug("%s=%s %s: analytic=%.6g mc=%.6g +- %.2g (nu=%.4g)",
                     variable, label, est, analytic, mc, se, nu)
    return rows


def run_sweep(config, variable, grid=None, estimators=None, trials=None, threads=None):
    """Analytic and Monte Carlo error metrics along one variable.

    Parameters
    ----------
    config : :class:`ScenarioConfig`
    variable : str
        One of :data:`SWEEP_VARIABLES`.
    grid : list, optional
        Values of `variable`; sets of absent ligand indices for
        ``absence``. Defaults to :func:`default_grid`.
    estimators : list of str, optional
        Subset of :data:`SWEEP_ESTIMATORS`. Defaults to the configured
        kinds.
    trials : int, optional
        Monte Carlo trials per point; `monte_carlo.trials` by default.
    threads : int, optional
        Worker count; rows do not depend on it.

    Returns
    -------
    out : list of :class:`SweepRow`
        Ordered by grid index, then estimator.
    """
    if variable not in SWEEP_VARIABLES:
        raise ConfigError("sweep.var", "expected one of {}, got {!r}".format(SWEEP_VARIABLES,
                                                                            variable))
    if grid is None:
        grid = default_grid(variable, M=config.mixture.M)
    grid = list(grid)
    if not grid:
        raise ConfigError("sweep.grid", "the grid is empty")
    if estimators is None:
        estimators = [k for k in config.estimators.kinds if k in SWEEP_ESTIMATORS] or ["unbiased"]
    bad = [e for e in estimators if e not in SWEEP_ESTIMATORS]
    if bad:
        raise ConfigError("estimators.kinds", "cannot sweep {}; expected {}".format(
            bad, SWEEP_ESTIMATORS))
    trials = config.monte_carlo.trials if trials is None else int(trials)
    if trials < 1:
        raise ConfigError("monte_carlo.trials", "at least one trial is required")
    points = [(i, value, _point_config(config, variable, value)) for i, value in enumerate(grid)]
    results = parallel_map(lambda p: _evaluate_point(p[2], variable, p[0], p[1], estimators,
                                                     trials), points, threads)
    rows = [row for point_rows in results for row in point_rows]
    logger.info("""
Sweep finished
------------------------------
\t variable   : {}
\t points     : {:8d}
\t estimators : {}
\t trials     : {:8d}
""".format(variable, len(grid), ", ".join(estimators), trials))
    return rows


def sweep_table(rows):
    """Sweep rows as a table with the fixed sweep columns."""
    return pd.DataFrame([row.record() for row in rows], columns=SWEEP_COLUMNS)


###############################################################################
#                            Proofreading figures                             #
###############################################################################


@dataclass(frozen=True)
class KprFigure:
    """Histograms of the D counts and their analytic overlays.

    Attributes
    ----------
    histogram : :class:`pandas.DataFrame`
        Columns ``j, count, empirical, kpr_analytic, binned_analytic``.
    summary : :class:`pandas.DataFrame`
        Per-substate empirical and analytic means and variances.
    n_S : array
        S counts of every replicate.
    expected_n_S : float
    """
    histogram: pd.DataFrame
    summary: pd.DataFrame
    n_S: np.ndarray
    expected_n_S: float


def kpr_setup(config):
    mx = config.mixture
    kp = config.kpr
    mix = LigandMixture.from_similarity(kp.M, mx.chi, mx.k_anchor,
                                        binding_rate=mx.binding_rate,
                                        total_concentration=mx.total_concentration)
    thresholds = build_thresholds(mix.unbinding_rates, kp.nu)
    return mix, thresholds, kpr_rates(thresholds, kp.kappa)


def run_kpr_figure(config, replicates=None, threads=None):
    """Monte Carlo of the D counts against the Gaussian approximations.

    Each replicate simulates `monte_carlo.N` receptors of a `kpr.M`
    ligand mixture. The overlays are the proofreading Gaussian and the
    Gaussian of the ideal interval counts.
    """
    kp = config.kpr
    N = config.monte_carlo.N
    seed = config.monte_carlo.seed
    replicates = kp.replicates if replicates is None else int(replicates)
    mix, thresholds, scheme = kpr_setup(config)
    runs = parallel_map(
        lambda r: simulate_receptors(mix, scheme, kp.mu, N, seed, replicate=r, threads=1),
        range(replicates), threads)
    n_D = np.array([run.n_D for run in runs], dtype=float)
    n_S = np.array([run.n_S for run in runs], dtype=float)
    gauss = kpr_mixture_stats(mix, scheme, N)
    p = build_S(thresholds, mix.unbinding_rates).S.dot(mix.ratios)
    binned_mean, binned_var = N * p, N * p * (1.0 - p)
    records = []
    for j in range(scheme.M):
        density, edges = np.histogram(n_D[:, j], bins=kp.bins, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        kpr_pdf = gauss.pdf(j, centers)
        binned_pdf = norm.pdf(centers, loc=binned_mean[j], scale=np.sqrt(binned_var[j]))
        for x, emp, a, b in zip(centers, density, kpr_pdf, binned_pdf):
            records.append({"j": j + 1, "count": x, "empirical": emp, "kpr_analytic": a,
                            "binned_analytic": b})
    histogram = pd.DataFrame(records, columns=["j", "count", "empirical", "kpr_analytic",
                                               "binned_analytic"])
    se = n_D.std(axis=0, ddof=1) / np.sqrt(replicates) if replicates > 1 else np.nan
    summary = pd.DataFrame({
        "j": np.arange(1, scheme.M + 1),
        "empirical_mean": n_D.mean(axis=0),
        "empirical_se": se,
        "kpr_mean": gauss.mean,
        "binned_mean": binned_mean,
        "empirical_var": n_D.var(axis=0, ddof=1) if replicates > 1 else np.nan,
        "kpr_var": gauss.variance,
    })
    expected_n_S = kp.mu * N / (mix.binding_rate * mix.total_concentration)
    logger.info("KPR figure: %d replicates of %d receptors, mean n_S %.2f (expected %.2f)",
                replicates, N, n_S.mean(), expected_n_S)
    return KprFigure(histogram=histogram, summary=summary, n_S=n_S, expected_n_S=expected_n_S)


def run_kappa_sweep(config, kappas):
    """Binning bias of the proofreading receiver for several kappa values."""
    mx = config.mixture
    kp = config.kpr
    mix = LigandMixture.from_similarity(kp.M, mx.chi, mx.k_anchor,
                                        binding_rate=mx.binding_rate,
                                        total_concentration=mx.total_concentration)
    thresholds = build_thresholds(mix.unbinding_rates, kp.nu)
    records = []
    for kappa in kappas:
        bias = kpr_binning_bias(mix, thresholds, kpr_rates(thresholds, kappa))
        for i, b in enumerate(bias):
            records.append({"kappa": float(kappa), "ligand": i + 1, "binning_bias": b})
    return pd.DataFrame(records, columns=["kappa", "ligand", "binning_bias"])


def run_crn_replicates(config, replicates=1, threads=None):
    """Paired proofreading-network and software estimates.

    Returns
    -------
    out : :class:`pandas.DataFrame`
        Columns ``replicate, ligand, true, crn_estimate,
        software_estimate``.
    """
    kp = config.kpr
    mix, _, _ = kpr_setup(config)
    N = config.monte_carlo.N
    seed = config.monte_carlo.seed
    results = parallel_map(
        lambda r: end_to_end_sense(mix, N, seed, nu=kp.nu, kappa=kp.kappa, mu=kp.mu,
                                   replicate=r, threads=1),
        range(int(replicates)), threads)
    records = []
    for r, res in enumerate(results):
        for i in range(mix.M):
            records.append({"replicate": r, "ligand": i + 1,
                            "true": mix.concentrations[i],
                            "crn_estimate": res.crn_estimate.concentrations[i],
                            "software_estimate": res.software_estimate.concentrations[i]})
    return pd.DataFrame(records, columns=["replicate", "ligand", "true", "crn_estimate",
                                          "software_estimate"])


###############################################################################
#                          Single-round estimation                            #
###############################################################################


def observation_table(obs):
    """One row per receptor: ``receptor, unbound_time, bound_time, ligand_type``.

    Ligand types are one-based; -1 marks an unknown type.
    """
    if obs.unbound_durations is None:
        raise DomainError("Per-receptor unbound durations were not kept")
    types = obs.ligand_types + 1 if obs.ligand_types is not None else np.full(obs.N, -1)
    return pd.DataFrame({"receptor": np.arange(obs.N),
                         "unbound_time": obs.unbound_durations,
                         "bound_time": obs.bound_durations,
                         "ligand_type": types},
                        columns=["receptor", "unbound_time", "bound_time", "ligand_type"])


def observations_from_table(table):
    """Inverse of :func:`observation_table`."""
    missing = {"unbound_time", "bound_time"} - set(table.columns)
    if missing:
        raise ConfigError("data", "missing columns {}".format(sorted(missing)))
    unbound = table["unbound_time"].to_numpy(dtype=float)
    types = None
    if "ligand_type" in table.columns and np.all(table["ligand_type"] > 0):
        types = table["ligand_type"].to_numpy(dtype=int) - 1
    return ObservationSet(unbound.sum(), table["bound_time"].to_numpy(dtype=float),
                          ligand_types=types, unbound_durations=unbound)


def run_estimate(config, obs, kinds=None):
    """Estimates from one observation set, beside their analytic errors.

    Returns
    -------
    out : :class:`pandas.DataFrame`
        Columns ``estimator, ligand, true, estimate, analytic_mean,
        analytic_variance, analytic_mse``. The ML oracle has no closed
        form; its analytic columns hold the CRLB.
    """
    kinds = [k for k in (kinds or config.estimators.kinds) if k in ESTIMATE_KINDS] or ["unbiased"]
    mix = config.mixture_model()
    N = obs.N
    records = []
    for kind in kinds:
        nu = config.estimators.nu_biased if kind == "biased" else config.estimators.nu_unbiased
        lower, upper = config.filter_bounds(mix.unbinding_rates, nu)
        scheme = build_thresholds(mix.unbinding_rates, nu, lower, upper)
        matrices = build_S(scheme, mix.unbinding_rates)
        if kind == "biased":
            matrices = build_R(scheme, mix.unbinding_rates, matrices)
        estimate = estimate_concentrations(kind, obs, scheme, matrices, mix.binding_rate,
                                           clip=config.estimators.clip,
                                           normalizer=config.estimators.normalizer)
        if kind == "ml_oracle":
            report = crlb_report(mix, N)
        else:
            report = estimator_analytics(kind, mix, N, nu=nu, lower=lower, upper=upper,
                                         normalizer=config.estimators.normalizer)
        for i in range(mix.M):
            records.append({"estimator": kind, "ligand": i + 1,
                            "true": mix.concentrations[i],
                            "estimate": estimate.concentrations[i],
                            "analytic_mean": report.mean[i],
                            "analytic_variance": report.variance[i],
                            "analytic_mse": report.mse[i]})
    return pd.DataFrame(records, columns=["estimator", "ligand", "true", "estimate",
                                          "analytic_mean", "analytic_variance",
                                          "analytic_mse"])


def crlb_table(config):
    """Fisher diagonal and Cramér-Rao bounds of the configured mixture."""
    mix = config.mixture_model()
    N = config.monte_carlo.N
    result = crlb(mix.ratios, mix.unbinding_rates, N, mix.total_concentration)
    fisher_diag = np.full(mix.M, np.nan)
    fisher_diag[result.present] = np.diag(result.fisher.matrix)
    return pd.DataFrame({"ligand": np.arange(1, mix.M + 1),
                         "ratio": mix.ratios,
                         "fisher_diag": fisher_diag,
                         "ratio_crlb": result.ratio_bound,
                         "concentration_crlb": result.concentration_bound},
                        columns=["ligand", "ratio", "fisher_diag", "ratio_crlb",
                                 "concentration_crlb"])
