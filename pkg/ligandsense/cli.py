"""Command-line entry point: ``ligandsense <command> [options]``.

Every command writes one CSV table to stdout, or to ``--out``. Exit
codes: 0 on success, 1 on a usage error, 2 on a numeric or
configuration error.
"""
import argparse
import logging
import sys

import pandas as pd

from . import experiments, postprocess
from .crn import crn_integrate, end_to_end_sense
from .kinetics import sample_observations
from .theory import optimize_nu
from .utils import ConfigError, LigandSenseError, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2
# Largest RK4 step as a fraction of the relaxation time 1/(k+ n_S).
TRAJECTORY_STEP = 0.05
TRAJECTORY_SPAN = 10.0


class ArgumentParser(argparse.ArgumentParser):
    """Parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got {!r}".format(text))


def _common_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", default="defaults",
                        help="YAML scenario file, or 'defaults'")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials (overrides the config)")
    common.add_argument("--threads", type=int,
                        help="worker threads; LIGANDSENSE_THREADS by default")
    common.add_argument("--out", help="CSV destination; stdout by default")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser():
    common = _common_parser()
    parser = ArgumentParser(prog="ligandsense",
                            description="Ligand concentration sensing from receptor dwell times")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    commands.add_parser("simulate", parents=[common],
                        help="dump one simulated round of receptor observations")

    p = commands.add_parser("estimate", parents=[common],
                            help="estimate concentrations beside their analytic errors")
    p.add_argument("--data", help="observation CSV; a fresh simulation by default")
    p.add_argument("--estimator", action="append", choices=experiments.ESTIMATE_KINDS)

    p = commands.add_parser("crlb", parents=[common], help="Fisher information and CRLB")
    p.add_argument("--M", type=int, help="number of ligand types")
    p.add_argument("--N", type=int, help="number of samples")

    p = commands.add_parser("sweep", parents=[common], help="error metrics along one variable")
    p.add_argument("--var", required=True, choices=experiments.SWEEP_VARIABLES)
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--num", type=int)
    p.add_argument("--grid", type=_float_list, help="explicit comma-separated grid")
    p.add_argument("--estimator", action="append", choices=experiments.SWEEP_ESTIMATORS)
    p.add_argument("--plot", help="also write an SVG figure to this path")

    p = commands.add_parser("kpr", parents=[common],
                            help="proofreading D-count histograms against theory")
    p.add_argument("--replicates", type=int)
    p.add_argument("--kappa", type=_float_list,
                   help="report the binning bias over these kappa values instead")
    p.add_argument("--plot", help="also write the histogram as an SVG figure")

    p = commands.add_parser("crn", parents=[common],
                            help="estimator network against the software estimate")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--trajectory", help="also write the RK4 trajectory of replicate 0 as CSV")

    p = commands.add_parser("optimize-nu", parents=[common],
                            help="threshold factor minimizing the analytic error")
    p.add_argument("--method", choices=("golden", "grid"), default="golden")
    p.add_argument("--estimator", choices=("unbiased", "biased"), default="unbiased")
    return parser


def _config(args):
    config = experiments.load_config(args.config)
    if args.seed is not None:
        config.monte_carlo.seed = args.seed
    if args.trials is not None:
        config.monte_carlo.trials = args.trials
    return config.validate()


###############################################################################
#                                   Commands                                  #
###############################################################################


def cmd_simulate(args, config):
    truth, _ = config.true_mixture()
    obs = sample_observations(truth, config.monte_carlo.N, config.monte_carlo.seed,
                              keep_unbound=True)
    return experiments.observation_table(obs)


def cmd_estimate(args, config):
    if args.data:
        try:
            table = pd.read_csv(args.data)
        except (OSError, pd.errors.ParserError) as err:
            raise ConfigError("data", str(err))
        obs = experiments.observations_from_table(table)
    else:
        truth, _ = config.true_mixture()
        obs = sample_observations(truth, config.monte_carlo.N, config.monte_carlo.seed)
    return experiments.run_estimate(config, obs, args.estimator)


def cmd_crlb(args, config):
    if args.M is not None:
        config.mixture.M = args.M
        config.mixture.ratios = None
        config.mixture.absent = []
    if args.N is not None:
        config.monte_carlo.N = args.N
    return experiments.crlb_table(config.validate())


def cmd_sweep(args, config):
    if args.grid is not None:
        grid = args.grid
        if args.var == "absence":
            grid = [[int(v)] if v > 0 else [] for v in grid]
    else:
        grid = experiments.default_grid(args.var, args.start, args.stop, args.num,
                                        M=config.mixture.M)
    rows = experiments.run_sweep(config, args.var, grid, estimators=args.estimator,
                                 threads=args.threads)
    table = experiments.sweep_table(rows)
    if args.plot:
        postprocess.plot_sweep(table, args.plot, variable=args.var)
    return table


def cmd_kpr(args, config):
    if args.kappa:
        if args.plot:
            raise ConfigError("plot", "only the D-count histogram is plotted, not a kappa sweep")
        return experiments.run_kappa_sweep(config, args.kappa)
    figure = experiments.run_kpr_figure(config, args.replicates, threads=args.threads)
    if args.plot:
        postprocess.plot_kpr_histogram(figure.histogram, args.plot)
    return figure.histogram


def cmd_crn(args, config):
    table = experiments.run_crn_replicates(config, args.replicates, threads=args.threads)
    if args.trajectory:
        kp = config.kpr
        mix, _, _ = experiments.kpr_setup(config)
        result = end_to_end_sense(mix, config.monte_carlo.N, config.monte_carlo.seed,
                                  nu=kp.nu, kappa=kp.kappa, mu=kp.mu, threads=args.threads)
        relax = 1.0 / result.spec.decay_rate
        traj = crn_integrate(result.spec, TRAJECTORY_SPAN * relax, TRAJECTORY_STEP * relax)
        data = {"t": traj.times}
        for i in range(traj.n_Y.shape[1]):
            data["n_Y{}".format(i + 1)] = traj.n_Y[:, i]
        postprocess.write_table(pd.DataFrame(data), args.trajectory)
    return table


def cmd_optimize_nu(args, config):
    mix = config.mixture_model()
    opt = optimize_nu(mix, config.monte_carlo.N, method=args.method, kind=args.estimator,
                      metric=config.metric)
    return pd.DataFrame([{"estimator": args.estimator, "nu": opt.nu, "objective": opt.objective,
                          "method": opt.method, "fallback": opt.fallback}],
                        columns=["estimator", "nu", "objective", "method", "fallback"])


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "crlb": cmd_crlb,
    "sweep": cmd_sweep,
    "kpr": cmd_kpr,
    "crn": cmd_crn,
    "optimize-nu": cmd_optimize_nu,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging("DEBUG" if args.verbose else "WARNING" if args.quiet else "INFO")
    try:
        config = _config(args)
        table = COMMANDS[args.command](args, config)
        postprocess.write_table(table, args.out)
    except (LigandSenseError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
