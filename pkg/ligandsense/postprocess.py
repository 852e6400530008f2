"""Tables and figures produced from experiment results.

Figures are SVG with a fixed hash salt and no date stamp, so the same
data always gives the same bytes.
"""
import logging
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

__all__ = ["write_table", "plot_sweep", "plot_kpr_histogram", "FLOAT_FORMAT"]

FLOAT_FORMAT = "%.10g"
SVG_SALT = "ligandsense"


def write_table(table, out=None):
    """Write a table as CSV to `out`, or to stdout."""
    if out is None or out == "-":
        table.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
        return
    table.to_csv(out, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %d rows to %s", len(table), out)


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("Saved figure to %s", path)


def plot_sweep(table, path, variable=None, log_y=True):
    """Analytic curves, Monte Carlo points and the CRLB of a sweep.

    Parameters
    ----------
    table : :class:`pandas.DataFrame`
        Output of :func:`ligandsense.experiments.sweep_table`.
    path : str
        SVG destination.
    variable : str, optional
        Label of the horizontal axis.
    log_y : bool, optional
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(dict.fromkeys(table["var"]))
    numeric = all(isinstance(v, (int, float, np.integer, np.floating)) for v in labels)
    position = {v: (float(v) if numeric else i) for i, v in enumerate(labels)}
    for name, group in table.groupby("estimator", sort=False):
        x = [position[v] for v in group["var"]]
        line = ax.plot(x, group["analytic"], "-", label="{} (analytic)".format(name))[0]
        if name != "crlb" and np.any(np.isfinite(group["mc"])):
            ax.errorbar(x, group["mc"], yerr=group["mc_se"], fmt="o", ms=3,
                        color=line.get_color(), label="{} (MC)".format(name))
    if not numeric:
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels([str(v) for v in labels])
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(variable or "var")
    ax.set_ylabel("error")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def plot_kpr_histogram(histogram, path):
    """Empirical D-count densities with both Gaussian overlays."""
    substates = sorted(histogram["j"].unique())
    fig, axes = plt.subplots(1, len(substates), figsize=(4 * len(substates), 3.5),
                             squeeze=False)
    for ax, j in zip(axes[0], substates):
        rows = histogram[histogram["j"] == j]
        width = np.diff(rows["count"]).mean() if len(rows) > 1 else 1.0
        ax.bar(rows["count"], rows["empirical"], width=width, alpha=0.5, label="simulated")
        ax.plot(rows["count"], rows["kpr_analytic"], "-", label="proofreading")
        ax.plot(rows["count"], rows["binned_analytic"], "--", label="ideal intervals")
        ax.set_xlabel("$n_{{D_{}}}$".format(j))
    axes[0][0].set_ylabel("density")
    axes[0][0].legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
