"""Figures written next to the CSV outputs.

Uses the object-oriented matplotlib API (no pyplot state), so figures can be
rendered from worker threads and headless machines.
"""

import io

import numpy as np
from matplotlib.figure import Figure

from .io import atomic_write_bytes

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def _figure(width=4.5, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    if height is None:
        height = width * golden
    fig = Figure(figsize=(width, height), dpi=150, layout="constrained")
    return fig, fig.add_subplot()


def _save(fig, path):
    import matplotlib

    buf = io.BytesIO()
    with matplotlib.rc_context(STYLE):
        fig.savefig(buf, format="png")
    atomic_write_bytes(path, buf.getvalue())


def plot_sweep(sweep, path, xlabel="T", m=2):
    """Spectral radius against the swept parameter, with the unit line."""
    fig, ax = _figure()
    ax.plot(sweep.thetas, sweep.rhos, color="k", lw=1.2)
    ax.axhline(1.0, color="0.5", lw=0.8, ls="--")
    if sweep.threshold is not None:
        ax.axvline(sweep.threshold, color="tab:red", lw=0.8, ls=":")
        ax.annotate(f"{xlabel}* = {sweep.threshold:.4f}", (sweep.threshold, 1.0),
                    textcoords="offset points", xytext=(4, -12), fontsize=8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(f"spectral radius, m = {m}")
    ax.set_xlim(sweep.thetas[0], sweep.thetas[-1])
    _save(fig, path)


def plot_paths(summary, path, m=2, n_show=20):
    """Sample paths of |x(t)|^m on a log axis, with the ensemble mean."""
    fig, ax = _figure()
    for values in summary.paths[:n_show]:
        ax.semilogy(summary.times, values, color="0.6", lw=0.6)
    ax.semilogy(summary.times, summary.mean, color="k", lw=1.4,
                label=f"mean of {summary.n_paths} paths")
    ax.set_xlabel("t")
    ax.set_ylabel(f"|x(t)|^{m}")
    ax.set_xlim(summary.times[0], summary.times[-1])
    ax.legend(loc="best", frameon=False)
    _save(fig, path)
