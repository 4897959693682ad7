"""Deterministic matplotlib figures for the experiment drivers.

Every figure uses the Agg backend, a fixed size and dpi, and strips the
library-version metadata from the PNG so reruns with the same inputs
produce byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (6.4, 4.2)
DPI = 120


def _new_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def loglog_fit(xs, ys, slope, intercept, path, title, xlabel, ylabel):
    """Data points with the fitted power law overlaid."""
    fig, ax = _new_axes(title, xlabel, ylabel)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (xs > 0) & (ys > 0)
    ax.loglog(xs[keep], ys[keep], "o", label="measured")
    if slope is not None:
        grid = np.geomspace(xs[keep].min(), xs[keep].max(), 64)
        ax.loglog(grid, np.exp(intercept) * grid ** slope, "-",
                  label="fit, slope %.3f" % slope)
    ax.legend()
    return save(fig, path)


def decay_loglog(js, gaps, slope, intercept, path, title):
    return loglog_fit(js, gaps, slope, intercept, path, title,
                      "mode index j", "correction gap")


def semilogy_steps(steps, values, path, title, ylabel):
    fig, ax = _new_axes(title, "step", ylabel)
    ax.semilogy(steps, values, "o-")
    return save(fig, path)


def series(times, named, path, title, ylabel):
    """One line per named time series over a shared time axis."""
    fig, ax = _new_axes(title, "t", ylabel)
    for name, vals in sorted(named.items()):
        ax.plot(times, vals, label=name)
    ax.legend()
    return save(fig, path)


def defect_bars(names, worsts, tol, path, title):
    """Worst observed defect per check against the pinned tolerance."""
    fig, ax = _new_axes(title, "", "worst defect")
    floor = tol * 1e-6
    vals = [max(w, floor) for w in worsts]
    ax.bar(range(len(names)), vals)
    ax.set_yscale("log")
    ax.axhline(tol, color="red", linestyle="--", label="tolerance")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.legend()
    return save(fig, path)


def ratio_hist(ratios, path, title, xlabel):
    fig, ax = _new_axes(title, xlabel, "count")
    ax.hist(ratios, bins=24)
    ax.axvline(1.0, color="red", linestyle="--", label="bound")
    ax.legend()
    return save(fig, path)


def curve(xs, ys, path, title, xlabel, ylabel):
    fig, ax = _new_axes(title, xlabel, ylabel)
    ax.plot(xs, ys, "o-")
    return save(fig, path)


def pass_strip(records, path, title):
    """Green/red row per named check."""
    fig, ax = plt.subplots(figsize=(FIGSIZE[0], 0.4 * max(4, len(records))))
    ax.set_title(title)
    for row, rec in enumerate(reversed(records)):
        color = "#2a9d44" if rec["passed"] else "#c23b22"
        ax.barh(row, 1.0, color=color)
        ax.text(0.02, row, "%s  %s" % (rec["name"],
                                       "pass" if rec["passed"] else "FAIL"),
                va="center", fontsize=9, color="white")
    ax.set_xlim(0, 1)
    ax.set_yticks([])
    ax.set_xticks([])
    return save(fig, path)
