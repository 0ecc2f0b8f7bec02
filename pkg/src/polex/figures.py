"""Rendering of log-log convergence figures from sweep results."""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")  # file output only; never require a display
import matplotlib.pyplot as plt
import numpy as np

from .analysis import SlopeFit, SweepSeries

__all__ = ["render_sweep_figure"]


def render_sweep_figure(series: SweepSeries, fit: Optional[SlopeFit], out_path: str,
                        title: str = "", ylabel: str = "error",
                        reference: Optional[np.ndarray] = None,
                        reference_label: str = "closed form") -> str:
    """Render one error-vs-grid-size curve with its 95% band and slope fit.

    The shaded band is value +/- 1.96 standard errors per grid size; the
    dashed line is the fitted power law when a fit is available.
    """
    ns = series.ns
    vals = series.values
    sems = series.std_errors
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(ns, vals, "o-", color="tab:blue", label=series.label or "measured")
    lo = np.maximum(vals - 1.96 * sems, 1e-300)
    hi = vals + 1.96 * sems
    ax.fill_between(ns, lo, hi, color="tab:blue", alpha=0.25, linewidth=0)
    if fit is not None:
        fitted = np.exp(fit.intercept) * ns ** fit.slope
        ax.plot(ns, fitted, "--", color="tab:orange",
                label=f"slope {fit.slope:.2f} [{fit.ci_low:.2f}, {fit.ci_high:.2f}]")
    if reference is not None:
        ax.plot(ns, reference, ":", color="tab:green", label=reference_label)
    positive = vals[vals > 0]
    if positive.size >= 2 and positive.max() / positive.min() > 1.5:
        ax.set_yscale("log")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid points n")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
