"""
Report figures.

Figures are drawn on a bare :class:`matplotlib.figure.Figure` with the Agg
canvas and written straight to file; no window or global pyplot state is
involved, so the functions are safe in batch runs.
"""

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "uncontrolled": dict(color="0.6", lw=1.0),
    "initial": dict(color="k", lw=1.2),
    "optimized": dict(color="tab:red", lw=1.6, ls="-."),
}
STAGE_COLORS = ["tab:blue", "tab:green", "tab:purple", "tab:orange", "tab:cyan",
                "tab:brown", "tab:pink", "tab:olive"]

RC = {"font.size": 9, "axes.labelsize": 9, "legend.fontsize": 8}


def _figure(size=(6.4, 4.0)):
    fig = Figure(figsize=size, dpi=150)
    FigureCanvasAgg(fig)
    return fig


def _apply_rc(ax):
    ax.tick_params(labelsize=RC["font.size"])
    ax.grid(True, which="both", alpha=0.25, lw=0.5)


def plot_frf(path, curves, stages=(), peaks=None, title=None, normalized=True):
    """
    Compliance magnitude of several designs on a log amplitude axis.

    Parameters
    ----------
    path : str or Path
        Output file; the format follows the suffix.
    curves : sequence of (label, omegas, amplitudes)
    stages : sequence of (label, omegas, amplitudes), optional
        Intermediate homotopy solutions, drawn thin.
    peaks : (omegas, amplitudes), optional
        Controlled peaks of the final design, marked with dots.
    """
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    for i, (label, w, a) in enumerate(stages):
        ax.semilogy(w, a, lw=0.8, color=STAGE_COLORS[i % len(STAGE_COLORS)], alpha=0.8,
                    label=label)
    finite = []
    for label, w, a in curves:
        a = np.asarray(a, dtype=float)
        ax.semilogy(w, a, label=label, **STYLE.get(label, {}))
        if label != "uncontrolled":
            finite.append(a[np.isfinite(a)])
    if peaks is not None:
        ax.plot(peaks[0], peaks[1], "o", ms=3, color="tab:red", label="controlled peaks")
    if finite:
        top = max(x.max() for x in finite if x.size)
        ax.set_ylim(top * 1e-3, top * 5.0)
    ax.set_xlabel(r"$\omega$ [rad/s]")
    ax.set_ylabel("normalized compliance" if normalized else "compliance [m/N]")
    if title:
        ax.set_title(title, fontsize=RC["font.size"])
    ax.legend(loc="best", fontsize=RC["legend.fontsize"], frameon=False)
    _apply_rc(ax)
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)


def plot_trajectory(path, stages):
    """Largest peak amplitude and equal-peak spread after each stage."""
    k = [s.k for s in stages]
    amax = [float(np.max(s.amplitudes)) for s in stages]
    spread = [float((np.max(s.amplitudes) - np.min(s.amplitudes)) / np.max(s.amplitudes))
              for s in stages]
    fig = _figure((6.4, 3.2))
    ax1 = fig.add_subplot(1, 2, 1)
    ax1.plot(k, amax, "o-", color="k", ms=3)
    ax1.set_xlabel("k  (p = 2^(2^k))")
    ax1.set_ylabel("largest peak")
    ax2 = fig.add_subplot(1, 2, 2)
    ax2.semilogy(k, np.maximum(spread, 1e-16), "s-", color="tab:red", ms=3)
    ax2.set_xlabel("k")
    ax2.set_ylabel("(max - min) / max")
    for ax in (ax1, ax2):
        ax.set_xticks(k)
        _apply_rc(ax)
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)
