"""PNG renderings of the CLI tables (matplotlib, Agg backend, no display)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_mems(c, columns: dict, markers, path):
    """Success probability against concurrence, one line per protocol."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, values in columns.items():
            ax.plot(c, values, label=name)
        for x in markers:
            ax.axvline(x, color="0.5", lw=0.8, ls="--")
        ax.set_xlabel("concurrence")
        ax.set_ylabel("success probability")
        ax.set_xlim(min(c), max(c))
        ax.set_ylim(0, 1.02)
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_cp_plane(purity, conc, prob, admissible, path, title=""):
    """Scatter of admissible CP-plane cells coloured by success probability."""
    purity, conc, prob = map(np.asarray, (purity, conc, prob))
    sel = np.asarray(admissible, dtype=bool)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        sc = ax.scatter(purity[sel], conc[sel], c=prob[sel], s=4, cmap="viridis", vmin=0, vmax=1)
        fig.colorbar(sc, ax=ax, label="success probability")
        ax.set_xlabel("purity")
        ax.set_ylabel("concurrence")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_bins(centers, series: dict, ylabel, path):
    """Per-bin statistics against the bin centre."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, values in series.items():
            ax.plot(centers, values, marker="o", ms=3, label=name)
        ax.set_xlabel("concurrence")
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        return _save(fig, path)


def plot_yield(dists, path):
    """Survivor pmf of every round."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for d in dists:
            ax.step(np.arange(len(d.pmf)), d.pmf, where="mid", label=f"round {d.round}")
        ax.set_xlabel("surviving pairs")
        ax.set_ylabel("probability")
        ax.legend()
        return _save(fig, path)
