"""PNG figures for run directories (Agg backend, no display needed)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_profiles(path, t, series, title="", ylabel="", styles=None):
    """One line per entry of ``series`` against ``t``."""
    styles = styles or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for name, y in series.items():
            ax.plot(t, y, styles.get(name, "-"), label=name)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        return _save(fig, path)


def plot_trajectories(path, t, numeric, exact, label="Y"):
    """Sample paths: numeric in red, exact in black."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for k in range(numeric.shape[0]):
            ax.plot(t, exact[k], "k-", lw=0.9, label="exact" if k == 0 else None)
            ax.plot(t, numeric[k], "r--", lw=0.9, label="numerical" if k == 0 else None)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
        ax.legend(loc="best")
        return _save(fig, path)


def plot_relative_errors(path, t, errors, limits=None):
    limits = limits or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for name, e in errors.items():
            line, = ax.plot(t, 100.0 * np.abs(e), label=name)
            if name in limits:
                ax.axhline(100.0 * limits[name], color=line.get_color(), ls=":", lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("relative error [%]")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_factor_sweep(path, F, columns):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for name, v in columns.items():
            v = np.asarray(v, float)
            ok = v > 0
            ax.semilogy(np.asarray(F)[ok], v[ok], "o-", label=name)
        ax.set_xlabel("retained factors F")
        ax.legend(loc="best")
        return _save(fig, path)
