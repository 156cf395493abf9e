"""Selection-diagram figures.

One figure per gamma: a panel per coefficient plus a value panel, lambda on a
symmetric-log x axis so the unpenalized point at zero stays visible.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "svg.hashsalt": "relsparse",
    "svg.fonttype": "path",
}


def _col(rows, key):
    return np.array([np.nan if r.get(key) is None else r[key] for r in rows], dtype=float)


def _xaxis(ax, lam):
    positive = lam[lam > 0]
    linthresh = positive.min() if positive.size else 1.0
    ax.set_xscale("symlog", linthresh=linthresh)
    ax.set_xlim(lam.min(), lam.max() if lam.max() > lam.min() else lam.min() + 1)
    if positive.size:
        # whole decades above the linear region, so the zero label stays clear
        lo, hi = np.ceil(np.log10(linthresh)), np.floor(np.log10(positive.max()))
        decades = 10.0 ** np.arange(lo, hi + 1)
        ticks = ([0.0] if lam.min() <= 0 else []) + decades.tolist()
        ax.set_xticks(ticks)
        ax.xaxis.set_minor_locator(plt.NullLocator())
    ax.set_xlabel(r"$\lambda$")


def _band(ax, x, center, se, **kw):
    ok = np.isfinite(center) & np.isfinite(se)
    if ok.any():
        ax.fill_between(x, np.where(ok, center - se, np.nan), np.where(ok, center + se, np.nan), **kw)


def _dotted(ax, x, center, se, color):
    ok = np.isfinite(center) & np.isfinite(se)
    if ok.any():
        for sign in (-1, 1):
            ax.plot(x, np.where(ok, center + sign * se, np.nan), ls=":", lw=1.0, color=color)


def plot_selection_diagram(rows, path, panel_width=2.6, panel_height=2.2):
    """Render the diagram for the rows of a single gamma to ``path``.

    Shaded bands are plus/minus one theoretical SE, dotted lines plus/minus one
    empirical SE, and the dashed horizontal line marks the behavioral
    coefficient. A hatched band shows the baseline SE when present.
    """
    gamma = rows[0]["gamma"]
    ks = sorted({r["k"] for r in rows if r["k"] > 0})
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(ks) + 1, figsize=(panel_width * (len(ks) + 1), panel_height), squeeze=False)
        axes = axes[0]
        for ax, k in zip(axes, ks):
            sub = sorted((r for r in rows if r["k"] == k), key=lambda r: r["lambda"])
            lam, beta = _col(sub, "lambda"), _col(sub, "beta")
            if any(r.get("se_baseline") is not None for r in sub):
                _band(ax, lam, beta, _col(sub, "se_baseline"), facecolor="none", edgecolor="0.6", hatch="///", lw=0, label="baseline SE")
            _band(ax, lam, beta, _col(sub, "se_theoretical"), color="C0", alpha=0.3, lw=0, label="theoretical SE")
            _dotted(ax, lam, beta, _col(sub, "se_empirical"), "C0")
            ax.plot(lam, beta, color="C0", lw=1.4)
            b_k = _col(sub, "b_k")
            if np.isfinite(b_k).any():
                ax.axhline(np.nanmean(b_k), color="k", ls="--", lw=0.8)
            ax.set_title(rf"$\beta_{{{k}}}$")
            _xaxis(ax, lam)
        ax = axes[-1]
        sub = sorted((r for r in rows if r["k"] == 0), key=lambda r: r["lambda"])
        lam, value = _col(sub, "lambda"), _col(sub, "value")
        _band(ax, lam, value, _col(sub, "value_se"), color="C1", alpha=0.3, lw=0)
        _dotted(ax, lam, value, _col(sub, "se_empirical"), "C1")
        ax.plot(lam, value, color="C1", lw=1.4)
        ax.set_title("value")
        _xaxis(ax, lam)
        fig.suptitle(rf"$\gamma = {gamma:g}$")
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
        plt.close(fig)
    return path
