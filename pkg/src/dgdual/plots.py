"""Figure rendering for convergence reports.

All figures are written to files; the Agg backend is forced so rendering
works without a display.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update(
    {
        "figure.figsize": (6.0, 4.5),
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.fontsize": 8,
    }
)


def _combo_label(row):
    lab = f"gamma={row.gamma:g}, c_alpha={row.c_alpha:g}"
    if row.r != 2.0:
        lab += f", r={row.r:g}"
    return lab


def _group_rows(rows):
    groups = {}
    for row in rows:
        key = (row.gamma, row.c_alpha, row.r)
        groups.setdefault(key, []).append(row)
    return groups


def _slope_guides(ax, ns, emax, orders):
    n = np.array([min(ns), max(ns)], dtype=float)
    for order in orders:
        # error versus element count N with h ~ N^(-1/2)
        ref = emax * (n / n[0]) ** (-order / 2.0)
        ax.loglog(n, ref, "k--", linewidth=0.7, alpha=0.5)
        ax.annotate(
            f"$N^{{-{order:g}/2}}$",
            (n[-1], ref[-1]),
            textcoords="offset points",
            xytext=(2, -4),
            fontsize=7,
            alpha=0.7,
        )


def convergence_figure(rows, path, title=None, orders=(0.5, 1.0)):
    """Log-log error versus element count, one line per parameter combination."""
    fig, ax = plt.subplots()
    plotted = []
    for key in sorted(_group_rows(rows)):
        group = sorted(_group_rows(rows)[key], key=lambda r: r.level)
        ns = [r.n_elements for r in group if math.isfinite(r.error)]
        es = [r.error for r in group if math.isfinite(r.error)]
        if not ns:
            continue
        ax.loglog(ns, es, "o-", markersize=3, label=_combo_label(group[0]))
        plotted.append((ns, es))
    if plotted:
        all_ns = [n for ns, _ in plotted for n in ns]
        emax = max(e[0] for _, e in plotted)
        _slope_guides(ax, all_ns, emax, orders)
    ax.set_xlabel("number of elements $N$")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def gap_figure(rows, path, title=None):
    """Log-log duality gap versus element count where certificates exist."""
    fig, ax = plt.subplots()
    any_line = False
    for key in sorted(_group_rows(rows)):
        group = sorted(_group_rows(rows)[key], key=lambda r: r.level)
        ns = [r.n_elements for r in group if math.isfinite(r.gap) and r.gap > 0]
        gs = [r.gap for r in group if math.isfinite(r.gap) and r.gap > 0]
        if not ns:
            continue
        ax.loglog(ns, gs, "s-", markersize=3, label=_combo_label(group[0]))
        any_line = True
    ax.set_xlabel("number of elements $N$")
    ax.set_ylabel("duality gap")
    if title:
        ax.set_title(title)
    if any_line:
        ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def solution_figure(u, path, title=None):
    """Flat-shaded plot of the elementwise means of a broken field."""
    mesh = u.mesh
    fig, ax = plt.subplots()
    tp = ax.tripcolor(
        mesh.vertices[:, 0],
        mesh.vertices[:, 1],
        mesh.triangles,
        facecolors=u.values,
        cmap="viridis",
    )
    fig.colorbar(tp, ax=ax)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
