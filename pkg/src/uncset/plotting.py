"""PNG figures for experiment output: histograms and the feasibility trade-off."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns produce identical files
_META = {"Software": None}
_COLORS = {"nn": "tab:blue", "svc": "tab:orange", "discrete": "tab:green"}
_LABELS = {"nn": "NN", "svc": "Kernel", "discrete": "Discrete"}


def histogram_figure(path, edges, counts_by_method: dict, title: str, xlabel: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5), dpi=100)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    for method, counts in counts_by_method.items():
        ax.bar(centers, counts, width=width, alpha=0.5, color=_COLORS.get(method),
               label=_LABELS.get(method, method))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)


def tradeoff_figure(path, points_by_method: dict, title: str) -> None:
    """``points_by_method[m]`` is a list of ``(quantile, objective, usage)``."""
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    for method, pts in points_by_method.items():
        pts = sorted(pts)
        obj = np.array([p[1] for p in pts])
        use = np.array([p[2] for p in pts])
        ax.plot(obj, use, marker="o", color=_COLORS.get(method), label=_LABELS.get(method, method))
        for q, o, u in pts:
            ax.annotate(f"{q:g}", (o, u), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel("objective sum(x)")
    ax.set_ylabel("90% quantile of c'x")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
