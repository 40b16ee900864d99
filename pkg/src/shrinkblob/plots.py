"""Matplotlib figures for campaign reports, single runs and square scenarios."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import EDGES  # noqa: E402

plt.rcParams.update({
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
})


def _save(fig, path):
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)
    return path


def plot_campaign(report, path):
    """Best/mean/worst ratio per dataset, sorted by mean (cf. the benchmark bar chart)."""
    per = report.per_dataset()
    fig, ax = plt.subplots(figsize=(7, 3))
    if per:
        items = sorted(per.items(), key=lambda kv: kv[1][1])
        x = np.arange(len(items))
        best = np.array([v[0] for _, v in items])
        mean = np.array([v[1] for _, v in items])
        worst = np.array([v[2] for _, v in items])
        ax.vlines(x, best, worst, color="0.6", lw=3)
        ax.plot(x, mean, "o", color="k", ms=3, label="mean")
        ax.plot(x, best, "_", color="tab:green", ms=8, label="best")
        ax.plot(x, worst, "_", color="tab:red", ms=8, label="worst")
        ax.set_xticks(x)
        ax.set_xticklabels([k.replace("bench_", "") for k, _ in items], rotation=90)
        b, m, w = report.aggregates()
        ax.set_title(f"best {b:.3f} / mean {m:.3f} / worst {w:.3f}   "
                     f"completed {len(report.completed)}/{len(report.rows)}")
        ax.legend(loc="upper left", frameon=False)
    ax.axhline(1.0, color="0.3", lw=0.5, ls=":")
    ax.set_ylabel("tour length / optimum")
    ax.set_xlabel("dataset")
    return _save(fig, path)


def plot_run(dataset, occupied, tour=None, optimum=None, path="run.png", title=""):
    """Final blob with the read tour (solid) and the reference tour (dashed)."""
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(occupied, cmap="Greys", interpolation="nearest", alpha=0.5)
    xy = dataset.xy
    for t, style, lab in ((optimum, "--", "optimum"), (tour, "-", "blob")):
        if t is None:
            continue
        o = list(t.order) + [t.order[0]]
        ax.plot(xy[o, 0], xy[o, 1], style, lw=1, label=f"{lab} {t.length:.1f}")
    ax.plot(xy[:, 0], xy[:, 1], "o", ms=3, color="tab:red")
    for lab, (x, y) in zip(dataset.labels, xy):
        ax.annotate(lab, (x, y), xytext=(3, 3), textcoords="offset points", fontsize=6)
    ax.set_title(title)
    ax.set_axis_off()
    if tour is not None or optimum is not None:
        ax.legend(loc="lower right", frameon=False)
    return _save(fig, path)


def plot_square(results, path, title=""):
    """Concavity depth per edge against step, one thin line per seed."""
    fig, axs = plt.subplots(1, 4, figsize=(9, 2.4), sharey=True)
    for ax, e in zip(axs, EDGES):
        for r in results:
            t = [s for s, _ in r.samples]
            d = [dep[e] for _, dep in r.samples]
            ax.plot(t, d, lw=0.8, marker=".", ms=3, label=f"seed {r.seed}")
        ax.set_title(e)
        ax.set_xlabel("step")
    axs[0].set_ylabel("depth (cells)")
    axs[-1].legend(frameon=False)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_insertion(dataset, trace, path):
    """Cities numbered by the order in which they were uncovered."""
    fig, ax = plt.subplots(figsize=(4, 4))
    xy = dataset.xy
    ax.plot(xy[:, 0], xy[:, 1], "o", ms=3, color="0.6")
    for rank, (step, k) in enumerate(trace, 1):
        ax.annotate(f"{rank}:{dataset.labels[k]}", xy[k], fontsize=6)
    ax.invert_yaxis()
    ax.set_aspect("equal")
    ax.set_title("uncover order")
    return _save(fig, path)
