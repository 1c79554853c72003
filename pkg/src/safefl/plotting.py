"""Matplotlib figures written next to the CSV outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.frameon": False,
}

_TRAINING_PANELS = (
    ("total_J", "Avg. total energy (J)"),
    ("comp_J", "Avg. computation energy (J)"),
    ("tx_J", "Avg. transmission energy (J)"),
    ("energy_per_worker_J", "Avg. energy per worker (J)"),
    ("violations_per_worker", "Avg. violations per worker"),
    ("reward", "Avg. reward"),
)


def _save(fig, path):
    path = Path(path)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)


def plot_training(windows: list[dict], path, title: str | None = None) -> None:
    """Six-panel training curve from window-averaged episode metrics."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 3, figsize=(11, 6))
        x = [w["episode_end"] + 1 for w in windows]
        for ax, (key, label) in zip(axes.flat, _TRAINING_PANELS):
            ax.plot(x, [w.get(key, float("nan")) for w in windows], marker="o", ms=3)
            ax.set_xlabel("RL episode")
            ax.set_ylabel(label)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def plot_comparison(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        names = [r["scheduler"].upper() for r in rows]
        ax1.bar(names, [float(r["total_J_mean"]) for r in rows],
                yerr=[float(r["total_J_std"]) for r in rows], capsize=4, color="tab:green")
        ax1.set_ylabel("Total energy per FL process (J)")
        ax2.bar(names, [float(r["mean_round_s_mean"]) for r in rows],
                yerr=[float(r["mean_round_s_std"]) for r in rows], capsize=4, color="tab:blue")
        ax2.set_ylabel("Training time per global iteration (s)")
        fig.tight_layout()
        _save(fig, path)


def plot_sync(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
        hs = sorted({float(r["h_s"]) for r in rows}, reverse=True)
        width = 0.38
        for j, mode in enumerate(("worker", "coordinator")):
            sel = {float(r["h_s"]): r for r in rows if r["mode"] == mode}
            xs = [i + (j - 0.5) * width for i in range(len(hs))]
            for ax, key in zip(axes, ("wasted_J", "unnec_accesses", "unnec_occ_s")):
                ax.bar(xs, [float(sel[h][f"{key}_mean"]) for h in hs], width,
                       yerr=[float(sel[h][f"{key}_std"]) for h in hs], capsize=3, label=f"{mode} side")
        for ax, label in zip(axes, ("Wasted energy (J)", "Unnecessary channel accesses",
                                    "Unnecessary occupation time (s)")):
            ax.set_xticks(range(len(hs)), [f"{h:g} s" for h in hs])
            ax.set_xlabel("Time threshold H")
            ax.set_ylabel(label)
        axes[0].legend()
        fig.tight_layout()
        _save(fig, path)
