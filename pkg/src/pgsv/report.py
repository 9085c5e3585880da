"""Report artifacts: CSV tables, gnuplot data files, and matplotlib figures."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import RD_CSV_COLUMNS


def write_rd_csv(path, rows_by_method: dict):
    """One CSV over all methods, stable column order plus a method column."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(RD_CSV_COLUMNS) + ["method"])
        for method in sorted(rows_by_method):
            for r in rows_by_method[method]:
                writer.writerow([r.budget, r.level, r.bytes,
                                 f"{r.psnr_db:.6f}", f"{r.ms_ssim:.6f}",
                                 r.frames, method])


def write_gnuplot_dat(directory, rows_by_method: dict):
    """One whitespace-separated .dat per method (gnuplot `using` friendly)."""
    paths = []
    for method in sorted(rows_by_method):
        path = os.path.join(directory, f"rd_{method}.dat")
        with open(path, "w") as f:
            f.write("# budget level bytes psnr_db ms_ssim frames\n")
            for r in rows_by_method[method]:
                f.write(f"{r.budget} {r.level} {r.bytes} "
                        f"{r.psnr_db:.6f} {r.ms_ssim:.6f} {r.frames}\n")
        paths.append(path)
    return paths


def plot_rd_curves(path, rows_by_method: dict, title: str = "Rate-distortion"):
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for method in sorted(rows_by_method):
        rows = rows_by_method[method]
        levels = sorted({r.level for r in rows})
        for level in levels:
            pts = sorted((r.bytes, r.psnr_db) for r in rows if r.level == level)
            if not pts:
                continue
            ax.plot([p[0] / 1024.0 for p in pts], [p[1] for p in pts],
                    marker="o", label=f"{method} L{level}")
    ax.set_xlabel("stream size (KiB)")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_level_quality(path, rows, title: str = "Quality by level"):
    """Per-level PSNR / MS-SSIM bars for a single evaluated stream."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
    levels = [r.level for r in rows]
    ax1.bar(levels, [r.psnr_db for r in rows], color="#4878d0")
    ax1.set_xlabel("level")
    ax1.set_ylabel("PSNR (dB)")
    ax1.set_xticks(levels)
    ax2.bar(levels, [r.ms_ssim for r in rows], color="#ee854a")
    ax2.set_xlabel("level")
    ax2.set_ylabel("MS-SSIM")
    ax2.set_xticks(levels)
    ax2.set_ylim(0.0, 1.0)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(path, reports, title: str = "Training loss"):
    """Joint-loss trajectories for frames trained with loss collection on."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    plotted = False
    for rep in reports:
        if rep.losses:
            ax.semilogy(rep.losses, lw=0.8,
                        label=f"frame {rep.frame_index} ({rep.frame_kind})")
            plotted = True
    if not plotted:
        ax.text(0.5, 0.5, "no per-iteration losses recorded",
                ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("iteration")
    ax.set_ylabel("joint loss")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if plotted:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
