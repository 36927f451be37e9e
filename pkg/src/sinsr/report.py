"""Run artifacts: JSON-lines logs, CSV summaries, and rendered figures.

Every figure goes to a file next to the delimited output it illustrates
(headless backend; nothing opens a window).  Writers take plain dicts
or the report/summary types and never mutate them.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .distill import TrainReport
from .errors import IoError
from .metrics import EvalSummary

_DPI = 120


def write_jsonl(records, path) -> None:
    """One JSON object per line; records is an iterable of dicts."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def write_csv(rows: list[dict], path) -> None:
    """Header from the first row's keys; all rows must share them."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            if not rows:
                return
            keys = list(rows[0].keys())
            f.write(",".join(keys) + "\n")
            for row in rows:
                f.write(",".join(_csv_cell(row[k]) for k in keys) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, bool):
        return "true" if v else "false"
    s = str(v)
    if "," in s or '"' in s or "\n" in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def train_records_jsonl(report: TrainReport, path) -> None:
    write_jsonl(
        ({"iteration": r.iteration, "total": r.total, **r.losses,
          "wall_ms": r.wall_ms} for r in report.records), path)


def train_summary_csv(report: TrainReport, path, window: int = 100) -> None:
    rows = [{
        "iterations": len(report.records),
        "first_total": report.records[0].total,
        "final_total_smoothed": report.final_total(window),
        "window": min(window, len(report.records)),
        "mean_wall_ms": float(np.mean([r.wall_ms for r in report.records])),
    }]
    for e in report.evals:
        rows[0][f"eval_psnr_at_{e.iteration}"] = e.psnr
        rows[0][f"eval_ssim_at_{e.iteration}"] = e.ssim
    write_csv(rows, path)


def eval_summary_rows(summary: EvalSummary) -> list[dict]:
    return [{
        "method": r.name, "steps": r.steps,
        "psnr_mean": r.psnr_mean, "psnr_std": r.psnr_std,
        "ssim_mean": r.ssim_mean, "ssim_std": r.ssim_std,
        "mse_mean": r.mse_mean, "calls_per_image": r.calls_per_image,
        "ms_per_image": r.ms_per_image, "diversity": r.diversity,
    } for r in summary.rows]


def eval_summary_csv(summary: EvalSummary, path) -> None:
    write_csv(eval_summary_rows(summary), path)


def eval_summary_json(summary: EvalSummary, path) -> None:
    payload = {
        "n_examples": summary.n_examples,
        "rows": eval_summary_rows(summary),
        "extras": summary.extras,
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def format_eval_table(summary: EvalSummary) -> str:
    head = (f"{'method':<12} {'steps':>5} {'psnr':>12} {'ssim':>14} "
            f"{'mse':>10} {'calls':>5} {'ms/img':>8} {'divers':>7}")
    lines = [head, "-" * len(head)]
    for r in summary.rows:
        lines.append(
            f"{r.name:<12} {r.steps:>5} "
            f"{r.psnr_mean:>7.2f}±{r.psnr_std:<4.2f} "
            f"{r.ssim_mean:>8.4f}±{r.ssim_std:<5.4f} "
            f"{r.mse_mean:>10.3e} {r.calls_per_image:>5} "
            f"{r.ms_per_image:>8.2f} {r.diversity:>7.4f}")
    return "\n".join(lines)


def fig_train_curve(report: TrainReport, path, title: str) -> None:
    """Loss trajectory (log scale) with a smoothed overlay; held-out
    quality on a second panel when the report carries eval records."""
    totals = np.array([r.total for r in report.records])
    iters = np.array([r.iteration for r in report.records])
    panels = 2 if report.evals else 1
    fig, axes = plt.subplots(1, panels, figsize=(5.5 * panels, 4.0))
    ax = axes[0] if panels == 2 else axes
    ax.plot(iters, totals, lw=0.6, alpha=0.45, label="per-iteration")
    win = max(1, min(100, len(totals) // 5))
    if win > 1:
        kernel = np.ones(win) / win
        smooth = np.convolve(totals, kernel, mode="valid")
        ax.plot(iters[win - 1:], smooth, lw=1.8, label=f"mean over {win}")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.set_title(title)
    ax.legend(frameon=False)
    if panels == 2:
        ax2 = axes[1]
        ax2.plot([e.iteration for e in report.evals],
                 [e.psnr for e in report.evals], marker="o")
        ax2.set_xlabel("iteration")
        ax2.set_ylabel("held-out PSNR (dB)")
        ax2.set_title("held-out quality")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_method_bars(summary: EvalSummary, path) -> None:
    """PSNR and SSIM per method, with timing in the labels."""
    names = [r.name for r in summary.rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.0))
    xs = np.arange(len(names))
    ax1.bar(xs, [r.psnr_mean for r in summary.rows],
            yerr=[r.psnr_std for r in summary.rows], capsize=3)
    ax1.set_xticks(xs, names, rotation=15)
    ax1.set_ylabel("PSNR (dB)")
    ax1.set_title(f"quality over {summary.n_examples} held-out images")
    ax2.bar(xs, [r.ms_per_image for r in summary.rows], color="#b5651d")
    ax2.set_xticks(xs, names, rotation=15)
    ax2.set_ylabel("ms per image")
    ax2.set_title("wall-clock per image")
    for i, r in enumerate(summary.rows):
        ax2.annotate(f"{r.calls_per_image} calls", (i, r.ms_per_image),
                     ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_image_grid(panels: list[tuple[str, np.ndarray]], path,
                   per_row: int = 4) -> None:
    """Grid of [C,H,W] images in [0,1]; grayscale or RGB by channel count."""
    n = len(panels)
    rows = (n + per_row - 1) // per_row
    fig, axes = plt.subplots(rows, per_row,
                             figsize=(2.4 * per_row, 2.6 * rows),
                             squeeze=False)
    for i in range(rows * per_row):
        ax = axes[i // per_row][i % per_row]
        ax.set_axis_off()
        if i >= n:
            continue
        title, img = panels[i]
        img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
        if img.ndim == 3 and img.shape[0] == 1:
            ax.imshow(img[0], cmap="gray", vmin=0.0, vmax=1.0)
        elif img.ndim == 3:
            ax.imshow(np.transpose(img, (1, 2, 0)))
        else:
            ax.imshow(img, cmap="gray", vmin=0.0, vmax=1.0)
        ax.set_title(title, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_paired_bars(title: str, label_a: str, label_b: str,
                    rows: list[dict], key_a: str, key_b: str, path,
                    ylabel: str, x_key: str = "seed") -> None:
    """Side-by-side bars per group for a paired ablation experiment."""
    groups = [str(r[x_key]) for r in rows]
    xs = np.arange(len(groups))
    width = 0.38
    fig, ax = plt.subplots(figsize=(1.8 + 1.5 * len(groups), 4.0))
    ax.bar(xs - width / 2, [r[key_a] for r in rows], width, label=label_a)
    ax.bar(xs + width / 2, [r[key_b] for r in rows], width, label=label_b)
    ax.set_xticks(xs, [f"{x_key} {g}" for g in groups])
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_scatter_compare(title: str, rows: list[dict], key_x: str,
                        key_y: str, path, label_x: str,
                        label_y: str) -> None:
    """Per-item scatter of two paired scores with the break-even line."""
    xs = np.array([r[key_x] for r in rows], dtype=np.float64)
    ys = np.array([r[key_y] for r in rows], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.scatter(xs, ys, s=18, alpha=0.8)
    lim = (0.0, float(max(xs.max(), ys.max())) * 1.05)
    ax.plot(lim, lim, ls="--", lw=1.0, color="gray")
    ax.set_xlim(lim)
    ax.set_ylim(lim)
    ax.set_xlabel(label_x)
    ax.set_ylabel(label_y)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
