"""Text tables, delimited files and figures for evaluation reports."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRIC_COLUMNS = ("mse", "sad", "grad", "conn")

# Published context only; these came from GPU training and human raters.
REFERENCE_MATTING = {"mse": 0.02, "sad": 3.96, "grad": 8.68, "conn": 3.84}
REFERENCE_MOS = (3.58, 0.55)

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
})


def matting_table(evaluation) -> str:
    header = f"{'image_id':<24}" + "".join(f"{c.upper():>12}" for c in METRIC_COLUMNS) + f"{'unknown':>10}"
    lines = [header, "-" * len(header)]
    for image_id, s in evaluation.scores.items():
        lines.append(f"{image_id:<24}" + "".join(f"{getattr(s, c):>12.5f}" for c in METRIC_COLUMNS)
                     + f"{s.unknown_pixel_count:>10d}")
    if evaluation.means is not None:
        lines.append("-" * len(header))
        m = evaluation.means
        lines.append(f"{'mean':<24}" + "".join(f"{getattr(m, c):>12.5f}" for c in METRIC_COLUMNS)
                     + f"{m.unknown_pixel_count:>10d}")
    for image_id, why in evaluation.failures.items():
        lines.append(f"! {image_id}: {why}")
    return "\n".join(lines)


def mos_table(summaries: dict) -> str:
    lines = [f"{'method':<20}{'MOS':>8}{'Std':>8}{'raters':>8}{'scores':>8}"]
    for method, s in summaries.items():
        lines.append(f"{method:<20}{s.mean:>8.3f}{s.stddev:>8.3f}{s.rater_count:>8d}{s.score_count:>8d}")
    return "\n".join(lines)


def write_matting_csv(path, evaluation) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("image_id",) + METRIC_COLUMNS + ("unknown_pixel_count",))
        for image_id, s in evaluation.scores.items():
            w.writerow((image_id,) + tuple(repr(getattr(s, c)) for c in METRIC_COLUMNS) + (s.unknown_pixel_count,))
        if evaluation.means is not None:
            m = evaluation.means
            w.writerow(("mean",) + tuple(repr(getattr(m, c)) for c in METRIC_COLUMNS) + (m.unknown_pixel_count,))


def write_matting_jsonl(path, evaluation) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, s in evaluation.scores.items():
            fh.write(json.dumps({"image_id": image_id, **asdict(s)}) + "\n")
        if evaluation.means is not None:
            fh.write(json.dumps({"image_id": "mean", **asdict(evaluation.means)}) + "\n")
        for image_id, why in evaluation.failures.items():
            fh.write(json.dumps({"image_id": image_id, "error": why}) + "\n")


def write_mos_csv(path, summaries: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "mean", "stddev", "rater_count", "score_count"))
        for method, s in summaries.items():
            w.writerow((method, repr(s.mean), repr(s.stddev), s.rater_count, s.score_count))


def plot_matting(evaluation, path) -> None:
    """One panel per metric: per-image values as a histogram with the corpus mean."""
    fig, axes = plt.subplots(1, 4, figsize=(11, 2.8))
    for ax, col in zip(axes, METRIC_COLUMNS):
        values = [getattr(s, col) for s in evaluation.scores.values()]
        ax.hist(values, bins=min(20, max(1, len(values))), color="0.55", edgecolor="white")
        if evaluation.means is not None:
            ax.axvline(getattr(evaluation.means, col), color="C3", lw=1.2, label="mean")
        ax.set_title(col.upper())
        ax.set_xlabel("error")
    axes[0].set_ylabel("images")
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_mos(summaries: dict, path, reference: bool = True) -> None:
    """Bar chart of MOS per method with one-std error bars."""
    methods = list(summaries)
    means = [summaries[m].mean for m in methods]
    stds = [summaries[m].stddev for m in methods]
    fig, ax = plt.subplots(figsize=(max(3.0, 0.9 * len(methods) + 1.5), 3.0))
    ax.bar(range(len(methods)), means, yerr=stds, capsize=3, color="0.6")
    if reference:
        ax.axhline(REFERENCE_MOS[0], color="C0", ls="--", lw=1, label="published joint model")
        ax.legend(frameon=False, fontsize=8, loc="lower right")
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=30, ha="right")
    ax.set_ylim(1, 5)
    ax.set_ylabel("MOS")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_matting_report(out_dir, evaluation, figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / "matting_scores.csv", "jsonl": out_dir / "matting_scores.jsonl"}
    write_matting_csv(paths["csv"], evaluation)
    write_matting_jsonl(paths["jsonl"], evaluation)
    if figures and evaluation.scores:
        paths["figure"] = out_dir / "matting_scores.png"
        plot_matting(evaluation, paths["figure"])
    return paths


def write_mos_report(out_dir, summaries: dict, figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / "mos.csv", "jsonl": out_dir / "mos.jsonl"}
    write_mos_csv(paths["csv"], summaries)
    with open(paths["jsonl"], "w", encoding="utf-8") as fh:
        for method, s in summaries.items():
            fh.write(json.dumps({"method": method, **asdict(s)}) + "\n")
    if figures:
        paths["figure"] = out_dir / "mos.png"
        plot_mos(summaries, paths["figure"])
    return paths
