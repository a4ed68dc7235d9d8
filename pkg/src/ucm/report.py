"""Report rendering: figures plus delimited output next to the JSON reports.

matplotlib is imported lazily with the Agg backend so plain CLI runs stay fast
and headless environments work.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from ucm.evaluate import EvalReport, round_display
from ucm.stats import StatsReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_timing_boxplot(
    manual: Sequence[float], assisted: Sequence[float], path: str | Path
) -> Path:
    """Side-by-side box plot of modeling minutes for the two conditions."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot([list(manual), list(assisted)], tick_labels=["Manual", "LLM-based"])
    ax.set_ylabel("Time (minutes)")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_metrics_chart(report: EvalReport, path: str | Path) -> Path:
    """Grouped bars for precision/recall/F1 of actors and use cases."""
    plt = _pyplot()
    labels = ["precision", "recall", "f1"]
    actor_values = [
        report.actor_metrics.precision,
        report.actor_metrics.recall,
        report.actor_metrics.f1,
    ]
    usecase_values = [
        report.usecase_metrics.precision,
        report.usecase_metrics.recall,
        report.usecase_metrics.f1,
    ]
    fig, ax = plt.subplots(figsize=(5, 4))
    x = range(len(labels))
    width = 0.35
    ax.bar(
        [i - width / 2 for i in x],
        [v if v is not None else 0.0 for v in actor_values],
        width,
        label="actors",
    )
    ax.bar(
        [i + width / 2 for i in x],
        [v if v is not None else 0.0 for v in usecase_values],
        width,
        label="use cases",
    )
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_stats_report(
    report: StatsReport,
    manual: Sequence[float],
    assisted: Sequence[float],
    out_dir: str | Path,
) -> list[Path]:
    """stats.json + stats.csv + timing_boxplot.png under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out / "stats.json"
    json_path.write_text(report.to_json(), encoding="utf-8")
    written.append(json_path)

    csv_path = out / "stats.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "value"])
        for key, value in report.to_dict().items():
            writer.writerow([key, value])
    written.append(csv_path)

    written.append(save_timing_boxplot(manual, assisted, out / "timing_boxplot.png"))
    return written


def write_eval_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """eval.json + eval.csv + metrics.png under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out / "eval.json"
    json_path.write_text(report.to_json(), encoding="utf-8")
    written.append(json_path)

    csv_path = out / "eval.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", "tp", "fp", "fn", "precision", "recall", "f1"])
        for label, metrics in (
            ("actors", report.actor_metrics),
            ("use_cases", report.usecase_metrics),
        ):
            writer.writerow(
                [
                    label,
                    metrics.tp,
                    metrics.fp,
                    metrics.fn,
                    "" if metrics.precision is None else round_display(metrics.precision),
                    "" if metrics.recall is None else round_display(metrics.recall),
                    "" if metrics.f1 is None else round_display(metrics.f1),
                ]
            )
    written.append(csv_path)

    written.append(save_metrics_chart(report, out / "metrics.png"))
    return written
