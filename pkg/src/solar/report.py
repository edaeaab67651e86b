"""Evaluation report rendering: delimited rows, JSON, and figures.

``write_report`` produces the CSV named on the command line plus a JSON
twin and two PNG figures alongside it: predicted-vs-gold with the
tolerance band, and outcome counts by failure classification.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import EvalReport

CSV_COLUMNS = ["case_id", "predicted", "gold", "passed", "classification", "error", "wall_seconds"]


def report_doc(report: EvalReport) -> dict:
    return {
        "backend": report.backend,
        "tbox_version": report.tbox_version,
        "accuracy": report.accuracy,
        "cases": [
            {
                "case_id": r.case_id,
                "predicted": str(r.predicted) if r.predicted is not None else None,
                "gold": str(r.gold),
                "passed": r.passed,
                "classification": r.classification,
                "error": r.error,
                "wall_seconds": round(r.wall_seconds, 6),
            }
            for r in report.rows
        ],
    }


def write_report(report: EvalReport, csv_path) -> list[Path]:
    """Write CSV, JSON, and figures; returns the paths written."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    written = [csv_path]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [
                    r.case_id,
                    "" if r.predicted is None else str(r.predicted),
                    str(r.gold),
                    "pass" if r.passed else "fail",
                    r.classification or "",
                    r.error or "",
                    f"{r.wall_seconds:.6f}",
                ]
            )

    json_path = csv_path.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_doc(report), fh, indent=2)
        fh.write("\n")
    written.append(json_path)

    written.append(_accuracy_figure(report, csv_path.with_name(csv_path.stem + "_accuracy.png")))
    written.append(_outcome_figure(report, csv_path.with_name(csv_path.stem + "_outcomes.png")))
    return written


def _accuracy_figure(report: EvalReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 6))
    golds = [float(r.gold) for r in report.rows]
    upper = max(golds + [1.0]) * 1.15
    band = [0.0, upper]
    ax.fill_between(band, [b * 0.9 for b in band], [b * 1.1 for b in band], alpha=0.2, label="10% tolerance")
    ax.plot(band, band, linestyle="--", linewidth=1)
    for passed, marker, label in ((True, "o", "pass"), (False, "x", "fail")):
        xs = [float(r.gold) for r in report.rows if r.passed is passed and r.predicted is not None]
        ys = [float(r.predicted) for r in report.rows if r.passed is passed and r.predicted is not None]
        if xs:
            ax.scatter(xs, ys, marker=marker, label=label)
    ax.set_xlabel("gold answer ($)")
    ax.set_ylabel("predicted answer ($)")
    ax.set_title(f"Predicted vs gold — accuracy {report.accuracy:.1%} ({report.backend})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _outcome_figure(report: EvalReport, path: Path) -> Path:
    counts: dict[str, int] = {"pass": 0}
    for r in report.rows:
        if r.passed:
            counts["pass"] += 1
        else:
            key = r.classification or "unclassified"
            counts[key] = counts.get(key, 0) + 1
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = list(counts)
    ax.bar(labels, [counts[k] for k in labels])
    ax.set_ylabel("cases")
    ax.set_title("Outcomes by failure classification")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
