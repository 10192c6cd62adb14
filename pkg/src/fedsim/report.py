"""CSV and JSON emitters for run metrics, comparisons, gamma probes and partitions."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from fedsim.engine import detect_convergence
from fedsim.gamma import CSV_COLUMNS as GAMMA_COLUMNS
from fedsim.records import RunResult

METRIC_COLUMNS = (
    "round", "strategy", "test_accuracy", "test_loss",
    "bits_up", "bits_down", "participants", "uploads_skipped",
)


def fmt(value) -> str:
    """Six significant digits for reals; blank for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return format(float(value), ".6g")
    return str(value)


def _csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def metric_rows(result: RunResult, label: str) -> list[tuple]:
    return [
        (r.round, label, r.test_accuracy, r.test_loss, r.bits_up, r.bits_down, len(r.participants), r.uploads_skipped)
        for r in result.records
    ]


def metrics_csv(results: list[tuple[str, RunResult]]) -> str:
    rows = []
    for label, result in results:
        rows.extend(metric_rows(result, label))
    return _csv_text(METRIC_COLUMNS, rows)


def rounds_to_target(result: RunResult, target: Optional[float]) -> Optional[int]:
    return detect_convergence(result.records, target)


def summary(result: RunResult, target: Optional[float]) -> dict:
    return {
        "final_accuracy": result.final_accuracy,
        "rounds_run": len(result.records) - 1,
        "target_accuracy": target,
        "rounds_to_target": rounds_to_target(result, target),
        "total_bits_up": result.total_bits_up,
        "total_bits_down": result.total_bits_down,
        "uploads_skipped": sum(r.uploads_skipped for r in result.records),
        "stalled_rounds": sum(1 for r in result.records if r.stalled),
        "config": result.config,
    }


def comparison_table(results: list[tuple[str, RunResult]], target: float) -> str:
    """One row per strategy; the ratio column is baseline rounds-to-target over this strategy's."""
    base_label, base = results[0]
    base_rtt = rounds_to_target(base, target)
    ratio_col = f"rounds_ratio_{base_label}_over_strategy"
    header = ("strategy", "final_accuracy", "rounds_to_target", "target_accuracy",
              "total_bits_up", "total_bits_down", ratio_col)
    rows = []
    for label, r in results:
        rtt = rounds_to_target(r, target)
        ratio = base_rtt / rtt if (base_rtt is not None and rtt) else None
        rows.append((label, r.final_accuracy, rtt, target, r.total_bits_up, r.total_bits_down, ratio))
    return _csv_text(header, rows)


def gamma_csv(rows: list[dict]) -> str:
    return _csv_text(GAMMA_COLUMNS, [[row[c] for c in GAMMA_COLUMNS] for row in rows])


def histogram_csv(histograms: np.ndarray) -> str:
    n_classes = histograms.shape[1]
    header = ["client", *(f"label_{c}" for c in range(n_classes)), "samples", "distinct_labels"]
    rows = [
        [i, *h.tolist(), int(h.sum()), int(np.count_nonzero(h))]
        for i, h in enumerate(histograms)
    ]
    return _csv_text(header, rows)


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_json(path: Path, doc: dict) -> Path:
    return write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
