"""Classification metrics and the per-epoch metrics CSV."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = ["MetricsRow", "METRICS_COLUMNS", "top1_accuracy", "average_precision",
           "mean_average_precision", "write_csv", "read_csv", "json_safe"]


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    split: str
    top1_accuracy: float
    mAP: float
    loss: float
    rho_v: float = math.nan
    k_v: float = math.nan
    r: float = math.nan


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))


def top1_accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ValueError(f"scores {scores.shape} do not match {labels.shape[0]} labels")
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def average_precision(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mean of precision@rank over the ranks of the positives (descending score, stable ties)."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    hits = np.asarray(positive, dtype=bool)[order]
    n_pos = int(hits.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.arange(1, n_pos + 1) / ranks
    return float(precision_at_hits.mean())


def mean_average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """One-vs-rest AP averaged over the categories that occur in ``labels``."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    aps = [average_precision(scores[:, c], labels == c)
           for c in range(scores.shape[1]) if np.any(labels == c)]
    return float(np.mean(aps))


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, rows: Iterable, columns: Iterable[str]) -> None:
    columns = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            data = row if isinstance(row, dict) else asdict(row)
            writer.writerow([_fmt(data[c]) for c in columns])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def json_safe(obj):
    """Replace NaN/Inf floats with None so the result is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
