"""Grids of runs, one isolated training per (cell, seed)."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..stats import pearson
from .config import ConfigError, ExperimentConfig
from .data import SyntheticSpec, gen_synthetic
from .metrics import json_safe, write_csv
from .training import NumericalAbort, train

__all__ = ["Cell", "SweepResult", "TREATMENTS", "classification_grid", "sweep", "SWEEP_COLUMNS"]

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

SWEEP_COLUMNS = ("cell", "treatment", "fusion", "seed", "status", "test_top1", "test_mAP",
                 "ratio_pearson", "seconds", "error")

# treatment -> overrides; "df" marks the learnable-zeta swap for the decoupling-free row
TREATMENTS = {
    "baseline": {},
    "+simam2": {"simam2": True},
    "+ogm-ge": {"scheme": "decoupled"},
    "+ogm-ge+simam2": {"scheme": "decoupled", "simam2": True},
    "+decoupling-free+simam2": {"scheme": "decoupling-free", "simam2": True},
}

_LEARNABLE = {"summation-fixed": "summation-learnable", "film": "film-zeta"}


@dataclass(frozen=True)
class Cell:
    label: str
    overrides: dict
    treatment: str = ""


@dataclass
class SweepResult:
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def table(self) -> str:
        lines = [f"{'cell':44s} {'n':>2s} {'top1 mean±std':>16s} {'mAP mean':>9s}"]
        for label, agg in self.summary.items():
            if agg["n"] == 0:
                lines.append(f"{label:44s} {0:2d} {'failed':>16s} {'':>9s}")
                continue
            lines.append(f"{label:44s} {agg['n']:2d} {agg['top1_mean'] * 100:8.2f}±{agg['top1_std'] * 100:5.2f}  "
                         f"{agg['mAP_mean'] * 100:8.2f}")
        return "\n".join(lines)


def classification_grid() -> list[Cell]:
    """Treatment x fusion layout of the classification comparison.

    Learnable zeta is used only in the decoupling-free row. Cells that violate
    a combination rule (decoupled ratios for FiLM, decoupling-free ratios for
    concatenation) are kept so the sweep reports them as failed.
    """
    cells = []
    for treatment, overrides in TREATMENTS.items():
        for fusion in ("concatenation", "summation-fixed", "film"):
            fused = fusion
            if treatment == "+decoupling-free+simam2":
                fused = _LEARNABLE.get(fusion, fusion)
            cells.append(Cell(f"{treatment} / {fused}", {**overrides, "fusion": fused}, treatment))
    return cells


def _run_cell(args) -> dict:
    cell, base, spec, seed, out_dir = args
    row = {"cell": cell.label, "treatment": cell.treatment, "fusion": cell.overrides.get("fusion", base.fusion),
           "seed": seed, "status": "ok", "test_top1": math.nan, "test_mAP": math.nan,
           "ratio_pearson": math.nan, "seconds": 0.0, "error": ""}
    try:
        cfg = base.with_overrides(**cell.overrides, seed=seed)
        cell_spec = SyntheticSpec(**{**spec.to_dict(), "seed": seed})
        run_dir = None
        if out_dir is not None:
            run_dir = Path(out_dir) / _slug(cell.label) / f"seed{seed}"
        result = train(cfg, cell_spec, run_dir, data=gen_synthetic(cell_spec))
    except (ConfigError, ValueError) as exc:
        row.update(status="invalid", error=str(exc))
        return row
    except (NumericalAbort, FloatingPointError, ArithmeticError) as exc:
        row.update(status="numerical-abort", error=str(exc))
        return row
    free = np.array([t["rho_v_free"] for t in result.ratio_trace])
    dec = np.array([t["rho_v_decoupled"] for t in result.ratio_trace])
    if free.size >= 2 and np.all(np.isfinite(free)) and np.all(np.isfinite(dec)):
        row["ratio_pearson"] = pearson(free, dec)
    row.update(test_top1=result.test.top1_accuracy, test_mAP=result.test.mAP, seconds=result.seconds)
    return row


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label).strip("_")


def _aggregate(rows: list[dict], cells: list[Cell]) -> dict:
    summary = {}
    for cell in cells:
        ok = [r for r in rows if r["cell"] == cell.label and r["status"] == "ok"]
        top1 = np.array([r["test_top1"] for r in ok])
        maps = np.array([r["test_mAP"] for r in ok])
        corr = [r["ratio_pearson"] for r in ok if math.isfinite(r["ratio_pearson"])]
        ddof = 1 if len(ok) > 1 else 0
        summary[cell.label] = {
            "n": len(ok),
            "failed": sum(1 for r in rows if r["cell"] == cell.label and r["status"] != "ok"),
            "top1_mean": float(top1.mean()) if ok else math.nan,
            "top1_std": float(top1.std(ddof=ddof)) if ok else math.nan,
            "mAP_mean": float(maps.mean()) if ok else math.nan,
            "mAP_std": float(maps.std(ddof=ddof)) if ok else math.nan,
            "ratio_pearson": corr,
        }
    return summary


def sweep(cells: list[Cell], base: ExperimentConfig | None = None, spec: SyntheticSpec | None = None,
          seeds=DEFAULT_SEEDS, out_dir: str | Path | None = None, jobs: int = 1) -> SweepResult:
    """Train every (cell, seed); a failing cell is recorded, never raised."""
    base = ExperimentConfig() if base is None else base
    spec = SyntheticSpec() if spec is None else spec
    jobs_args = [(cell, base, spec, seed, out_dir) for cell in cells for seed in seeds]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, jobs_args))
    else:
        rows = [_run_cell(a) for a in jobs_args]
    result = SweepResult(rows, _aggregate(rows, cells))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
        (out / "sweep_summary.json").write_text(
            json.dumps(json_safe({"experiment": base.to_dict(), "synthetic": spec.to_dict(),
                                  "seeds": list(seeds), "cells": result.summary}), indent=2),
            encoding="utf-8")
    return result
