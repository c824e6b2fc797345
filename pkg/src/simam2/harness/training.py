"""Training loop, evaluation and run artifacts."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..hgr import soft_hgr
from ..modulation import (
    MODULATION_COLUMNS,
    ModulationRecord,
    Scheme,
    coefficient,
    modulate,
    ratio_decoupled,
    ratio_free,
)
from ..rng import stream
from ..tensor import NonFiniteError, backward, cross_entropy, no_grad
from .checkpoint import Checkpoint, save_checkpoint
from .config import ExperimentConfig, config_hash
from .data import Dataset, SyntheticSpec, Split, gen_synthetic
from .metrics import METRICS_COLUMNS, MetricsRow, json_safe, mean_average_precision, top1_accuracy, write_csv
from .model import BimodalNet

__all__ = ["NumericalAbort", "TrainResult", "fit_model", "evaluate", "evaluate_model", "train",
           "RATIO_COLUMNS"]

log = logging.getLogger(__name__)

RATIO_COLUMNS = ("step", "rho_v_free", "rho_v_decoupled")


class NumericalAbort(RuntimeError):
    """Training produced a non-finite value; ``dump_path`` names the batch dump, if written."""

    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    final: Checkpoint
    metrics: list[MetricsRow]
    modulation: list[ModulationRecord] = field(default_factory=list)
    ratio_trace: list[dict] = field(default_factory=list)
    test: MetricsRow | None = None
    seconds: float = 0.0


def evaluate_model(model: BimodalNet, split: Split, name: str = "eval", epoch: int = -1) -> MetricsRow:
    if split.x_v.shape[1] != model.dims["v"] or split.x_a.shape[1] != model.dims["a"]:
        raise ValueError(f"dataset dims ({split.x_v.shape[1]}, {split.x_a.shape[1]}) do not match "
                         f"model dims ({model.dims['v']}, {model.dims['a']})")
    with no_grad():
        fwd = model.forward(split.x_v, split.x_a, training=False, decouple=False)
        loss = cross_entropy(fwd.logits, split.y).item()
        probs = fwd.logits.softmax(axis=1).data
    r = fwd.r if fwd.r is not None else math.nan
    return MetricsRow(epoch, name, top1_accuracy(probs, split.y), mean_average_precision(probs, split.y),
                      loss, r=r)


def evaluate(checkpoint: Checkpoint, split: Split, name: str = "eval") -> MetricsRow:
    return evaluate_model(checkpoint.build_model(), split, name, checkpoint.epoch)


def _dump_batch(out_dir: Path | None, epoch: int, step: int, batch: Split, idx, reason: str) -> Path | None:
    if out_dir is None:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "nan_dump.json"
    path.write_text(json.dumps({
        "reason": reason, "epoch": epoch, "step": step, "indices": [int(i) for i in idx],
        "x_v": batch.x_v.tolist(), "x_a": batch.x_a.tolist(), "y": batch.y.tolist(),
    }), encoding="utf-8")
    return path


def _modality_ratios(model: BimodalNet, fwd, y) -> tuple[tuple[float, float] | None, tuple[float, float] | None]:
    free = dec = None
    if fwd.zeta is not None:
        rv, ra = ratio_free(fwd.zeta)
        if model.kind.is_film and model.cfg.film_conditioner == "v":
            # zeta weights the modulated (target) modality, here audio
            rv, ra = ra, rv
        free = (rv, ra)
    if fwd.logits_v is not None:
        dec = ratio_decoupled(fwd.logits_v, fwd.logits_a, y)
    return free, dec


def fit_model(cfg: ExperimentConfig, train: Split, val: Split | None, num_categories: int, *,
              out_dir: Path | None = None, hgr_target: float | None = None,
              hgr_weight: float = 1.0) -> TrainResult:
    """Train a :class:`BimodalNet` with SGD + momentum; keeps the best-val checkpoint.

    ``hgr_target`` adds ``hgr_weight * |soft_hgr(f_v, f_a) - hgr_target|`` to the
    loss, pinning the cross-modal correlation of the encoder outputs.
    """
    cfg.validate()
    t0 = time.perf_counter()
    model = BimodalNet(cfg, train.x_v.shape[1], train.x_a.shape[1], num_categories)
    scheme = cfg.scheme_kind
    ge_rng = stream(cfg.seed, "modulation/ge")
    velocity = {name: np.zeros(p.shape) for name, p in model.params.items()}
    metrics: list[MetricsRow] = []
    records: list[ModulationRecord] = []
    trace: list[dict] = []
    best: Checkpoint | None = None
    best_acc = -1.0
    step = 0
    n = len(train)
    end = cfg.epochs if cfg.modulation_end is None else cfg.modulation_end
    for epoch in range(cfg.epochs):
        perm = stream(cfg.seed, f"shuffle/{epoch}").permutation(n)
        rhos, ks, rs = [], [], []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue
            batch = train.take(idx)
            try:
                fwd = model.forward(batch.x_v, batch.x_a, training=True)
                loss = cross_entropy(fwd.logits, batch.y)
                if hgr_target is not None:
                    gap = soft_hgr(fwd.feat_v, fwd.feat_a) - hgr_target
                    loss = loss + gap.abs() * hgr_weight
                backward(loss)
            except NonFiniteError as exc:
                dump = _dump_batch(out_dir, epoch, step, batch, idx, str(exc))
                raise NumericalAbort(f"non-finite value at epoch {epoch}, step {step}: {exc}", dump)
            grads = {name: (p.grad if p.grad is not None else np.zeros(p.shape))
                     for name, p in model.params.items()}
            free, dec = _modality_ratios(model, fwd, batch.y)
            trace.append({"step": step,
                          "rho_v_free": free[0] if free else math.nan,
                          "rho_v_decoupled": dec[0] if dec else math.nan})
            if fwd.r is not None:
                rs.append(fwd.r)
            active = free if scheme is Scheme.DECOUPLING_FREE else dec
            if scheme is not Scheme.NONE and cfg.modulation_start <= epoch < end:
                rho_v, rho_a = active
                k_v, k_a = coefficient(rho_v, cfg.alpha), coefficient(rho_a, cfg.alpha)
                grads, stds = modulate(grads, model.owners, k_v, k_a, cfg.ge_enabled, ge_rng)
                records.append(ModulationRecord(step, scheme.value, rho_v, rho_a, k_v, k_a,
                                                stds["v"], stds["a"]))
                ks.append(k_v)
            shown = active if active is not None else (free or dec)
            if shown is not None:
                rhos.append(shown[0])
            updated = {}
            for name, p in model.params.items():
                velocity[name] = cfg.momentum * velocity[name] + grads[name]
                updated[name] = p.data - cfg.learning_rate * velocity[name]
            model.load_arrays(updated)
            step += 1
        train_row = evaluate_model(model, train, "train", epoch)
        train_row = MetricsRow(epoch, "train", train_row.top1_accuracy, train_row.mAP, train_row.loss,
                               float(np.mean(rhos)) if rhos else math.nan,
                               float(np.mean(ks)) if ks else math.nan,
                               float(np.mean(rs)) if rs else math.nan)
        if not math.isfinite(train_row.loss):
            raise NumericalAbort(f"non-finite training loss at epoch {epoch}")
        metrics.append(train_row)
        if val is not None:
            val_row = evaluate_model(model, val, "val", epoch)
            metrics.append(val_row)
            score = val_row.top1_accuracy
        else:
            score = train_row.top1_accuracy
        if best is None or score > best_acc:
            best_acc = score
            best = Checkpoint.from_model(model, epoch)
        log.debug("epoch %d loss %.4f acc %.3f", epoch, train_row.loss, train_row.top1_accuracy)
    final = Checkpoint.from_model(model, cfg.epochs - 1)
    return TrainResult(best, final, metrics, records, trace, seconds=time.perf_counter() - t0)


def write_artifacts(result: TrainResult, out_dir: Path, cfg: ExperimentConfig,
                    spec: SyntheticSpec | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "metrics.csv", result.metrics, METRICS_COLUMNS)
    write_csv(out_dir / "modulation.csv", [r.as_row() for r in result.modulation], MODULATION_COLUMNS)
    write_csv(out_dir / "ratios.csv", result.ratio_trace, RATIO_COLUMNS)
    save_checkpoint(result.checkpoint, out_dir / "checkpoint.json")
    summary = {"config_hash": config_hash(cfg, spec), "experiment": cfg.to_dict(),
               "synthetic": spec.to_dict() if spec else None,
               "best_epoch": result.checkpoint.epoch, "seconds": result.seconds,
               "note": "optimizer and learning-rate defaults are desk-scale choices, not tuned values "
                       "from any published setup"}
    if result.test is not None:
        summary["test"] = result.test.__dict__
    (out_dir / "summary.json").write_text(json.dumps(json_safe(summary), indent=2), encoding="utf-8")


def train(cfg: ExperimentConfig, spec: SyntheticSpec, out_dir: str | Path | None = None,
          data: Dataset | None = None) -> TrainResult:
    """Generate the task, train, evaluate the best-val checkpoint on test, write artifacts."""
    data = gen_synthetic(spec) if data is None else data
    out = Path(out_dir) if out_dir is not None else None
    result = fit_model(cfg, data.train, data.val, spec.num_categories, out_dir=out)
    result.test = evaluate(result.checkpoint, data.test, "test")
    if out is not None:
        write_artifacts(result, out, cfg, spec)
    return result
