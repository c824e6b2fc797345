"""Discrepancy ratios and on-the-fly gradient modulation.

Two ways to measure which modality dominates a batch:

* decoupled: split the classifier by modality contribution and compare the
  summed softmax probability of the true label;
* decoupling-free: read the ratio straight off the learned modality weights,
  ``sum(zeta) / sum(1 - zeta)``.

Either ratio drives the same propagation rule: the dominant modality's encoder
gradients are scaled by ``1 - tanh(alpha * rho)`` and, optionally, Gaussian
noise matched to each gradient's spread is added.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "Scheme",
    "ModulationRecord",
    "ratio_free",
    "ratio_decoupled",
    "coefficient",
    "modulate",
    "MODULATION_COLUMNS",
]

MODULATION_COLUMNS = ("step", "scheme", "rho_v", "rho_a", "k_v", "k_a")

MODALITIES = ("v", "a")


class Scheme(str, enum.Enum):
    NONE = "none"
    DECOUPLED = "decoupled"
    DECOUPLING_FREE = "decoupling-free"


@dataclass(frozen=True)
class ModulationRecord:
    step: int
    scheme: str
    rho_v: float
    rho_a: float
    k_v: float
    k_a: float
    noise_std_v: float = 0.0
    noise_std_a: float = 0.0

    def as_row(self) -> dict:
        row = asdict(self)
        return {key: row[key] for key in MODULATION_COLUMNS}


def ratio_free(zeta_batch) -> tuple[float, float]:
    """Dominance of the zeta-weighted modality, summed over batch and channels."""
    z = np.asarray(getattr(zeta_batch, "data", zeta_batch), dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty zeta batch")
    if np.any((z < 0.0) | (z > 1.0)):
        raise ValueError("zeta must lie in [0, 1]")
    # single entries may saturate to 0 or 1 in float64; only the sums must be positive
    num, den = z.sum(), (1.0 - z).sum()
    if num <= 0.0 or den <= 0.0:
        raise ValueError("zeta is saturated at 0 or 1 across the whole batch")
    rho_v = float(num / den)
    return rho_v, 1.0 / rho_v


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def ratio_decoupled(logits_v, logits_a, labels) -> tuple[float, float]:
    """Ratio of summed true-label probabilities under per-modality logits."""
    lv = np.asarray(getattr(logits_v, "data", logits_v), dtype=np.float64)
    la = np.asarray(getattr(logits_a, "data", logits_a), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if lv.shape != la.shape or lv.ndim != 2 or lv.shape[0] != labels.shape[0]:
        raise ValueError(f"logit shapes {lv.shape}, {la.shape} do not match {labels.shape[0]} labels")
    rows = np.arange(labels.shape[0])
    score_v = _softmax(lv)[rows, labels].sum()
    score_a = _softmax(la)[rows, labels].sum()
    rho_v = float(score_v / score_a)
    return rho_v, float(score_a / score_v)


def coefficient(rho: float, alpha: float = 0.1) -> float:
    if rho <= 0 or alpha <= 0:
        raise ValueError("rho and alpha must be positive")
    return float(1.0 - np.tanh(alpha * rho)) if rho > 1.0 else 1.0


def modulate(grads: Mapping[str, np.ndarray], owners: Mapping[str, str], k_v: float, k_a: float,
             ge_enabled: bool = False, rng: np.random.Generator | None = None
             ) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Scale encoder gradients per modality and optionally add matched noise.

    ``owners`` maps every gradient name to ``"v"``, ``"a"`` or ``"shared"``;
    shared gradients pass through untouched. Noise has the population std of
    the unscaled gradient and is added after scaling. Returns the new
    gradients and the mean noise std applied per modality.
    """
    if ge_enabled and rng is None:
        raise ValueError("generalization enhancement needs an rng")
    k = {"v": float(k_v), "a": float(k_a)}
    out: dict[str, np.ndarray] = {}
    stds: dict[str, list[float]] = {"v": [], "a": []}
    for name in grads:
        if name not in owners:
            raise KeyError(f"no ownership recorded for parameter {name!r}")
        owner = owners[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if owner == "shared":
            out[name] = g
            continue
        if owner not in MODALITIES:
            raise ValueError(f"unknown owner {owner!r} for {name!r}")
        new = g * k[owner]
        if ge_enabled:
            std = float(g.std())
            new = new + rng.normal(0.0, std, g.shape)
            stds[owner].append(std)
        out[name] = new
    mean_std = {m: float(np.mean(v)) if v else 0.0 for m, v in stds.items()}
    return out, mean_std
