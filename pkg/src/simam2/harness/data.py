"""Synthetic bimodal classification tasks with controllable imbalance."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..rng import stream

__all__ = ["SyntheticSpec", "Split", "Dataset", "gen_synthetic"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Task description.

    Each modality sees ``class_mean + inter_modal_corr * shared + noise / snr``,
    where ``shared`` is a per-sample latent projected into both modalities.
    Class means are unit-norm, so ``snr`` is a per-modality signal-to-noise
    knob. With ``pair_confusion_a`` the dominant modality gets one mean per
    class pair ``(2j, 2j + 1)``, so only the weak modality can split a pair
    and the two modalities become complementary.
    """

    num_categories: int = 6
    dim_a: int = 128
    dim_v: int = 8
    snr_a: float = 1.5
    snr_v: float = 0.4
    inter_modal_corr: float = 0.3
    shared_dim: int = 4
    pair_confusion_a: bool = True
    train_size: int = 300
    val_size: int = 600
    test_size: int = 1200
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        if self.num_categories < 2:
            raise ValueError("num_categories must be >= 2")
        if min(self.dim_a, self.dim_v, self.shared_dim) < 1:
            raise ValueError("feature dimensions must be positive")
        if self.snr_a <= 0 or self.snr_v <= 0:
            raise ValueError("snr values must be positive")
        if not 0.0 <= self.inter_modal_corr <= 1.0:
            raise ValueError("inter_modal_corr must be in [0, 1]")
        if min(self.train_size, self.val_size, self.test_size) < 1:
            raise ValueError("split sizes must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synthetic keys: {sorted(unknown)}")
        return cls(**data).validate()


@dataclass(frozen=True)
class Split:
    x_v: np.ndarray
    x_a: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def take(self, idx) -> "Split":
        return Split(self.x_v[idx], self.x_a[idx], self.y[idx])


@dataclass(frozen=True)
class Dataset:
    spec: SyntheticSpec
    train: Split
    val: Split
    test: Split


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    m = rng.normal(size=(n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    rng = stream(spec.seed, "synthetic/structure")
    k = spec.num_categories
    means_v = _unit_rows(rng, k, spec.dim_v)
    means_a = _unit_rows(rng, k, spec.dim_a)
    if spec.pair_confusion_a:
        group = np.arange(k) // 2
        means_a = _unit_rows(rng, int(group.max()) + 1, spec.dim_a)[group]
    proj_v = rng.normal(size=(spec.shared_dim, spec.dim_v)) / np.sqrt(spec.shared_dim)
    proj_a = rng.normal(size=(spec.shared_dim, spec.dim_a)) / np.sqrt(spec.shared_dim)

    def draw(n: int, name: str) -> Split:
        r = stream(spec.seed, f"synthetic/{name}")
        y = r.integers(0, k, size=n)
        shared = r.normal(size=(n, spec.shared_dim))
        noise_v = r.normal(size=(n, spec.dim_v))
        noise_a = r.normal(size=(n, spec.dim_a))
        x_v = means_v[y] + spec.inter_modal_corr * shared @ proj_v + noise_v / (spec.snr_v * np.sqrt(spec.dim_v))
        x_a = means_a[y] + spec.inter_modal_corr * shared @ proj_a + noise_a / (spec.snr_a * np.sqrt(spec.dim_a))
        return Split(x_v, x_a, y.astype(np.int64))

    return Dataset(spec, draw(spec.train_size, "train"), draw(spec.val_size, "val"),
                   draw(spec.test_size, "test"))
