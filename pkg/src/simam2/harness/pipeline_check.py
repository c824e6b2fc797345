"""Finite-difference check of the whole network, every feature switched on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gradcheck import relative_error
from ..rng import stream
from ..tensor import backward, cross_entropy, no_grad
from .config import ExperimentConfig
from .data import SyntheticSpec, gen_synthetic
from .model import BimodalNet

__all__ = ["PipelineGradcheck", "pipeline_gradcheck"]


@dataclass
class PipelineGradcheck:
    errors: dict[str, float]
    r: float
    parameters: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_error < tol


def pipeline_gradcheck(seed: int = 0, batch: int = 4, h: float = 1e-5,
                       spec: SyntheticSpec | None = None, cfg: ExperimentConfig | None = None) -> PipelineGradcheck:
    """Compare backprop against central differences for every parameter.

    Uses summation-learnable fusion with energy attention and no modulation.
    The gate's output layer starts at zero, which would make zeta constant;
    it is randomised so gradients reach the gate's hidden layer. ``r`` is a
    non-differentiable batch statistic with a running max, so it is measured
    once and then held fixed for both gradient computations.
    """
    cfg = cfg or ExperimentConfig(fusion="summation-learnable", simam2=True, scheme="none", seed=seed)
    spec = spec or SyntheticSpec(seed=seed, train_size=max(batch, 2), val_size=1, test_size=1)
    data = gen_synthetic(spec).train.take(np.arange(batch))
    model = BimodalNet(cfg, data.x_v.shape[1], data.x_a.shape[1], spec.num_categories)
    arrays = model.state_arrays()
    if "gate.w_out" in arrays:
        rng = stream(seed, "gradcheck/gate")
        arrays["gate.w_out"] = rng.normal(0.0, 0.5, arrays["gate.w_out"].shape)
        arrays["gate.b_out"] = rng.normal(0.0, 0.1, arrays["gate.b_out"].shape)
    model.load_arrays(arrays)
    with no_grad():
        r = model.forward(data.x_v, data.x_a, training=True, decouple=False).r

    def loss_at(values: dict[str, np.ndarray]):
        model.load_arrays(values)
        fwd = model.forward(data.x_v, data.x_a, training=True, r=r, decouple=False)
        return cross_entropy(fwd.logits, data.y)

    backward(loss_at(arrays))
    analytic = {name: (p.grad if p.grad is not None else np.zeros(p.shape)) for name, p in model.params.items()}

    errors = {}
    with no_grad():
        for name in arrays:
            base = arrays[name]
            numeric = np.zeros_like(base)
            for pos in np.ndindex(base.shape):
                orig = base[pos]
                base[pos] = orig + h
                plus = loss_at(arrays).item()
                base[pos] = orig - h
                minus = loss_at(arrays).item()
                base[pos] = orig
                numeric[pos] = (plus - minus) / (2.0 * h)
            errors[name] = relative_error(analytic[name], numeric)
    model.load_arrays(arrays)
    return PipelineGradcheck(errors, float(r) if r is not None else float("nan"),
                             int(sum(a.size for a in arrays.values())))
