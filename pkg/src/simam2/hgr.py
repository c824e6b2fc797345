"""Soft-HGR correlation between two feature sets."""

from __future__ import annotations

from .tensor import Tensor, as_tensor

__all__ = ["soft_hgr"]


def soft_hgr(f, g) -> Tensor:
    """``tr(cov(f, g)) - 0.5 * tr(cov(f) cov(g))`` over a batch of paired rows.

    Features are centered per column first; covariances use the unbiased
    ``N - 1`` denominator of the soft-HGR objective. Differentiable in both
    inputs.
    """
    f, g = as_tensor(f), as_tensor(g)
    if f.ndim != 2 or f.shape != g.shape:
        raise ValueError(f"need two (batch, k) arrays of equal shape, got {f.shape} and {g.shape}")
    n = f.shape[0]
    if n < 2:
        raise ValueError("soft-HGR needs a batch of at least two samples")
    fc = f - f.mean(axis=0, keepdims=True).expand(f.shape)
    gc = g - g.mean(axis=0, keepdims=True).expand(g.shape)
    denom = float(n - 1)
    cross = (fc * gc).sum() / denom
    cov_f = fc.T @ fc / denom
    cov_g = gc.T @ gc / denom
    # both covariances are symmetric, so tr(A B) is the elementwise sum of A * B
    return cross - (cov_f * cov_g).sum() * 0.5
