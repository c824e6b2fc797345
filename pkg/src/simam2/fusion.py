"""Vanilla fusion strategies, each expressible as a two-operand superposition."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .energy import (
    DEFAULT_LAMBDA,
    DEFAULT_S,
    ZetaState,
    broadcast_channels,
    correlation_proxy,
    excess_energy,
    minimal_energy_map,
    simam2_apply,
    superpose,
    zeta_forward,
)
from .tensor import ShapeError, Tensor, as_tensor, concat

__all__ = [
    "FusionKind",
    "FilmParams",
    "FusionResult",
    "ConcatLayout",
    "fuse_summation",
    "film_operands",
    "fuse_film",
    "fuse_concat",
    "apply_simam2",
    "fused_excess_energy",
]


class FusionKind(str, enum.Enum):
    SUMMATION_FIXED = "summation-fixed"
    SUMMATION_LEARNABLE = "summation-learnable"
    FILM = "film"
    FILM_ZETA = "film-zeta"
    CONCATENATION = "concatenation"

    @property
    def has_gate(self) -> bool:
        return self in (FusionKind.SUMMATION_LEARNABLE, FusionKind.FILM_ZETA)

    @property
    def is_film(self) -> bool:
        return self in (FusionKind.FILM, FusionKind.FILM_ZETA)


@dataclass(frozen=True)
class ConcatLayout:
    """Split point of a padded concatenation: ``[0, split)`` is x1, ``[split, total)`` is x2."""

    split: int
    total: int


class FusionResult(NamedTuple):
    u: Tensor
    zeta: Tensor | None
    x1_eff: Tensor
    x2_eff: Tensor
    layout: ConcatLayout | None = None


def _half_weights(shape) -> Tensor:
    return Tensor(np.full(shape[:2], 0.5))


def fuse_summation(x1, x2, kind: FusionKind = FusionKind.SUMMATION_FIXED,
                   zeta_state: ZetaState | None = None) -> FusionResult:
    x1, x2 = as_tensor(x1), as_tensor(x2)
    kind = FusionKind(kind)
    if kind is FusionKind.SUMMATION_FIXED:
        zeta = _half_weights(x1.shape)
    elif kind is FusionKind.SUMMATION_LEARNABLE:
        if zeta_state is None:
            raise ValueError("summation-learnable needs a zeta_state")
        zeta = zeta_forward(x1, x2, zeta_state)
    else:
        raise ValueError(f"{kind.value} is not a summation variant")
    return FusionResult(superpose(x1, x2, zeta), zeta, x1, x2)


@dataclass
class FilmParams:
    """Affine generators of the FiLM scale (``f``) and shift (``h``).

    Both read the channel-pooled conditioner; scale starts near 1, shift near 0.
    """

    w_scale: Tensor
    b_scale: Tensor
    w_shift: Tensor
    b_shift: Tensor

    PARAM_NAMES = ("w_scale", "b_scale", "w_shift", "b_shift")

    @classmethod
    def init(cls, cond_channels: int, target_channels: int, rng: np.random.Generator) -> "FilmParams":
        scale = 1.0 / np.sqrt(cond_channels)
        return cls(
            w_scale=Tensor(rng.normal(0.0, 0.1 * scale, (cond_channels, target_channels)), requires_grad=True),
            b_scale=Tensor(np.ones(target_channels), requires_grad=True),
            w_shift=Tensor(rng.normal(0.0, scale, (cond_channels, target_channels)), requires_grad=True),
            b_shift=Tensor(np.zeros(target_channels), requires_grad=True),
        )

    def params(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for name in self.PARAM_NAMES:
            setattr(self, name, Tensor(values[name], requires_grad=True))


def film_operands(conditioner, target, params: FilmParams) -> tuple[Tensor, Tensor]:
    """Return ``(gamma * F, beta)`` for conditioner features and target ``F``."""
    conditioner, target = as_tensor(conditioner), as_tensor(target)
    pooled = conditioner.mean(axis=tuple(range(2, conditioner.ndim))) if conditioner.ndim > 2 else conditioner
    batch = pooled.shape[0]
    c = params.b_scale.shape[0]
    if target.shape[:2] != (batch, c) or params.w_scale.shape[0] != pooled.shape[1]:
        raise ShapeError(f"FiLM params map {params.w_scale.shape} but got conditioner "
                         f"{conditioner.shape} and target {target.shape}")
    gamma = pooled @ params.w_scale + params.b_scale.reshape(1, c).expand((batch, c))
    beta = pooled @ params.w_shift + params.b_shift.reshape(1, c).expand((batch, c))
    gamma = broadcast_channels(gamma, target.shape)
    beta = broadcast_channels(beta, target.shape)
    return gamma * target, beta


def fuse_film(conditioner, target, params: FilmParams, with_zeta: bool = False,
              zeta_state: ZetaState | None = None) -> FusionResult:
    """Plain FiLM ``gamma * F + beta``, or the weighted form ``zeta gamma F + (1 - zeta) beta``.

    The two terms are the superposition operands. For the plain form the
    operands still carry zeta = 0.5 so that they can feed the energy
    attention; unimodal energies at lambda=0 are scale invariant, so the
    factor 2 between ``U`` and a true half-half superposition drops out there.
    """
    scaled, beta = film_operands(conditioner, target, params)
    if not with_zeta:
        return FusionResult(scaled + beta, _half_weights(scaled.shape), scaled, beta)
    if zeta_state is None:
        raise ValueError("film-zeta needs a zeta_state")
    zeta = zeta_forward(scaled, beta, zeta_state)
    return FusionResult(superpose(scaled, beta, zeta), zeta, scaled, beta)


def fuse_concat(x1, x2, zeta_fixed: float = 0.5) -> FusionResult:
    """Concatenation written as a superposition of two zero-padded operands."""
    x1, x2 = as_tensor(x1), as_tensor(x2)
    if x1.ndim != x2.ndim or x1.shape[0] != x2.shape[0] or x1.shape[2:] != x2.shape[2:]:
        raise ShapeError(f"cannot concatenate {x1.shape} and {x2.shape}")
    c1, c2 = x1.shape[1], x2.shape[1]
    pad1 = Tensor(np.zeros((x1.shape[0], c2) + x1.shape[2:]))
    pad2 = Tensor(np.zeros((x2.shape[0], c1) + x2.shape[2:]))
    x1_pad = concat([x1, pad1], axis=1)
    x2_pad = concat([pad2, x2], axis=1)
    zeta = Tensor(np.full((x1.shape[0], c1 + c2), zeta_fixed))
    u = superpose(x1_pad, x2_pad, zeta)
    return FusionResult(u, zeta, x1_pad, x2_pad, ConcatLayout(c1, c1 + c2))


def fused_excess_energy(u, x1_eff, x2_eff, zeta, zeta_state: ZetaState | None = None,
                        lam: float = DEFAULT_LAMBDA, s: float = DEFAULT_S, *,
                        training: bool = True, r: float | None = None) -> tuple[Tensor, float]:
    """Excess energy of a fused feature from its two operands; returns ``(E*, r)``.

    ``r`` is measured from the batch of zeta while training and frozen at the
    last recorded value at inference. Fusions without a gate get ``tanh(1)``,
    which is what the proxy yields for a constant zeta with an empty variance
    record. Passing ``r`` overrides all of this.
    """
    u = as_tensor(u)
    if r is None:
        if zeta_state is not None and training and u.shape[0] >= 2:
            r = correlation_proxy(zeta, zeta_state, s, lam)
        elif zeta_state is not None and zeta_state.last_r is not None:
            r = zeta_state.last_r
        else:
            r = float(np.tanh(1.0))
    e_u = minimal_energy_map(u, lam)
    e_1 = minimal_energy_map(x1_eff, 0.0, constant_limit=True)
    e_2 = minimal_energy_map(x2_eff, 0.0, constant_limit=True)
    return excess_energy(e_u, e_1, e_2, zeta, r), r


def apply_simam2(u, x1_eff, x2_eff, zeta, zeta_state: ZetaState | None = None,
                 lam: float = DEFAULT_LAMBDA, s: float = DEFAULT_S, *,
                 training: bool = True, r: float | None = None) -> tuple[Tensor, float]:
    """Energy attention on a fused feature; returns ``(U_bar, r)``."""
    e_star, r = fused_excess_energy(u, x1_eff, x2_eff, zeta, zeta_state, lam, s,
                                    training=training, r=r)
    return simam2_apply(u, e_star), r
