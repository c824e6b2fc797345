"""Neuron energies and the bimodal energy attention built on them.

Feature layout is ``(batch, channels, *spatial)``. Energy statistics are taken
per (sample, channel) over the spatial positions. A 2-D ``(batch, features)``
input has no spatial axis; there the whole feature vector of a sample is the
channel, so ``M = features``.

Variances are population variances (denominator ``N``) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DegenerateInputError, ShapeError, Tensor, as_tensor, concat

__all__ = [
    "DEFAULT_LAMBDA",
    "DEFAULT_S",
    "ChannelStats",
    "EnergyMap",
    "ZetaState",
    "channel_stats",
    "closed_form_minimizer",
    "energy_at",
    "minimal_energy_map",
    "simam_unimodal",
    "zeta_forward",
    "superpose",
    "correlation_proxy",
    "excess_energy",
    "simam2_apply",
    "mutual_energy",
    "broadcast_channels",
]

DEFAULT_LAMBDA = 1e-6
DEFAULT_S = 2.5


def _neuron_axes(x: Tensor) -> tuple[int, ...]:
    if x.ndim < 2:
        raise ShapeError(f"features need a batch axis and at least one more, got {x.shape}")
    return tuple(range(2, x.ndim)) if x.ndim > 2 else (1,)


@dataclass(frozen=True)
class ChannelStats:
    mu_hat: np.ndarray
    sigma_hat2: np.ndarray


def channel_stats(x) -> ChannelStats:
    """All-neuron mean and population variance for each (sample, channel)."""
    x = as_tensor(x)
    axes = _neuron_axes(x)
    return ChannelStats(x.data.mean(axis=axes), x.data.var(axis=axes))


# --------------------------------------------------------------------------
# single-neuron energy (scalar, numpy)


def closed_form_minimizer(t: float, others, lam: float = 0.0) -> tuple[float, float]:
    """Minimizing ``(w, b)`` of :func:`energy_at` for target ``t``.

    Uses the mean and population variance of ``others`` (every neuron of the
    channel except ``t``).
    """
    others = np.asarray(others, dtype=np.float64)
    if others.size == 0:
        raise ValueError("others must be non-empty")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mu = others.mean()
    var = others.var()
    denom = (t - mu) ** 2 + 2.0 * var + 2.0 * lam
    if denom == 0.0:
        raise DegenerateInputError("all neurons equal with lambda=0: minimizer undefined")
    w = 2.0 * (t - mu) / denom
    b = -0.5 * (t + mu) * w
    return float(w), float(b)


def energy_at(t: float, others, w: float, b: float, lam: float = 0.0) -> float:
    others = np.asarray(others, dtype=np.float64)
    if others.size == 0:
        raise ValueError("others must be non-empty")
    rest = np.mean((-1.0 - (w * others + b)) ** 2)
    return float(rest + (1.0 - (w * t + b)) ** 2 + lam * w * w)


# --------------------------------------------------------------------------
# energy maps (Tensor, differentiable)


@dataclass(frozen=True)
class EnergyMap:
    values: Tensor
    lam: float


def minimal_energy_map(x, lam: float = DEFAULT_LAMBDA, constant_limit: bool = False) -> EnergyMap:
    """Closed-form minimal energy of every neuron, ``4(v+lam) / ((t-m)^2 + 2v + 2lam)``.

    A constant channel at ``lam=0`` is 0/0 and raises, unless
    ``constant_limit`` is set: then it takes the ``lam -> 0+`` limit, 2, with
    zero gradient. Zero-padded concat channels and spatially broadcast FiLM
    shifts are constant by construction and need this.
    """
    x = as_tensor(x)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    axes = _neuron_axes(x)
    m = int(np.prod([x.shape[a] for a in axes]))
    if m < 2:
        raise ShapeError("each channel needs at least two neurons")
    mu = x.mean(axis=axes, keepdims=True).expand(x.shape)
    dev2 = (x - mu) * (x - mu)
    var = dev2.mean(axis=axes, keepdims=True).expand(x.shape)
    num = (var + lam) * 4.0
    den = dev2 + var * 2.0 + 2.0 * lam
    zero = den.data == 0.0
    if np.any(zero):
        if not constant_limit:
            raise DegenerateInputError("constant channel with lambda=0: minimal energy is 0/0")
        mask = Tensor(zero.astype(np.float64))
        return EnergyMap(num / (den + mask) + mask * 2.0, float(lam))
    return EnergyMap(num / den, float(lam))


def simam_unimodal(x, lam: float = DEFAULT_LAMBDA) -> Tensor:
    """Parameter-free unimodal attention: ``x * sigmoid(1 / e*)``."""
    x = as_tensor(x)
    e = minimal_energy_map(x, lam).values
    return x * e.pow(-1.0).sigmoid()


def broadcast_channels(weights, like_shape) -> Tensor:
    """Expand per-(sample, channel) weights over the spatial axes of ``like_shape``."""
    weights = as_tensor(weights)
    like_shape = tuple(like_shape)
    if weights.shape == like_shape:
        return weights
    if weights.shape != like_shape[:2]:
        raise ShapeError(f"weights {weights.shape} do not match features {like_shape}")
    spatial = (1,) * (len(like_shape) - 2)
    return weights.reshape(weights.shape + spatial).expand(like_shape)


# --------------------------------------------------------------------------
# learnable modality weight


@dataclass
class ZetaState:
    """Gate producing per-channel modality weights, plus the variance record.

    The gate pools each modality per channel, concatenates the two ``C``
    vectors, and maps them through ``affine(2C->C) -> relu -> affine(C->C) ->
    sigmoid``. The output layer starts at zero so a fresh gate yields 0.5.
    """

    w_hidden: Tensor
    b_hidden: Tensor
    w_out: Tensor
    b_out: Tensor
    var_max: np.ndarray
    last_r: float | None = None

    PARAM_NAMES = ("w_hidden", "b_hidden", "w_out", "b_out")

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator) -> "ZetaState":
        scale = 1.0 / np.sqrt(2 * channels)
        return cls(
            w_hidden=Tensor(rng.normal(0.0, scale, (2 * channels, channels)), requires_grad=True),
            b_hidden=Tensor(np.zeros(channels), requires_grad=True),
            w_out=Tensor(np.zeros((channels, channels)), requires_grad=True),
            b_out=Tensor(np.zeros(channels), requires_grad=True),
            var_max=np.zeros(channels),
        )

    @property
    def channels(self) -> int:
        return self.b_out.shape[0]

    def params(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for name in self.PARAM_NAMES:
            setattr(self, name, Tensor(values[name], requires_grad=True))


def _pool(x: Tensor) -> Tensor:
    return x.mean(axis=tuple(range(2, x.ndim))) if x.ndim > 2 else x


def zeta_forward(x1, x2, state: ZetaState) -> Tensor:
    """Per-sample per-channel weight in (0, 1) for ``x1`` (``x2`` gets ``1 - zeta``)."""
    x1, x2 = as_tensor(x1), as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError(f"modalities differ in shape: {x1.shape} vs {x2.shape}")
    if x1.shape[1] != state.channels:
        raise ShapeError(f"gate built for {state.channels} channels, got {x1.shape[1]}")
    pooled = concat([_pool(x1), _pool(x2)], axis=1)
    batch = pooled.shape[0]
    c = state.channels
    hidden = (pooled @ state.w_hidden + state.b_hidden.reshape(1, c).expand((batch, c))).relu()
    logits = hidden @ state.w_out + state.b_out.reshape(1, c).expand((batch, c))
    return logits.sigmoid()


def superpose(x1, x2, zeta) -> Tensor:
    """Linear superposition ``zeta * x1 + (1 - zeta) * x2``."""
    x1, x2 = as_tensor(x1), as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError(f"modalities differ in shape: {x1.shape} vs {x2.shape}")
    z = broadcast_channels(zeta, x1.shape)
    return z * x1 + (1.0 - z) * x2


def correlation_proxy(zeta_batch, state: ZetaState, s: float = DEFAULT_S,
                      lam: float = DEFAULT_LAMBDA) -> float:
    """Squashed ratio of current to record batch variance of zeta.

    ``state.var_max`` is raised to the current variance *before* the ratio is
    taken. Zeta is treated as a measurement here: no gradient flows.
    Mutates ``state.var_max`` and ``state.last_r``.
    """
    z = np.asarray(zeta_batch.data if isinstance(zeta_batch, Tensor) else zeta_batch, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"zeta must be (batch, channels), got {z.shape}")
    if z.shape[0] < 2:
        raise ValueError("batch variance needs at least two samples; reuse state.last_r")
    if s <= 0 or lam <= 0:
        raise ValueError("s and lambda must be positive")
    var = z.var(axis=0)
    state.var_max = np.maximum(state.var_max, var)
    r = float(np.tanh((s * var.sum() + lam) / (state.var_max.sum() + lam)))
    state.last_r = r
    return r


def _check_maps(e_u: EnergyMap, e_1: EnergyMap, e_2: EnergyMap) -> None:
    if e_1.lam != 0.0 or e_2.lam != 0.0:
        raise ValueError("unimodal energies must be computed with lambda=0")
    shape = e_u.values.shape
    if e_1.values.shape != shape or e_2.values.shape != shape:
        raise ShapeError("energy maps differ in shape")


def excess_energy(e_u: EnergyMap, e_1: EnergyMap, e_2: EnergyMap, zeta, r: float) -> Tensor:
    """``(2 - r) e_u - zeta^2 e_1 - (1 - zeta)^2 e_2``, zeta broadcast per channel."""
    _check_maps(e_u, e_1, e_2)
    z = broadcast_channels(zeta, e_u.values.shape)
    zc = 1.0 - z
    return e_u.values * (2.0 - r) - z * z * e_1.values - zc * zc * e_2.values


def simam2_apply(u, e_star) -> Tensor:
    """Gate the fused feature: ``sigmoid(E*) * U``."""
    u, e_star = as_tensor(u), as_tensor(e_star)
    if u.shape != e_star.shape:
        raise ShapeError(f"U {u.shape} and E* {e_star.shape} differ")
    return e_star.sigmoid() * u


def mutual_energy(e_u: EnergyMap, e_1: EnergyMap, e_2: EnergyMap, zeta) -> Tensor:
    """Cross term recovered by rearranging the fused-energy decomposition."""
    _check_maps(e_u, e_1, e_2)
    z = broadcast_channels(zeta, e_u.values.shape)
    if np.any((z.data == 0.0) | (z.data == 1.0)):
        raise DegenerateInputError("mutual energy undefined for zeta in {0, 1}")
    zc = 1.0 - z
    numer = e_u.values - z * z * e_1.values - zc * zc * e_2.values
    return numer / (z * zc * 2.0)
