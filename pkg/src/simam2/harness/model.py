"""Two-stream toy network: encoders, fusion, optional energy attention, classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..energy import ZetaState, simam2_apply
from ..fusion import FilmParams, FusionKind, fuse_concat, fuse_film, fuse_summation, fused_excess_energy
from ..rng import stream
from ..tensor import Tensor
from .config import ExperimentConfig

__all__ = ["Forward", "BimodalNet", "linear_init"]


def linear_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    """He-style normal weights, zero bias."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)), np.zeros(fan_out)


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    batch, out = x.shape[0], w.shape[1]
    return x @ w + b.reshape(1, out).expand((batch, out))


@dataclass
class Forward:
    logits: Tensor
    feat_v: Tensor
    feat_a: Tensor
    zeta: Tensor | None
    r: float | None
    logits_v: np.ndarray | None
    logits_a: np.ndarray | None


class BimodalNet:
    """Encoders ``affine -> relu -> affine`` per modality into ``channels`` features.

    Parameters live in :attr:`params` under stable dotted names; the gate's
    variance record sits in :attr:`zeta_state`. FiLM reads the conditioner
    modality (``cfg.film_conditioner``) and modulates the other one.
    """

    def __init__(self, cfg: ExperimentConfig, dim_v: int, dim_a: int, num_categories: int):
        self.cfg = cfg
        self.kind = cfg.fusion_kind
        self.dims = {"v": dim_v, "a": dim_a}
        self.num_categories = num_categories
        c, h = cfg.channels, cfg.hidden
        self.params: dict[str, Tensor] = {}
        self.owners: dict[str, str] = {}
        for mod, dim in self.dims.items():
            rng = stream(cfg.seed, f"init/enc_{mod}")
            w1, b1 = linear_init(rng, dim, h)
            w2, b2 = linear_init(rng, h, c)
            for name, value in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
                self._add(f"enc_{mod}.{name}", value, mod)
        fused = 2 * c if self.kind is FusionKind.CONCATENATION else c
        wc, bc = linear_init(stream(cfg.seed, "init/cls"), fused, num_categories)
        self._add("cls.w", wc, "shared")
        self._add("cls.b", bc, "shared")
        self.zeta_state: ZetaState | None = None
        if self.kind.has_gate:
            self.zeta_state = ZetaState.init(c, stream(cfg.seed, "init/gate"))
        self.film: FilmParams | None = None
        if self.kind.is_film:
            self.film = FilmParams.init(c, c, stream(cfg.seed, "init/film"))
        self._sync_sub_params()

    # --------------------------------------------------------------- params
    def _add(self, name: str, value: np.ndarray, owner: str) -> None:
        self.params[name] = Tensor(value, requires_grad=True)
        self.owners[name] = owner

    def _sync_sub_params(self) -> None:
        if self.zeta_state is not None:
            for key, t in self.zeta_state.params().items():
                self.params[f"gate.{key}"] = t
                self.owners[f"gate.{key}"] = "shared"
        if self.film is not None:
            for key, t in self.film.params().items():
                self.params[f"film.{key}"] = t
                self.owners[f"film.{key}"] = "shared"

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: np.array(t.data) for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name in self.params:
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != self.params[name].shape:
                raise ValueError(f"{name}: shape {value.shape} != {self.params[name].shape}")
            self.params[name] = Tensor(value, requires_grad=True)
        if self.zeta_state is not None:
            self.zeta_state.set_params({k: arrays[f"gate.{k}"] for k in ZetaState.PARAM_NAMES})
        if self.film is not None:
            self.film.set_params({k: arrays[f"film.{k}"] for k in FilmParams.PARAM_NAMES})
        self._sync_sub_params()

    # -------------------------------------------------------------- forward
    def encode(self, x, mod: str) -> Tensor:
        p = self.params
        hidden = _affine(Tensor(x), p[f"enc_{mod}.w1"], p[f"enc_{mod}.b1"]).relu()
        return _affine(hidden, p[f"enc_{mod}.w2"], p[f"enc_{mod}.b2"])

    def forward(self, x_v, x_a, training: bool = True, r: float | None = None,
                decouple: bool = True) -> Forward:
        cfg = self.cfg
        f_v = self.encode(x_v, "v")
        f_a = self.encode(x_a, "a")
        if self.kind is FusionKind.CONCATENATION:
            fused = fuse_concat(f_v, f_a)
        elif self.kind.is_film:
            cond, target = (f_a, f_v) if cfg.film_conditioner == "a" else (f_v, f_a)
            fused = fuse_film(cond, target, self.film, self.kind is FusionKind.FILM_ZETA, self.zeta_state)
        else:
            fused = fuse_summation(f_v, f_a, self.kind, self.zeta_state)
        u = fused.u
        used_r = None
        e_star_np = None
        if cfg.simam2:
            e_star, used_r = fused_excess_energy(u, fused.x1_eff, fused.x2_eff, fused.zeta,
                                                 self.zeta_state, cfg.lambda_, cfg.s,
                                                 training=training, r=r)
            e_star_np = e_star.data
            u = simam2_apply(u, e_star)
        logits = _affine(u, self.params["cls.w"], self.params["cls.b"])
        zeta = fused.zeta if self.kind.has_gate else None
        lv = la = None
        if decouple and not self.kind.is_film:
            lv, la = self._decoupled_logits(fused, e_star_np, u)
        return Forward(logits, f_v, f_a, zeta, used_r, lv, la)

    def _decoupled_logits(self, fused, e_star, u: Tensor) -> tuple[np.ndarray, np.ndarray]:
        w = self.params["cls.w"].data
        b = self.params["cls.b"].data
        if self.kind is FusionKind.CONCATENATION:
            ub = u.data
            split = fused.layout.split
            return ub[:, :split] @ w[:split] + b / 2, ub[:, split:] @ w[split:] + b / 2
        g = 1.0 if e_star is None else 1.0 / (1.0 + np.exp(-e_star))
        z = fused.zeta.data
        part_v = g * z * fused.x1_eff.data
        part_a = g * (1.0 - z) * fused.x2_eff.data
        return part_v @ w + b / 2, part_a @ w + b / 2
