"""Experiment configuration and combination rules."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..energy import DEFAULT_LAMBDA, DEFAULT_S
from ..fusion import FusionKind
from ..modulation import Scheme
from .data import SyntheticSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid hyperparameter or disallowed combination."""


# JSON key -> dataclass field, for names that are Python keywords
_JSON_ALIASES = {"lambda": "lambda_"}


@dataclass(frozen=True)
class ExperimentConfig:
    fusion: str = FusionKind.SUMMATION_FIXED.value
    simam2: bool = False
    scheme: str = Scheme.NONE.value
    lambda_: float = DEFAULT_LAMBDA
    s: float = DEFAULT_S
    alpha: float = 0.1
    ge_enabled: bool = True
    modulation_start: int = 0
    modulation_end: int | None = None
    film_conditioner: str = "a"
    channels: int = 32
    hidden: int = 32
    optimizer: str = "sgd"
    momentum: float = 0.9
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        try:
            fusion = FusionKind(self.fusion)
        except ValueError:
            raise ConfigError(f"fusion must be one of {[k.value for k in FusionKind]}, got {self.fusion!r}")
        try:
            scheme = Scheme(self.scheme)
        except ValueError:
            raise ConfigError(f"scheme must be one of {[s.value for s in Scheme]}, got {self.scheme!r}")
        if self.optimizer != "sgd":
            raise ConfigError("only optimizer='sgd' (with momentum) is supported")
        for name in ("lambda_", "s", "alpha", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name.rstrip('_')} must be positive")
        for name in ("channels", "hidden", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch variance of zeta)")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.film_conditioner not in ("a", "v"):
            raise ConfigError("film_conditioner must be 'a' or 'v'")
        if self.modulation_start < 0 or (self.modulation_end is not None
                                         and self.modulation_end <= self.modulation_start):
            raise ConfigError("modulation window must satisfy 0 <= start < end")
        if scheme is Scheme.DECOUPLED and fusion.is_film:
            raise ConfigError("decoupled ratios are undefined for FiLM fusion; "
                              "use scheme='decoupling-free' with fusion='film-zeta'")
        if scheme is Scheme.DECOUPLING_FREE and not fusion.has_gate:
            hint = {"summation-fixed": "summation-learnable", "film": "film-zeta"}.get(fusion.value)
            msg = f"decoupling-free ratios need a learnable zeta; {fusion.value} has none"
            raise ConfigError(msg + (f" (use fusion='{hint}')" if hint else " (use scheme='decoupled')"))
        return self

    @property
    def fusion_kind(self) -> FusionKind:
        return FusionKind(self.fusion)

    @property
    def scheme_kind(self) -> Scheme:
        return Scheme(self.scheme)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["lambda"] = data.pop("lambda_")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = _JSON_ALIASES.get(key, key)
            if name not in known or key == "lambda_":
                raise ConfigError(f"unknown experiment key {key!r}")
            kwargs[name] = value
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc))
        return cfg.validate()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes).validate()


def load_config(path: str | Path) -> tuple[ExperimentConfig, SyntheticSpec]:
    """Read ``{"experiment": {...}, "synthetic": {...}}``; either section may be omitted."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    extra = set(raw) - {"experiment", "synthetic"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    cfg = ExperimentConfig.from_dict(raw.get("experiment", {}))
    try:
        spec = SyntheticSpec.from_dict(raw.get("synthetic", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    return cfg, spec


def config_hash(cfg: ExperimentConfig, spec: SyntheticSpec | None = None) -> str:
    payload = {"experiment": cfg.to_dict(), "synthetic": spec.to_dict() if spec else None}
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]
