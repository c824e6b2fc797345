"""Checkpoint files.

Layout (JSON, UTF-8), format tag ``simam2-checkpoint/1``::

    {
      "format": "simam2-checkpoint/1",
      "experiment": {...ExperimentConfig keys...},
      "dims": {"v": int, "a": int, "num_categories": int},
      "epoch": int,
      "params": {"<name>": {"shape": [..], "data": [row-major floats]}, ...},
      "zeta_state": {"var_max": [floats], "last_r": float | null} | null
    }

Floats are written with ``repr`` precision, so a save/load round trip is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .model import BimodalNet

__all__ = ["FORMAT_TAG", "Checkpoint", "save_checkpoint", "load_checkpoint"]

FORMAT_TAG = "simam2-checkpoint/1"


@dataclass
class Checkpoint:
    config: ExperimentConfig
    dims: dict[str, int]
    epoch: int
    params: dict[str, np.ndarray]
    var_max: np.ndarray | None = None
    last_r: float | None = None

    @classmethod
    def from_model(cls, model: BimodalNet, epoch: int) -> "Checkpoint":
        zs = model.zeta_state
        return cls(
            config=model.cfg,
            dims={"v": model.dims["v"], "a": model.dims["a"], "num_categories": model.num_categories},
            epoch=epoch,
            params=model.state_arrays(),
            var_max=None if zs is None else np.array(zs.var_max),
            last_r=None if zs is None else zs.last_r,
        )

    def build_model(self) -> BimodalNet:
        model = BimodalNet(self.config, self.dims["v"], self.dims["a"], self.dims["num_categories"])
        model.load_arrays(self.params)
        if model.zeta_state is not None:
            if self.var_max is not None:
                model.zeta_state.var_max = np.array(self.var_max)
            model.zeta_state.last_r = self.last_r
        return model

    def to_json(self) -> dict:
        zeta = None
        if self.var_max is not None:
            zeta = {"var_max": [float(v) for v in self.var_max], "last_r": self.last_r}
        return {
            "format": FORMAT_TAG,
            "experiment": self.config.to_dict(),
            "dims": dict(self.dims),
            "epoch": self.epoch,
            "params": {name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
                       for name, arr in sorted(self.params.items())},
            "zeta_state": zeta,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Checkpoint":
        if raw.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported checkpoint format {raw.get('format')!r}")
        params = {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
                  for name, entry in raw["params"].items()}
        zeta = raw.get("zeta_state")
        return cls(
            config=ExperimentConfig.from_dict(raw["experiment"]),
            dims={k: int(v) for k, v in raw["dims"].items()},
            epoch=int(raw["epoch"]),
            params=params,
            var_max=None if zeta is None else np.asarray(zeta["var_max"], dtype=np.float64),
            last_r=None if zeta is None else zeta["last_r"],
        )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ckpt.to_json()), encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
