"""Energy-based attention and decoupling-free gradient modulation for two-modality fusion."""

from .energy import (
    DEFAULT_LAMBDA,
    DEFAULT_S,
    ZetaState,
    closed_form_minimizer,
    correlation_proxy,
    energy_at,
    excess_energy,
    minimal_energy_map,
    mutual_energy,
    simam2_apply,
    simam_unimodal,
    superpose,
    zeta_forward,
)
from .estimator import SimAM2Classifier, SimAMTransformer
from .fusion import FilmParams, FusionKind, apply_simam2, fuse_concat, fuse_film, fuse_summation
from .hgr import soft_hgr
from .modulation import Scheme, coefficient, modulate, ratio_decoupled, ratio_free
from .tensor import DegenerateInputError, NonFiniteError, ShapeError, Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAMBDA", "DEFAULT_S", "DegenerateInputError", "FilmParams", "FusionKind", "NonFiniteError",
    "Scheme", "ShapeError", "SimAM2Classifier", "SimAMTransformer", "Tensor", "ZetaState", "apply_simam2",
    "backward", "closed_form_minimizer", "coefficient", "correlation_proxy", "energy_at", "excess_energy",
    "fuse_concat", "fuse_film", "fuse_summation", "minimal_energy_map", "modulate", "mutual_energy",
    "no_grad", "ratio_decoupled", "ratio_free", "simam2_apply", "simam_unimodal", "soft_hgr", "superpose",
    "zeta_forward",
]
