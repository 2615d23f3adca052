"""Test-time calibration of cross-subject embedding retrieval.

Queries from several subjects are whitened per subject, scored against a
whitened candidate pool, rescored with density-adaptive CSLS and fused with
a sparse structural expert built from mutual-neighbour and popularity
evidence.
"""

from .errors import FormatError, SimcalError, ValidationError
from .fusion import PoEWeights, calibrate, poe_fuse
from .geom import adaptive_csls, density_profile, fixed_csls
from .harness import loso_all, loso_evaluate, run, run_pipeline_sweep, sweep_beta
from .metrics import EvalReport, delta_recall, evaluate, hubness_skew, top_k_accuracy
from .similarity import base_similarity, make_snew, zscore_fit
from .structural import build_struct_logits, gather_evidence
from .synth import SynthSpec, generate
from .types import CalibConfig, EmbeddingSet, Role, SimMatrix, Stage
from .whitening import WhitenModel, saw_apply, saw_fit_per_subject

__version__ = "0.1.0"

__all__ = [
    "CalibConfig",
    "EmbeddingSet",
    "EvalReport",
    "FormatError",
    "PoEWeights",
    "Role",
    "SimMatrix",
    "SimcalError",
    "Stage",
    "SynthSpec",
    "ValidationError",
    "WhitenModel",
    "adaptive_csls",
    "base_similarity",
    "build_struct_logits",
    "calibrate",
    "delta_recall",
    "density_profile",
    "evaluate",
    "fixed_csls",
    "gather_evidence",
    "generate",
    "hubness_skew",
    "loso_all",
    "loso_evaluate",
    "make_snew",
    "poe_fuse",
    "run",
    "run_pipeline_sweep",
    "saw_apply",
    "saw_fit_per_subject",
    "sweep_beta",
    "top_k_accuracy",
    "zscore_fit",
]
