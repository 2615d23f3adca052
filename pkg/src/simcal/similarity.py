"""Temperature-scaled cosine scoring and the optional global z-score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .types import SimMatrix, Stage, require_stage

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class ZScoreStats:
    mu: float
    sigma: float
    source: str = ""


def _check_unit(x: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(x, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise errors.NotNormalized(f"{what} rows are not unit norm (max dev {np.max(np.abs(norms - 1)):.3g})")


def base_similarity(
    queries_norm: np.ndarray,
    candidates_norm: np.ndarray,
    logit_scale: float = 1.0,
    tau: float = 1.0,
    class_ids=None,
) -> SimMatrix:
    """``(logit_scale / tau) * <z_q, v_c>`` for unit-norm rows."""
    zq = np.asarray(queries_norm, dtype=np.float64)
    vc = np.asarray(candidates_norm, dtype=np.float64)
    if not tau > 0:
        raise errors.ValidationError(f"tau must be > 0, got {tau}")
    if zq.ndim != 2 or vc.ndim != 2 or zq.shape[1] != vc.shape[1]:
        raise errors.DimMismatch(f"query shape {zq.shape} vs candidate shape {vc.shape}")
    _check_unit(zq, "query")
    _check_unit(vc, "candidate")
    scores = (logit_scale / tau) * (zq @ vc.T)
    return SimMatrix(scores, Stage.BASE, class_ids=class_ids)


def zscore_fit(sim: SimMatrix | np.ndarray, source: str = "") -> ZScoreStats:
    s = np.asarray(getattr(sim, "scores", sim), dtype=np.float64)
    mu = float(s.mean())
    sigma = float(np.sqrt(np.mean((s - mu) ** 2)))
    if not sigma > 0:
        raise errors.ConstantMatrix("cannot z-score a constant matrix")
    return ZScoreStats(mu, sigma, source)


def make_snew(s_base: SimMatrix, stats: ZScoreStats | None = None) -> SimMatrix:
    require_stage(s_base, Stage.BASE)
    if stats is None:
        return s_base.advance(Stage.NEW)
    return s_base.advance(Stage.NEW, (s_base.scores - stats.mu) / stats.sigma)
