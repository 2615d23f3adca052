"""Regularized ZCA whitening for query subjects and the candidate pool."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import errors
from .types import EmbeddingSet, Role

log = logging.getLogger(__name__)

LAMBDA_REL = 0.3
LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class WhitenModel:
    """Fitted transform ``x -> w @ (x - mean)`` with ``w = (cov + lambda I)^(-1/2)``."""

    mean: np.ndarray
    w: np.ndarray
    lambda_reg: float
    n_fit: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def default_lambda(cov: np.ndarray) -> float:
    d = cov.shape[0]
    return max(LAMBDA_REL * float(np.trace(cov)) / d, LAMBDA_FLOOR)


def fit(vectors: np.ndarray, lambda_reg: float | None = None) -> WhitenModel:
    """Fit a whitening transform to the rows of ``vectors``.

    The covariance is the population one (divided by N), so a single row
    gives a zero covariance and ``w = lambda^(-1/2) I``. ``lambda_reg=None``
    picks ``LAMBDA_REL * trace(cov) / d`` floored at ``LAMBDA_FLOOR``.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise errors.DegenerateInput("cannot fit whitening on zero samples")
    if lambda_reg is not None and not lambda_reg > 0:
        raise errors.ValidationError(f"lambda_reg must be > 0, got {lambda_reg}")
    n, d = x.shape
    if n < d / 4:
        log.warning("whitening fit on %d samples in dimension %d; relying on ridge", n, d)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / n
    cov = 0.5 * (cov + cov.T)
    lam = default_lambda(cov) if lambda_reg is None else float(lambda_reg)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    w = (evecs * (1.0 / np.sqrt(evals + lam))) @ evecs.T
    w = 0.5 * (w + w.T)
    return WhitenModel(mean=mean, w=w, lambda_reg=lam, n_fit=n)


def apply(model: WhitenModel, vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise errors.DimMismatch(f"expected rows of length {model.dim}, got shape {x.shape}")
    # w is symmetric, so right-multiplying rows equals w @ (x - mean) per row
    return (x - model.mean) @ model.w


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms[:, 0] == 0)
        raise errors.ZeroVector(f"zero-norm rows: {bad[:10].tolist()}")
    return x / norms


def saw_fit_per_subject(
    queries: EmbeddingSet,
    lambda_reg: float | None = None,
    window: int | None = None,
) -> dict[int, WhitenModel]:
    """Fit one whitening model per query subject on that subject's rows only.

    With ``window`` set, only the first ``window`` rows of each subject are
    used (calibrate once, then freeze).
    """
    if queries.role is not Role.QUERY:
        raise errors.ValidationError("subject-adaptive whitening needs a query set")
    models = {}
    for s in range(queries.n_subjects):
        rows = queries.rows_of_subject(s)
        if window is not None:
            if not 1 <= window <= rows.size:
                raise errors.WindowTooLarge(f"window {window} outside [1, {rows.size}] for subject {s}")
            rows = rows[:window]
        models[s] = fit(queries.vectors[rows], lambda_reg)
    return models


def saw_apply(queries: EmbeddingSet, models: dict[int, WhitenModel]) -> np.ndarray:
    """Whiten every query with the model of its own subject (no normalization)."""
    out = np.empty_like(queries.vectors)
    for s in range(queries.n_subjects):
        rows = queries.rows_of_subject(s)
        if s not in models:
            raise errors.UnknownSubject(f"no whitening model for subject {queries.subject_names[s]!r}")
        out[rows] = apply(models[s], queries.vectors[rows])
    return out
