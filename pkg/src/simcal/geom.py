"""CSLS rescoring with fixed or density-adaptive neighborhood sizes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .ranking import top_k_means, topk_counts
from .types import CalibConfig, SimMatrix, Stage, require_stage


@dataclass(frozen=True, eq=False)
class DensityProfile:
    rho_row: np.ndarray
    rho_col: np.ndarray
    k_row: np.ndarray
    k_col: np.ndarray


def _scores(sim) -> np.ndarray:
    if isinstance(sim, SimMatrix):
        require_stage(sim, Stage.NEW)
        return sim.scores
    return np.asarray(sim, dtype=np.float64)


def row_density(s_new, m: int) -> np.ndarray:
    """Mean of the ``m`` largest similarities of every query."""
    s = _scores(s_new)
    if not 1 <= m <= s.shape[1]:
        raise errors.BadM(f"m={m} outside [1, {s.shape[1]}]")
    return top_k_means(s, m, axis=1)


def col_density(s_new, k_max: int) -> np.ndarray:
    """Fraction of queries whose top-``k_max`` list contains each class."""
    s = _scores(s_new)
    if not 1 <= k_max <= s.shape[1]:
        raise errors.BadK(f"K_max={k_max} outside [1, {s.shape[1]}]")
    return topk_counts(s, k_max) / s.shape[0]


def density_to_k(rho, k_min: int, k_max: int) -> np.ndarray:
    """Linear min-max map of densities onto integers in ``[k_min, k_max]``.

    Rounds half to even, treating values within 1e-9 of a half as exact
    halves. A constant density vector maps every entry to
    ``(k_min + k_max) // 2``.
    """
    if k_min > k_max:
        raise errors.BadK(f"k_min={k_min} > k_max={k_max}")
    rho = np.asarray(rho, dtype=np.float64)
    lo, hi = rho.min(), rho.max()
    if hi == lo:
        return np.full(rho.shape, (k_min + k_max) // 2, dtype=np.int64)
    x = (rho - lo) / (hi - lo) * (k_max - k_min)
    # snap first so a density that is a half in exact arithmetic is not
    # pushed across the rounding boundary by summation-order noise
    return (k_min + np.round(np.round(x, 9))).astype(np.int64)


def csls_terms(s_new, k_row, k_col) -> tuple[np.ndarray, np.ndarray]:
    """Neighborhood means: top-``k_row[q]`` of row q and top-``k_col[c]`` of column c."""
    s = _scores(s_new)
    try:
        r_q = top_k_means(s, k_row, axis=1)
        r_c = top_k_means(s, k_col, axis=0)
    except ValueError as exc:
        raise errors.BadK(str(exc)) from None
    return r_q, r_c


def density_profile(s_new, cfg: CalibConfig) -> DensityProfile:
    s = _scores(s_new)
    n_q, n_c = s.shape
    cfg.check(n_c)
    rho_row = row_density(s, cfg.resolved_m(n_c))
    rho_col = col_density(s, cfg.k_max)
    k_row = density_to_k(rho_row, cfg.k_min, cfg.k_max)
    # a column only has |Q| entries to average over
    k_col = np.minimum(density_to_k(rho_col, cfg.k_min, cfg.k_max), n_q)
    return DensityProfile(rho_row, rho_col, k_row, k_col)


def _assemble(sim, s: np.ndarray, r_q: np.ndarray, r_c: np.ndarray) -> SimMatrix:
    geom = 2.0 * s - r_q[:, None] - r_c[None, :]
    if isinstance(sim, SimMatrix):
        return sim.advance(Stage.GEOM, geom)
    return SimMatrix(geom, Stage.GEOM)


def adaptive_csls(s_new, cfg: CalibConfig | None = None) -> SimMatrix:
    """CSLS whose row and column neighborhood sizes follow local density."""
    cfg = cfg or CalibConfig()
    s = _scores(s_new)
    prof = density_profile(s, cfg)
    r_q, r_c = csls_terms(s, prof.k_row, prof.k_col)
    return _assemble(s_new, s, r_q, r_c)


def fixed_csls(s_new, k: int) -> SimMatrix:
    s = _scores(s_new)
    if not 1 <= k <= min(s.shape):
        raise errors.BadK(f"k={k} outside [1, {min(s.shape)}]")
    r_q, r_c = csls_terms(s, k, k)
    return _assemble(s_new, s, r_q, r_c)
