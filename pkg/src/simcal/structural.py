"""Structural expert: anchor bonuses and hub penalties read off the pre-CSLS ranks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .ranking import ranks as _ranks
from .types import CalibConfig, SimMatrix, Stage, require_stage


@dataclass(frozen=True, eq=False)
class RankTables:
    """1-based ranks, both stored as |Q| x |C| arrays.

    ``r_row[q, c]`` is the rank of class c within query q's row;
    ``r_col[q, c]`` is the rank of query q within class c's column.
    """

    r_row: np.ndarray
    r_col: np.ndarray


@dataclass(frozen=True, eq=False)
class StructEvidence:
    anchors: np.ndarray  # bool |Q| x |C|
    hubs: np.ndarray  # bool |Q| x |C|
    popularity: np.ndarray
    hub_score: np.ndarray
    mnn: np.ndarray  # bool |Q| x |C|

    def summary(self, bins: int = 10) -> dict:
        """JSON-ready diagnostics record."""
        counts, edges = np.histogram(self.popularity, bins=bins)
        return {
            "n_queries": int(self.anchors.shape[0]),
            "n_classes": int(self.anchors.shape[1]),
            "anchor_count": int(self.anchors.sum()),
            "mnn_count": int(self.mnn.sum()),
            "hub_count": int(self.hubs.sum()),
            "popularity": self.popularity.tolist(),
            "popularity_hist": {"counts": counts.tolist(), "edges": edges.tolist()},
            "hub_score": self.hub_score.tolist(),
        }


def _scores(sim) -> np.ndarray:
    if isinstance(sim, SimMatrix):
        require_stage(sim, Stage.NEW)
        return sim.scores
    return np.asarray(sim, dtype=np.float64)


def compute_ranks(s_new) -> RankTables:
    """Row and column ranks under (score desc, index asc).

    Tied scores get distinct consecutive ranks, lower index first.
    """
    s = _scores(s_new)
    return RankTables(r_row=_ranks(s, axis=1), r_col=_ranks(s, axis=0))


def mnn_pairs(rt: RankTables) -> np.ndarray:
    return (rt.r_row == 1) & (rt.r_col == 1)


def bidirectional_topL(rt: RankTables, L: int) -> np.ndarray:
    if L < 1:
        raise errors.ValidationError(f"L must be >= 1, got {L}")
    return (rt.r_row <= L) & (rt.r_col <= L)


def popularity(rt: RankTables, K_pop: int) -> np.ndarray:
    """Number of queries that place each class within their top ``K_pop``."""
    n_c = rt.r_row.shape[1]
    if not 1 <= K_pop <= n_c:
        raise errors.ValidationError(f"K_pop={K_pop} outside [1, {n_c}]")
    return (rt.r_row <= K_pop).sum(axis=0).astype(np.int64)


def hub_score(pop) -> np.ndarray:
    """Min-max scaled popularity; all zeros when popularity is flat."""
    pop = np.asarray(pop, dtype=np.float64)
    lo, hi = pop.min(), pop.max()
    if hi == lo:
        return np.zeros_like(pop)
    return (pop - lo) / (hi - lo)


def gather_evidence(s_new, cfg: CalibConfig) -> StructEvidence:
    s = _scores(s_new)
    cfg.check(s.shape[1])
    rt = compute_ranks(s)
    mnn = mnn_pairs(rt)
    anchors = mnn | bidirectional_topL(rt, cfg.L)
    pop = popularity(rt, cfg.K_pop)
    h = hub_score(pop)
    hubs = (rt.r_row > cfg.K_pop) & (rt.r_col <= cfg.L) & (h >= cfg.h_thr)[None, :]
    hubs &= ~anchors
    return StructEvidence(anchors=anchors, hubs=hubs, popularity=pop, hub_score=h, mnn=mnn)


def build_struct_logits(s_new, cfg: CalibConfig | None = None) -> tuple[SimMatrix, StructEvidence]:
    """Sparse logits: ``+lam_anchor`` on anchors, ``-lam_pen * h(c)`` on hub pairs, else 0.

    ``s_new`` is only read.
    """
    cfg = cfg or CalibConfig()
    ev = gather_evidence(s_new, cfg)
    logits = np.zeros(ev.anchors.shape)
    logits[ev.hubs] = -cfg.lam_pen * np.broadcast_to(ev.hub_score, logits.shape)[ev.hubs]
    logits[ev.anchors] = cfg.lam_anchor
    if isinstance(s_new, SimMatrix):
        return s_new.advance(Stage.STRUCT, logits), ev
    return SimMatrix(logits, Stage.STRUCT), ev
