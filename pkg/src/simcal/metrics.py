"""Retrieval accuracy, per-class recall and hubness statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import errors
from .ranking import topk_counts
from .types import SimMatrix

#: per-class recall of a class that has no queries
UNDEFINED = float("nan")


def _scores(sim) -> np.ndarray:
    return np.asarray(getattr(sim, "scores", sim), dtype=np.float64)


def _true_ranks(sim, labels) -> np.ndarray:
    """Rank of each query's true column (labels are column indices)."""
    s = _scores(sim)
    if labels is None:
        raise errors.MissingLabels("metrics need a label for every query")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (s.shape[0],):
        raise errors.MissingLabels(f"{labels.size} labels for {s.shape[0]} queries")
    if labels.size and (labels.min() < 0 or labels.max() >= s.shape[1]):
        raise errors.ValidationError("label outside the candidate columns")
    true = s[np.arange(s.shape[0]), labels]
    # same total order as everywhere else: strictly better, or equal with lower index
    better = (s > true[:, None]).sum(axis=1)
    tied_before = ((s == true[:, None]) & (np.arange(s.shape[1])[None, :] < labels[:, None])).sum(axis=1)
    return 1 + better + tied_before


def _check_k(k: int, n_c: int) -> None:
    if not 1 <= k <= n_c:
        raise errors.ValidationError(f"K={k} outside [1, {n_c}]")


def top_k_accuracy(sim, labels, k: int) -> float:
    s = _scores(sim)
    _check_k(k, s.shape[1])
    return float(np.mean(_true_ranks(s, labels) <= k))


def recall_at_k_per_class(sim, labels, k: int) -> np.ndarray:
    """Per-column recall@k; classes without queries get NaN."""
    s = _scores(sim)
    _check_k(k, s.shape[1])
    hit = _true_ranks(s, labels) <= k
    labels = np.asarray(labels, dtype=np.int64)
    n = np.bincount(labels, minlength=s.shape[1]).astype(np.float64)
    hits = np.bincount(labels, weights=hit.astype(np.float64), minlength=s.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = hits / n
    out[n == 0] = UNDEFINED
    return out


def mean_defined(recall: np.ndarray) -> float:
    return float(np.nanmean(recall)) if np.any(~np.isnan(recall)) else UNDEFINED


def popularity_histogram(sim, k: int) -> np.ndarray:
    """N_K(c): how many queries hold class c within their top ``k``."""
    s = _scores(sim)
    _check_k(k, s.shape[1])
    return topk_counts(s, k)


def hubness_skew(counts) -> float:
    """Population skewness of a k-occurrence vector; 0 for a constant vector."""
    x = np.asarray(counts, dtype=np.float64)
    if x.size < 2:
        raise errors.ValidationError("skewness needs at least two classes")
    mu = x.mean()
    m2 = np.mean((x - mu) ** 2)
    if m2 == 0:
        return 0.0
    m3 = np.mean((x - mu) ** 3)
    return float(m3 / m2**1.5)


def delta_recall(a, b, k: int | None = None) -> tuple[np.ndarray, float]:
    """``recall_b - recall_a`` per class and its mean over the defined classes.

    ``a`` and ``b`` are per-class recall vectors, or :class:`EvalReport`
    objects together with the cutoff ``k``.
    """
    if isinstance(a, EvalReport) or isinstance(b, EvalReport):
        if k is None:
            raise errors.ValidationError("comparing reports needs K")
        try:
            a, b = a.per_class_recall[k], b.per_class_recall[k]
        except KeyError:
            raise errors.ValidationError(f"report lacks recall@{k}") from None
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or not np.array_equal(np.isnan(a), np.isnan(b)):
        raise errors.ClassSetMismatch("recall vectors cover different class sets")
    d = b - a
    return d, mean_defined(d)


@dataclass
class EvalReport:
    """Evaluation of one score matrix (one fold, one pipeline configuration)."""

    top_k_acc: dict[int, float] = field(default_factory=dict)
    per_class_recall: dict[int, np.ndarray] = field(default_factory=dict)
    popularity_hist: dict[str, np.ndarray] = field(default_factory=dict)
    hubness_skew: dict[str, float] = field(default_factory=dict)
    per_subject_acc: dict[str, dict[int, float]] = field(default_factory=dict)
    n_queries: int = 0

    def to_dict(self) -> dict:
        def vec(v):
            return [None if np.isnan(x) else float(x) for x in v]

        return {
            "n_queries": self.n_queries,
            "top_k_acc": {str(k): v for k, v in self.top_k_acc.items()},
            "per_class_recall": {str(k): vec(v) for k, v in self.per_class_recall.items()},
            "popularity_hist": {k: [int(x) for x in v] for k, v in self.popularity_hist.items()},
            "hubness_skew": dict(self.hubness_skew),
            "per_subject_acc": {
                s: {str(k): v for k, v in accs.items()} for s, accs in self.per_subject_acc.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        def vec(v):
            return np.array([np.nan if x is None else x for x in v], dtype=np.float64)

        return cls(
            top_k_acc={int(k): float(v) for k, v in d["top_k_acc"].items()},
            per_class_recall={int(k): vec(v) for k, v in d["per_class_recall"].items()},
            popularity_hist={k: np.array(v, dtype=np.int64) for k, v in d["popularity_hist"].items()},
            hubness_skew={k: float(v) for k, v in d["hubness_skew"].items()},
            per_subject_acc={
                s: {int(k): float(v) for k, v in accs.items()} for s, accs in d["per_subject_acc"].items()
            },
            n_queries=int(d.get("n_queries", 0)),
        )


def evaluate(
    sim: SimMatrix | np.ndarray,
    labels,
    ks=(1, 5, 10),
    stage_name: str = "final",
    subjects=None,
    subject_names=None,
    hub_k: int = 5,
) -> EvalReport:
    """Build an :class:`EvalReport`. ``labels`` are column indices of the true class."""
    s = _scores(sim)
    ks = sorted(set(int(k) for k in ks))
    rep = EvalReport(n_queries=s.shape[0])
    rank = _true_ranks(s, labels)
    for k in ks:
        _check_k(k, s.shape[1])
        rep.top_k_acc[k] = float(np.mean(rank <= k))
        rep.per_class_recall[k] = recall_at_k_per_class(s, labels, k)
    pop = popularity_histogram(s, min(hub_k, s.shape[1]))
    rep.popularity_hist[stage_name] = pop
    rep.hubness_skew[stage_name] = hubness_skew(pop) if pop.size >= 2 else 0.0
    if subjects is not None:
        subjects = np.asarray(subjects)
        for sid in np.unique(subjects):
            name = str(subject_names[sid]) if subject_names is not None else str(sid)
            mask = subjects == sid
            rep.per_subject_acc[name] = {k: float(np.mean(rank[mask] <= k)) for k in ks}
    return rep


__all__ = [
    "EvalReport",
    "UNDEFINED",
    "delta_recall",
    "evaluate",
    "hubness_skew",
    "mean_defined",
    "popularity_histogram",
    "recall_at_k_per_class",
    "top_k_accuracy",
]
