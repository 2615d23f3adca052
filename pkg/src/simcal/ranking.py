"""Deterministic ordering helpers.

Every ranking in the package uses one total order: higher score first,
ties broken by the lower index.
"""

from __future__ import annotations

import numpy as np


def order_desc(scores: np.ndarray, axis: int = 1) -> np.ndarray:
    """Indices that sort ``scores`` along ``axis`` by (score desc, index asc)."""
    # stable sort of the negated scores keeps equal entries in index order
    return np.argsort(-np.asarray(scores, dtype=np.float64), axis=axis, kind="stable")


def ranks(scores: np.ndarray, axis: int = 1) -> np.ndarray:
    """1-based ranks along ``axis``; each line is a permutation of ``1..n``."""
    order = order_desc(scores, axis)
    out = np.empty_like(order)
    n = scores.shape[axis]
    positions = np.arange(1, n + 1)
    if axis == 1:
        np.put_along_axis(out, order, positions[None, :].repeat(order.shape[0], 0), axis=1)
    else:
        np.put_along_axis(out, order, positions[:, None].repeat(order.shape[1], 1), axis=0)
    return out


def sorted_desc(scores: np.ndarray, axis: int = 1) -> np.ndarray:
    return np.take_along_axis(np.asarray(scores, dtype=np.float64), order_desc(scores, axis), axis=axis)


def top_k_means(scores: np.ndarray, k, axis: int = 1) -> np.ndarray:
    """Mean of the ``k`` largest entries of each row (``axis=1``) or column (``axis=0``).

    ``k`` is a scalar or one size per line.
    """
    s = sorted_desc(scores, axis)
    if axis == 0:
        s = s.T
    n_lines, n = s.shape
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), (n_lines,))
    if np.any(k < 1) or np.any(k > n):
        raise ValueError(f"neighborhood sizes must lie in [1, {n}]")
    csum = np.cumsum(s, axis=1)
    return csum[np.arange(n_lines), k - 1] / k


def topk_counts(scores: np.ndarray, k: int) -> np.ndarray:
    """Per column, how many rows place it within their top ``k``."""
    order = order_desc(scores, axis=1)[:, :k]
    return np.bincount(order.ravel(), minlength=scores.shape[1]).astype(np.int64)
