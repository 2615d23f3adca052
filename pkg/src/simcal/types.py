"""Shared data model: embedding sets, similarity matrices and the calibration config."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from . import errors

POOL_SUBJECT = "pool"


class Role(str, enum.Enum):
    QUERY = "query"
    CANDIDATE = "candidate"


class Stage(enum.IntEnum):
    """Provenance of a score matrix. Values double as the SIM1 stage byte."""

    BASE = 0
    NEW = 1
    GEOM = 2
    STRUCT = 3
    FINAL = 4


_NEXT_STAGES = {
    Stage.BASE: {Stage.NEW},
    Stage.NEW: {Stage.GEOM, Stage.STRUCT},
    Stage.GEOM: {Stage.FINAL},
    Stage.STRUCT: {Stage.FINAL},
    Stage.FINAL: set(),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def canonicalize_subjects(subjects: Iterable[Hashable]) -> tuple[np.ndarray, tuple]:
    """Map arbitrary subject tags to dense ids ``0..S-1``.

    Ids follow the sorted order of the distinct tags (tags are compared as
    strings when they are not mutually orderable). Returns ``(ids, names)``
    with ``names[i]`` the original tag of id ``i``.
    """
    subjects = [s.item() if isinstance(s, np.generic) else s for s in subjects]
    uniq = set(subjects)
    try:
        names = tuple(sorted(uniq))
    except TypeError:
        names = tuple(sorted(uniq, key=str))
    index = {name: i for i, name in enumerate(names)}
    ids = np.array([index[s] for s in subjects], dtype=np.int64)
    return ids, names


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Rows of embedding vectors plus subject tags and optional class ids.

    Queries carry a subject id per row and (optionally) a class label;
    candidates carry the class id each row is a prototype for and all sit
    in the single sentinel subject ``"pool"``.
    """

    vectors: np.ndarray
    subject_of: np.ndarray
    label_of: np.ndarray | None
    role: Role
    subject_names: tuple = ()

    def __post_init__(self):
        try:
            vec = np.array(self.vectors, dtype=np.float64, copy=True)
        except (TypeError, ValueError):
            raise errors.ValidationError("embedding vectors must be numeric") from None
        if vec.ndim == 1:
            vec = vec[None, :]
        object.__setattr__(self, "vectors", _frozen(vec))
        object.__setattr__(self, "subject_of", _frozen(np.array(self.subject_of, dtype=np.int64)))
        if self.label_of is not None:
            object.__setattr__(self, "label_of", _frozen(np.array(self.label_of, dtype=np.int64)))
        object.__setattr__(self, "role", Role(self.role))
        if not self.subject_names:
            n_subj = int(self.subject_of.max()) + 1 if self.subject_of.size else 0
            object.__setattr__(self, "subject_names", tuple(range(n_subj)))

    @classmethod
    def queries(cls, vectors, subjects: Sequence[Hashable], labels=None) -> "EmbeddingSet":
        ids, names = canonicalize_subjects(subjects)
        out = cls(vectors, ids, labels, Role.QUERY, names)
        validate(out)
        return out

    @classmethod
    def candidates(cls, vectors, class_ids=None) -> "EmbeddingSet":
        vectors = np.asarray(vectors, dtype=np.float64)
        n = vectors.shape[0] if vectors.ndim == 2 else 1
        if class_ids is None:
            class_ids = np.arange(n)
        out = cls(vectors, np.zeros(n, dtype=np.int64), class_ids, Role.CANDIDATE, (POOL_SUBJECT,))
        validate(out)
        return out

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_subjects(self) -> int:
        return len(self.subject_names)

    def rows_of_subject(self, subject: int) -> np.ndarray:
        return np.flatnonzero(self.subject_of == subject)

    def subset(self, rows) -> "EmbeddingSet":
        """Select rows; subject ids are re-canonicalized, names carried over."""
        rows = np.asarray(rows)
        old = self.subject_of[rows]
        ids, kept = canonicalize_subjects(old.tolist())
        names = tuple(self.subject_names[k] for k in kept)
        labels = None if self.label_of is None else self.label_of[rows]
        return EmbeddingSet(self.vectors[rows], ids, labels, self.role, names)

    def without_labels(self) -> "EmbeddingSet":
        return dataclasses.replace(self, label_of=None)

    def with_vectors(self, vectors: np.ndarray) -> "EmbeddingSet":
        return dataclasses.replace(self, vectors=vectors)


def validate(emb: EmbeddingSet) -> None:
    """Raise if ``emb`` breaks any EmbeddingSet invariant; return None otherwise."""
    vec = np.asarray(emb.vectors)
    if vec.ndim != 2 or vec.shape[0] < 1:
        raise errors.EmptySet("embedding set has no rows")
    if vec.shape[1] < 2:
        raise errors.DimTooSmall(f"dimension {vec.shape[1]} < 2")
    if not np.all(np.isfinite(vec)):
        raise errors.NonFinite("embedding contains NaN or Inf")
    n = vec.shape[0]
    subj = np.asarray(emb.subject_of)
    if subj.shape != (n,):
        raise errors.ShapeMismatch(f"subject_of has shape {subj.shape}, expected ({n},)")
    if subj.min() < 0 or not np.array_equal(np.unique(subj), np.arange(subj.max() + 1)):
        raise errors.ValidationError("subject ids are not contiguous 0..S-1")
    if emb.label_of is not None:
        labels = np.asarray(emb.label_of)
        if labels.shape != (n,):
            raise errors.ShapeMismatch(f"label_of has shape {labels.shape}, expected ({n},)")
        if labels.size and labels.min() < 0:
            raise errors.ValidationError("negative class id")
    if emb.role is Role.CANDIDATE:
        if emb.label_of is None:
            raise errors.ValidationError("candidate set needs class ids")
        uniq, counts = np.unique(emb.label_of, return_counts=True)
        if np.any(counts > 1):
            raise errors.DuplicateClass(f"class ids repeated: {uniq[counts > 1].tolist()}")


@dataclass(frozen=True, eq=False)
class SimMatrix:
    """Dense |Q| x |C| score matrix tagged with the stage that produced it."""

    scores: np.ndarray
    stage: Stage
    query_ids: np.ndarray | None = None
    class_ids: np.ndarray | None = None

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64, copy=True)
        if s.ndim != 2:
            raise errors.ShapeMismatch(f"score matrix must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise errors.NonFinite("score matrix contains NaN or Inf")
        object.__setattr__(self, "scores", _frozen(s))
        object.__setattr__(self, "stage", Stage(self.stage))
        nq, nc = s.shape
        qi = np.arange(nq) if self.query_ids is None else np.array(self.query_ids, dtype=np.int64)
        ci = np.arange(nc) if self.class_ids is None else np.array(self.class_ids, dtype=np.int64)
        if qi.shape != (nq,) or ci.shape != (nc,):
            raise errors.ShapeMismatch("index maps do not match score shape")
        if len(np.unique(qi)) != nq or len(np.unique(ci)) != nc:
            raise errors.ValidationError("index maps must be bijections")
        object.__setattr__(self, "query_ids", _frozen(qi))
        object.__setattr__(self, "class_ids", _frozen(ci))

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def advance(self, stage: Stage, scores: np.ndarray | None = None) -> "SimMatrix":
        """Return a matrix at ``stage``; only forward pipeline transitions are legal."""
        stage = Stage(stage)
        if stage not in _NEXT_STAGES[self.stage]:
            raise errors.WrongStage(f"cannot go from {self.stage.name} to {stage.name}")
        new = self.scores if scores is None else scores
        if np.shape(new) != self.shape:
            raise errors.ShapeMismatch(f"{np.shape(new)} != {self.shape}")
        return SimMatrix(new, stage, self.query_ids, self.class_ids)

    def column_of(self, class_ids) -> np.ndarray:
        """Translate class ids into column indices."""
        lookup = {int(c): j for j, c in enumerate(self.class_ids)}
        try:
            return np.array([lookup[int(c)] for c in np.atleast_1d(class_ids)], dtype=np.int64)
        except KeyError as exc:
            raise errors.ClassSetMismatch(f"class id {exc.args[0]} not among the candidates") from None


def require_stage(sim: SimMatrix, *stages: Stage) -> None:
    if sim.stage not in stages:
        names = "/".join(s.name for s in stages)
        raise errors.WrongStage(f"expected stage {names}, got {sim.stage.name}")


CSLS_MODES = ("off", "fixed", "adaptive")


@dataclass(frozen=True)
class CalibConfig:
    """Every pipeline hyperparameter.

    ``lambda_reg=None`` selects the relative ridge
    ``whitening.LAMBDA_REL * trace(cov) / d`` (floored at 1e-6) separately for every fitted covariance, and
    ``m_density=None`` resolves to ``min(50, n_classes)``. ``logit_scale``
    multiplies cosines before the temperature; ``poe_alpha`` is the weight
    of the geometric expert in the fused score. ``k_max`` also serves as the
    top-K cutoff for the column density.
    """

    lambda_reg: float | None = None
    tau: float = 1.0
    logit_scale: float = 1.0
    zscore: bool = False
    m_density: int | None = None
    k_min: int = 5
    k_max: int = 20
    k_fixed: int = 12
    L: int = 5
    K_pop: int = 5
    h_thr: float = 0.5
    lam_anchor: float = 1.0
    lam_pen: float = 1.0
    poe_alpha: float = 1.0
    poe_beta: float = 1.9
    saw: bool = True
    cw: bool = True
    csls_mode: str = "adaptive"
    struct_poe: bool = True

    def replace(self, **changes: Any) -> "CalibConfig":
        return dataclasses.replace(self, **changes)

    def resolved_m(self, n_classes: int) -> int:
        return min(50, n_classes) if self.m_density is None else self.m_density

    def check(self, n_classes: int | None = None) -> None:
        """Raise :class:`BadConfig` on any violated invariant.

        Bounds that involve the class count are checked only when it is given.
        """
        bad = []
        if self.lambda_reg is not None and not self.lambda_reg > 0:
            bad.append("lambda_reg must be > 0")
        if not self.tau > 0:
            bad.append("tau must be > 0")
        if not 1 <= self.k_min <= self.k_max:
            bad.append("need 1 <= k_min <= k_max")
        if self.k_fixed < 1:
            bad.append("k_fixed must be >= 1")
        if self.L < 1 or self.K_pop < 1:
            bad.append("L and K_pop must be >= 1")
        if not 0.0 <= self.h_thr <= 1.0:
            bad.append("h_thr must lie in [0, 1]")
        if not (self.lam_anchor > 0 and self.lam_pen > 0):
            bad.append("lam_anchor and lam_pen must be > 0")
        if self.poe_alpha < 0 or self.poe_beta < 0:
            bad.append("poe weights must be >= 0")
        if self.poe_alpha + self.poe_beta <= 0:
            bad.append("poe_alpha + poe_beta must be > 0")
        if self.csls_mode not in CSLS_MODES:
            bad.append(f"csls_mode must be one of {CSLS_MODES}")
        if self.m_density is not None and self.m_density < self.k_max:
            bad.append("m_density must be >= k_max")
        if n_classes is not None:
            if self.k_max > n_classes:
                bad.append(f"k_max {self.k_max} exceeds {n_classes} classes")
            if self.L > n_classes or self.K_pop > n_classes:
                bad.append(f"L and K_pop must be <= {n_classes}")
            if self.resolved_m(n_classes) > n_classes:
                bad.append(f"m_density exceeds {n_classes} classes")
            if self.resolved_m(n_classes) < self.k_max:
                bad.append("resolved m_density is smaller than k_max")
        if bad:
            raise errors.BadConfig("; ".join(bad))

    # JSON round trip -------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CalibConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise errors.BadConfig(f"unknown config fields: {', '.join(unknown)}")
        cfg = cls(**data)
        try:
            cfg.check()
        except TypeError:
            raise errors.BadConfig("config field has the wrong type") from None
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "CalibConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise errors.BadConfig(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise errors.BadConfig("config must be a JSON object")
        return cls.from_dict(data)

