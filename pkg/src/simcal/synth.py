"""Seeded synthetic retrieval benchmark with subject shift and injected hub classes.

Random streams
--------------
All randomness comes from numpy's ``PCG64`` bit generator seeded through
``SeedSequence(entropy=seed, spawn_key=(domain, index))``:

* domain 0, index 0: class prototypes
* domain 1, index 0: choice of hub classes
* domain 2, index s: everything about subject ``s`` (distortion, shift,
  per-query noise, row order)

so adding subjects never changes the data of existing ones.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import errors
from .types import EmbeddingSet

PRNG_NAME = "PCG64"
_PROTO, _HUBS, _SUBJECT = 0, 1, 2


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs.

    Queries of class c from subject s are ``A_s (p_c + sigma_noise * eta) + b_s``
    with ``eta ~ N(0, I_d / sqrt(d))``, ``A_s = I + shift_cov * G_s`` where
    ``G_s`` has i.i.d. ``N(0, d^(-1/4))`` entries, and ``||b_s|| = shift_mean``.
    These scalings keep the default benchmark away from both saturation and
    chance at d=64. Prototypes
    ``p_c`` are unit vectors; ``anisotropy`` adds a shared offset of that
    length before normalization, the usual cone shape of learned embeddings.
    Hub candidates are pulled toward the prototype centroid with strength
    ``hub_gamma``.
    """

    seed: int = 0
    d: int = 64
    C: int = 200
    S: int = 6
    q_per_class_per_subject: int = 10
    sigma_noise: float = 0.6
    shift_mean: float = 0.5
    shift_cov: float = 0.15
    n_hub: int = 20
    hub_gamma: float = 0.7
    anisotropy: float = 0.3

    def check(self) -> None:
        bad = []
        if self.seed < 0 or self.seed >= 2**64:
            bad.append("seed must be an unsigned 64-bit integer")
        if self.d < 2 or self.C < 1 or self.S < 1 or self.q_per_class_per_subject < 1:
            bad.append("d >= 2 and C, S, q_per_class_per_subject >= 1 required")
        for name in ("sigma_noise", "shift_mean", "shift_cov", "hub_gamma", "anisotropy"):
            if getattr(self, name) < 0:
                bad.append(f"{name} must be >= 0")
        if not self.hub_gamma < 1:
            bad.append("hub_gamma must be < 1")
        if not 0 <= self.n_hub <= self.C:
            bad.append("n_hub must lie in [0, C]")
        if bad:
            raise errors.BadSpec("; ".join(bad))

    def replace(self, **changes) -> "SynthSpec":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise errors.BadSpec(f"unknown spec fields: {', '.join(unknown)}")
        spec = cls(**data)
        spec.check()
        return spec

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def noiseless(spec: SynthSpec | None = None) -> SynthSpec:
    """Same shape as ``spec`` with every distortion switched off."""
    spec = spec or SynthSpec()
    return spec.replace(sigma_noise=0.0, shift_mean=0.0, shift_cov=0.0, hub_gamma=0.0)


def _rng(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(domain, index))
    return np.random.Generator(np.random.PCG64(ss))


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def prototypes(spec: SynthSpec) -> np.ndarray:
    rng = _rng(spec.seed, _PROTO)
    g = rng.standard_normal((spec.C, spec.d))
    offset = rng.standard_normal(spec.d)
    g = _unit(g) + spec.anisotropy * _unit(offset)
    return _unit(g)


def hub_classes(spec: SynthSpec) -> np.ndarray:
    rng = _rng(spec.seed, _HUBS)
    return np.sort(rng.choice(spec.C, size=spec.n_hub, replace=False))


def generate(spec: SynthSpec | None = None) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Return ``(queries, candidates)``; fully determined by ``spec``.

    Query rows are grouped by subject and shuffled within each subject, so a
    subject's first rows form an unbiased calibration window.
    """
    spec = spec or SynthSpec()
    spec.check()
    d, C = spec.d, spec.C
    p = prototypes(spec)
    cand = p.copy()
    hubs = hub_classes(spec)
    if hubs.size:
        centroid = p.mean(axis=0)
        cand[hubs] = (1.0 - spec.hub_gamma) * p[hubs] + spec.hub_gamma * centroid

    n_per = C * spec.q_per_class_per_subject
    base_labels = np.repeat(np.arange(C), spec.q_per_class_per_subject)
    vecs, subj, labels = [], [], []
    for s in range(spec.S):
        rng = _rng(spec.seed, _SUBJECT, s)
        a = np.eye(d) + spec.shift_cov * rng.standard_normal((d, d)) / d**0.125
        b = spec.shift_mean * _unit(rng.standard_normal(d))
        eta = rng.standard_normal((n_per, d)) / d**0.25
        order = rng.permutation(n_per)
        x = (p[base_labels] + spec.sigma_noise * eta) @ a.T + b
        vecs.append(x[order])
        labels.append(base_labels[order])
        subj.append(np.full(n_per, s))
    queries = EmbeddingSet.queries(np.vstack(vecs), np.concatenate(subj), np.concatenate(labels))
    candidates = EmbeddingSet.candidates(cand, np.arange(C))
    return queries, candidates
