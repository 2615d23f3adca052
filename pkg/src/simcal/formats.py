"""Binary file formats: EMB1 embeddings, SIM1 score matrices, WMD1 whitening models.

All integers and floats are little-endian and headers are packed without
padding.

EMB1   ``b"EMB1" | u32 version=1 | u64 rows | u64 dim`` then ``rows*dim`` f32,
       row-major. Metadata lives in a JSON sidecar next to it (``q.emb1`` ->
       ``q.json``) with keys ``role``, ``subject_of``, ``label_of`` (or null),
       ``class_names`` (or null) and ``subject_name_map`` (dense id -> tag).
SIM1   ``b"SIM1" | u32 version=1 | u64 n_q | u64 n_c | u8 stage`` then
       ``n_q*n_c`` f32, row-major. Columns follow the candidate file's row order.
WMD1   ``b"WMD1" | u32 version=1 | u64 n_models | u64 dim`` then per model
       ``i64 subject | f64 lambda | u64 n_fit | f64 mean[dim] | f64 w[dim*dim]``.

Writes go to a temporary file in the target directory and are renamed into
place, so readers never see a half-written file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from . import errors
from .types import EmbeddingSet, Role, SimMatrix, Stage, validate
from .whitening import WhitenModel

VERSION = 1
_EMB_HEAD = struct.Struct("<4sIQQ")
_SIM_HEAD = struct.Struct("<4sIQQB")
_WMD_HEAD = struct.Struct("<4sIQQ")
_WMD_MODEL = struct.Struct("<qdQ")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _header(raw: bytes, head: struct.Struct, magic: bytes, path) -> tuple:
    if len(raw) < 4 or raw[:4] != magic:
        raise errors.BadMagic(f"{path}: not a {magic.decode()} file")
    if len(raw) < head.size:
        raise errors.TruncatedPayload(f"{path}: header cut short")
    fields = head.unpack_from(raw)
    if fields[1] != VERSION:
        raise errors.VersionUnsupported(f"{path}: version {fields[1]}, only {VERSION} is supported")
    return fields


def _payload(raw: bytes, offset: int, count: int, dtype: np.dtype, path) -> np.ndarray:
    need = offset + count * dtype.itemsize
    if len(raw) < need:
        raise errors.TruncatedPayload(f"{path}: expected {need} bytes, found {len(raw)}")
    if len(raw) > need:
        raise errors.FormatError(f"{path}: {len(raw) - need} trailing bytes")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset)


def _to_f32(x: np.ndarray, what: str) -> bytes:
    with np.errstate(over="ignore"):
        out = np.ascontiguousarray(x, dtype=_F32)
    if not np.all(np.isfinite(out)):
        raise errors.NonFinite(f"{what} does not fit in 32-bit floats")
    return out.tobytes()


# --------------------------------------------------------------------------
# EMB1


def write_emb1(path, emb: EmbeddingSet, class_names=None) -> None:
    validate(emb)
    if class_names is not None and len(class_names) != emb.n:
        raise errors.SidecarMismatch(f"{len(class_names)} class names for {emb.n} rows")
    meta = {
        "role": emb.role.value,
        "subject_of": emb.subject_of.tolist(),
        "label_of": None if emb.label_of is None else emb.label_of.tolist(),
        "class_names": None if class_names is None else [str(c) for c in class_names],
        "subject_name_map": {str(i): name for i, name in enumerate(emb.subject_names)},
    }
    payload = _to_f32(emb.vectors, "embedding")
    write_json(sidecar_path(path), meta)
    atomic_write(path, _EMB_HEAD.pack(b"EMB1", VERSION, emb.n, emb.dim) + payload)


def read_emb1_meta(path) -> dict:
    """Load and sanity-check an EMB1 sidecar (``path`` may be the .emb1 or .json)."""
    side = sidecar_path(path)
    try:
        meta = json.loads(Path(side).read_text())
    except json.JSONDecodeError as exc:
        raise errors.SidecarMismatch(f"{side}: invalid JSON ({exc})") from None
    if not isinstance(meta, dict) or "role" not in meta or "subject_of" not in meta:
        raise errors.SidecarMismatch(f"{side}: needs at least 'role' and 'subject_of'")
    if meta["role"] not in (Role.QUERY.value, Role.CANDIDATE.value):
        raise errors.SidecarMismatch(f"{side}: unknown role {meta['role']!r}")
    return meta


def read_emb1(path) -> EmbeddingSet:
    raw = Path(path).read_bytes()
    _, _, rows, dim = _header(raw, _EMB_HEAD, b"EMB1", path)
    vec = _payload(raw, _EMB_HEAD.size, rows * dim, _F32, path).reshape(rows, dim)
    meta = read_emb1_meta(path)
    lengths = {"subject_of": len(meta["subject_of"])}
    for key in ("label_of", "class_names"):
        if meta.get(key) is not None:
            lengths[key] = len(meta[key])
    bad = {k: v for k, v in lengths.items() if v != rows}
    if bad:
        raise errors.SidecarMismatch(f"{path}: sidecar lengths {bad} do not match {rows} rows")
    name_map = meta.get("subject_name_map") or {}
    subj = np.asarray(meta["subject_of"], dtype=np.int64)
    n_subj = int(subj.max()) + 1 if subj.size else 0
    names = tuple(name_map.get(str(i), i) for i in range(n_subj))
    emb = EmbeddingSet(vec.astype(np.float64), subj, meta.get("label_of"), Role(meta["role"]), names)
    try:
        validate(emb)
    except errors.ValidationError as exc:
        raise errors.SidecarMismatch(f"{path}: {exc}") from None
    return emb


# --------------------------------------------------------------------------
# SIM1


def encode_sim1(sim: SimMatrix) -> bytes:
    nq, nc = sim.shape
    return _SIM_HEAD.pack(b"SIM1", VERSION, nq, nc, int(sim.stage)) + _to_f32(sim.scores, "score matrix")


def write_sim1(path, sim: SimMatrix) -> None:
    atomic_write(path, encode_sim1(sim))


def read_sim1(path, class_ids=None) -> SimMatrix:
    """Read a score matrix; ``class_ids`` optionally relabels the columns."""
    raw = Path(path).read_bytes()
    _, _, nq, nc, stage = _header(raw, _SIM_HEAD, b"SIM1", path)
    if stage > max(Stage):
        raise errors.FormatError(f"{path}: unknown stage byte {stage}")
    s = _payload(raw, _SIM_HEAD.size, nq * nc, _F32, path).reshape(nq, nc)
    return SimMatrix(s.astype(np.float64), Stage(stage), class_ids=class_ids)


# --------------------------------------------------------------------------
# WMD1


def write_wmd1(path, models: dict[int, WhitenModel]) -> None:
    if not models:
        raise errors.ValidationError("no whitening models to write")
    dims = {m.dim for m in models.values()}
    if len(dims) != 1:
        raise errors.DimMismatch(f"models disagree on dimension: {sorted(dims)}")
    (d,) = dims
    parts = [_WMD_HEAD.pack(b"WMD1", VERSION, len(models), d)]
    for sid in sorted(models):
        m = models[sid]
        parts.append(_WMD_MODEL.pack(int(sid), float(m.lambda_reg), int(m.n_fit)))
        parts.append(np.ascontiguousarray(m.mean, dtype=_F64).tobytes())
        parts.append(np.ascontiguousarray(m.w, dtype=_F64).tobytes())
    atomic_write(path, b"".join(parts))


def read_wmd1(path) -> dict[int, WhitenModel]:
    raw = Path(path).read_bytes()
    _, _, n_models, d = _header(raw, _WMD_HEAD, b"WMD1", path)
    per = _WMD_MODEL.size + 8 * (d + d * d)
    _payload(raw, _WMD_HEAD.size, n_models * per, np.dtype("u1"), path)
    models = {}
    off = _WMD_HEAD.size
    for _ in range(n_models):
        sid, lam, n_fit = _WMD_MODEL.unpack_from(raw, off)
        off += _WMD_MODEL.size
        mean = np.frombuffer(raw, _F64, d, off).copy()
        off += 8 * d
        w = np.frombuffer(raw, _F64, d * d, off).reshape(d, d).copy()
        off += 8 * d * d
        if sid in models:
            raise errors.FormatError(f"{path}: subject {sid} stored twice")
        models[sid] = WhitenModel(mean=mean, w=w, lambda_reg=lam, n_fit=n_fit)
    return models
