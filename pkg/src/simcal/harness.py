"""End-to-end scoring, the leave-one-subject-out harness and parameter sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import errors, whitening
from .fusion import calibrate
from .metrics import EvalReport, evaluate, hubness_skew
from .similarity import ZScoreStats, base_similarity, make_snew, zscore_fit
from .structural import gather_evidence
from .types import CalibConfig, EmbeddingSet, Role, SimMatrix

DEFAULT_KS = (1, 2, 5, 10, 20)


def worker_count() -> int:
    """Worker cap from ``SIMCAL_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("SIMCAL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise errors.ValidationError(f"SIMCAL_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise errors.ValidationError("SIMCAL_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _ordered_map(fn, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# embeddings -> pre-CSLS matrix


def normalize_candidates(candidates: EmbeddingSet, cfg: CalibConfig) -> np.ndarray:
    if cfg.cw:
        model = whitening.fit(candidates.vectors, cfg.lambda_reg)
        return whitening.l2_normalize(whitening.apply(model, candidates.vectors))
    return whitening.l2_normalize(candidates.vectors)


def normalize_queries(
    queries: EmbeddingSet,
    cfg: CalibConfig,
    models: dict[int, whitening.WhitenModel] | None = None,
) -> np.ndarray:
    if not cfg.saw:
        return whitening.l2_normalize(queries.vectors)
    if models is None:
        models = whitening.saw_fit_per_subject(queries, cfg.lambda_reg)
    return whitening.l2_normalize(whitening.saw_apply(queries, models))


def base_scores(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    models: dict[int, whitening.WhitenModel] | None = None,
) -> SimMatrix:
    if candidates.role is not Role.CANDIDATE:
        raise errors.ValidationError("second argument must be a candidate set")
    zq = normalize_queries(queries, cfg, models)
    vc = normalize_candidates(candidates, cfg)
    return base_similarity(zq, vc, cfg.logit_scale, cfg.tau, class_ids=candidates.label_of)


def pre_csls(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    models: dict[int, whitening.WhitenModel] | None = None,
    zstats: ZScoreStats | None = None,
) -> SimMatrix:
    """The pre-CSLS matrix. With ``cfg.zscore`` and no ``zstats`` the statistics
    come from this very matrix."""
    s_base = base_scores(queries, candidates, cfg, models)
    if cfg.zscore and zstats is None:
        zstats = zscore_fit(s_base, source="self")
    return make_snew(s_base, zstats if cfg.zscore else None)


def run(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    models: dict[int, whitening.WhitenModel] | None = None,
) -> SimMatrix:
    """Embeddings to final calibrated scores in one call; labels are never read."""
    cfg.check(candidates.n)
    return calibrate(pre_csls(queries, candidates, cfg, models), cfg)


def query_columns(queries: EmbeddingSet, sim: SimMatrix) -> np.ndarray:
    if queries.label_of is None:
        raise errors.MissingLabels("queries carry no labels")
    return sim.column_of(queries.label_of)


# --------------------------------------------------------------------------
# leave-one-subject-out


def _subject_id(queries: EmbeddingSet, held_out) -> int:
    if isinstance(held_out, (int, np.integer)) and 0 <= held_out < queries.n_subjects:
        return int(held_out)
    if held_out in queries.subject_names:
        return queries.subject_names.index(held_out)
    raise errors.UnknownSubject(f"subject {held_out!r} not among {list(queries.subject_names)}")


def fold_scores(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    held_out,
    window: int | None = None,
) -> tuple[SimMatrix, EmbeddingSet]:
    """Final scores for the held-out subject's queries, plus that query subset.

    Whitening for the held-out subject is fit on its own unlabeled rows only
    (the first ``window`` rows in window mode) and then applied to all of
    them. Z-score statistics, when enabled, come from the other subjects.
    """
    cfg.check(candidates.n)
    sid = _subject_id(queries, held_out)
    rows = queries.rows_of_subject(sid)
    test = queries.subset(rows).without_labels()
    if window is not None and not 1 <= window <= rows.size:
        raise errors.WindowTooLarge(f"window {window} outside [1, {rows.size}]")
    models = None
    if cfg.saw:
        fit_rows = test.vectors if window is None else test.vectors[:window]
        models = {0: whitening.fit(fit_rows, cfg.lambda_reg)}
    zstats = None
    if cfg.zscore:
        others = np.flatnonzero(queries.subject_of != sid)
        if others.size:
            dev = queries.subset(others).without_labels()
            zstats = zscore_fit(base_scores(dev, candidates, cfg), source="other subjects")
    s_new = pre_csls(test, candidates, cfg, models, zstats)
    return calibrate(s_new, cfg), queries.subset(rows)


def loso_evaluate(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    held_out,
    window: int | None = None,
    ks=DEFAULT_KS,
    hub_k: int = 5,
) -> EvalReport:
    final, test = fold_scores(queries, candidates, cfg, held_out, window)
    labels = query_columns(test, final)
    return evaluate(
        final,
        labels,
        ks=[k for k in ks if k <= candidates.n],
        subjects=test.subject_of,
        subject_names=test.subject_names,
        hub_k=hub_k,
    )


def average_reports(reports: list[EvalReport]) -> EvalReport:
    """Fold-average: mean accuracies, mean per-class recall, summed popularity."""
    if not reports:
        raise errors.ValidationError("nothing to average")
    out = EvalReport(n_queries=sum(r.n_queries for r in reports))
    for k in reports[0].top_k_acc:
        out.top_k_acc[k] = float(np.mean([r.top_k_acc[k] for r in reports]))
        stack = np.vstack([r.per_class_recall[k] for r in reports])
        with np.errstate(invalid="ignore"):
            defined = ~np.isnan(stack)
            sums = np.where(defined, stack, 0.0).sum(axis=0)
            cnt = defined.sum(axis=0)
            out.per_class_recall[k] = np.where(cnt > 0, sums / np.maximum(cnt, 1), np.nan)
    for name in reports[0].popularity_hist:
        pop = np.sum([r.popularity_hist[name] for r in reports], axis=0)
        out.popularity_hist[name] = pop
        out.hubness_skew[name] = float(np.mean([r.hubness_skew[name] for r in reports]))
    for r in reports:
        out.per_subject_acc.update(r.per_subject_acc)
    return out


def loso_all(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    window: int | None = None,
    ks=DEFAULT_KS,
    subjects=None,
) -> EvalReport:
    """Run every fold (or the listed ``subjects``) and average the reports."""
    folds = range(queries.n_subjects) if subjects is None else [_subject_id(queries, s) for s in subjects]
    reports = _ordered_map(lambda s: loso_evaluate(queries, candidates, cfg, s, window, ks), folds)
    return average_reports(reports)


# --------------------------------------------------------------------------
# sweeps


def stage_ladder(base: CalibConfig | None = None) -> list[tuple[str, CalibConfig]]:
    """The ordered pipeline rungs, each adding one component to the previous."""
    base = base or CalibConfig()
    off = base.replace(saw=False, cw=False, csls_mode="off", struct_poe=False)
    return [
        ("raw-cosine", off),
        ("+SAW", off.replace(saw=True)),
        ("+SAW+CW", off.replace(saw=True, cw=True)),
        ("+CSLS", off.replace(saw=True, cw=True, csls_mode="fixed")),
        ("+Ada-CSLS", off.replace(saw=True, cw=True, csls_mode="adaptive")),
        ("+Struct-PoE", off.replace(saw=True, cw=True, csls_mode="adaptive", struct_poe=True)),
    ]


@dataclass
class SweepRow:
    name: str
    config: CalibConfig
    report: EvalReport

    def summary(self, ks=(1, 5)) -> dict:
        rep = self.report
        stage = next(iter(rep.hubness_skew))
        return {
            "name": self.name,
            **{f"top{k}": rep.top_k_acc[k] for k in ks if k in rep.top_k_acc},
            "hubness_skew": rep.hubness_skew[stage],
        }


def run_pipeline_sweep(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    base: CalibConfig | None = None,
    ks=DEFAULT_KS,
    window: int | None = None,
    subjects=None,
) -> list[SweepRow]:
    return [
        SweepRow(name, cfg, loso_all(queries, candidates, cfg, window, ks, subjects))
        for name, cfg in stage_ladder(base)
    ]


def sweep_beta(
    queries: EmbeddingSet,
    candidates: EmbeddingSet,
    cfg: CalibConfig,
    betas,
    ks=DEFAULT_KS,
    window: int | None = None,
    subjects=None,
) -> list[SweepRow]:
    betas = list(betas)
    if not betas:
        raise errors.ValidationError("beta grid is empty")
    rows = []
    for b in betas:
        c = cfg.replace(poe_beta=float(b), struct_poe=True)
        rows.append(SweepRow(f"beta={b:g}", c, loso_all(queries, candidates, c, window, ks, subjects)))
    return rows


def format_table(rows: list[SweepRow], ks=(1, 5)) -> str:
    """Plain-text comparison table; accuracies in percent."""
    head = f"{'config':<14}" + "".join(f"{'Top-' + str(k):>9}" for k in ks) + f"{'skew N5':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        stage = next(iter(r.report.hubness_skew))
        accs = "".join(f"{100 * r.report.top_k_acc[k]:9.2f}" for k in ks)
        lines.append(f"{r.name:<14}{accs}{r.report.hubness_skew[stage]:10.3f}")
    return "\n".join(lines)


def diagnose(s_new: SimMatrix, cfg: CalibConfig) -> dict:
    """Structural-evidence diagnostics for a pre-CSLS matrix."""
    ev = gather_evidence(s_new, cfg)
    out = ev.summary()
    out["hubness_skew"] = hubness_skew(ev.popularity) if ev.popularity.size >= 2 else 0.0
    out["K_pop"] = cfg.K_pop
    out["L"] = cfg.L
    return out
