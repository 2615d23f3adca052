import numpy as np
import pytest

from simcal import errors, whitening
from simcal.fusion import calibrate
from simcal.harness import (
    average_reports,
    diagnose,
    fold_scores,
    format_table,
    loso_all,
    loso_evaluate,
    pre_csls,
    run,
    run_pipeline_sweep,
    stage_ladder,
    sweep_beta,
    worker_count,
)
from simcal.metrics import evaluate
from simcal.similarity import base_similarity
from simcal.synth import SynthSpec, generate, noiseless
from simcal.types import CalibConfig, Stage

SMALL = SynthSpec(d=16, C=30, S=3, q_per_class_per_subject=4, n_hub=3)
CFG = CalibConfig(k_min=3, k_max=10, k_fixed=6, m_density=15)


@pytest.fixture(scope="module")
def data():
    return generate(SMALL)


def test_run_is_label_free(data):
    q, c = data
    a = run(q, c, CFG)
    b = run(q.without_labels(), c, CFG)
    assert a.scores.tobytes() == b.scores.tobytes()
    assert a.stage is Stage.FINAL


def test_pipeline_matches_manual_composition(data):
    q, c = data
    models = whitening.saw_fit_per_subject(q)
    zq = whitening.l2_normalize(whitening.saw_apply(q, models))
    vc = whitening.l2_normalize(whitening.apply(whitening.fit(c.vectors), c.vectors))
    manual = calibrate(base_similarity(zq, vc).advance(Stage.NEW), CFG)
    np.testing.assert_array_equal(run(q, c, CFG).scores, manual.scores)


def test_fold_fits_only_on_held_out_rows(data):
    q, c = data
    final, test = fold_scores(q, c, CFG, 1)
    rows = q.rows_of_subject(1)
    np.testing.assert_array_equal(test.vectors, q.vectors[rows])
    alone = run(test.without_labels(), c, CFG)
    np.testing.assert_array_equal(final.scores, alone.scores)
    # changing another subject's data leaves this fold untouched
    other = q.with_vectors(np.where((q.subject_of == 0)[:, None], 3 * q.vectors, q.vectors))
    np.testing.assert_array_equal(fold_scores(other, c, CFG, 1)[0].scores, final.scores)


def test_zscore_fold_uses_other_subjects(data):
    q, c = data
    cfg = CFG.replace(zscore=True)
    final, _ = fold_scores(q, c, cfg, 0)
    assert final.shape == (120, 30)


def test_window_full_equals_plain(data):
    q, c = data
    a = loso_evaluate(q, c, CFG, 0, ks=(1, 5))
    b = loso_evaluate(q, c, CFG, 0, window=q.rows_of_subject(0).size, ks=(1, 5))
    assert a.to_dict() == b.to_dict()
    with pytest.raises(errors.WindowTooLarge):
        loso_evaluate(q, c, CFG, 0, window=10_000)
    with pytest.raises(errors.UnknownSubject):
        loso_evaluate(q, c, CFG, "nobody")


def test_noiseless_every_fold_perfect():
    q, c = generate(noiseless(SMALL))
    for s in range(q.n_subjects):
        assert loso_evaluate(q, c, CFG, s, ks=(1,)).top_k_acc[1] == 1.0


def test_off_row_equals_plain_baseline(data):
    q, c = data
    rows = run_pipeline_sweep(q, c, CFG, ks=(1, 5))
    assert [r.name for r in rows] == [n for n, _ in stage_ladder(CFG)]
    cos = whitening.l2_normalize(q.vectors) @ whitening.l2_normalize(c.vectors).T
    want = np.mean([
        evaluate(cos[q.subject_of == s], q.label_of[q.subject_of == s], ks=(1, 5)).top_k_acc[5]
        for s in range(3)
    ])
    assert rows[0].report.top_k_acc[5] == pytest.approx(want, abs=1e-12)
    assert "raw-cosine" in format_table(rows)


def test_sweep_beta_rows(data):
    q, c = data
    ada = loso_all(q, c, CFG.replace(struct_poe=False), ks=(1, 5))
    rows = sweep_beta(q, c, CFG, [0.0, 1.9, 1.9], ks=(1, 5))
    assert rows[0].report.to_dict() == ada.to_dict()
    assert rows[1].report.to_dict() == rows[2].report.to_dict()
    with pytest.raises(errors.ValidationError):
        sweep_beta(q, c, CFG, [])


def test_threads_do_not_change_results(data, monkeypatch):
    q, c = data
    monkeypatch.setenv("SIMCAL_THREADS", "1")
    one = loso_all(q, c, CFG, ks=(1, 5)).to_dict()
    monkeypatch.setenv("SIMCAL_THREADS", "4")
    assert worker_count() == 4
    assert loso_all(q, c, CFG, ks=(1, 5)).to_dict() == one
    monkeypatch.setenv("SIMCAL_THREADS", "x")
    with pytest.raises(errors.ValidationError):
        worker_count()


def test_average_reports(data):
    q, c = data
    reps = [loso_evaluate(q, c, CFG, s, ks=(1,)) for s in range(3)]
    avg = average_reports(reps)
    assert avg.top_k_acc[1] == pytest.approx(np.mean([r.top_k_acc[1] for r in reps]))
    assert avg.n_queries == q.n
    assert set(avg.per_subject_acc) == {"0", "1", "2"}
    with pytest.raises(errors.ValidationError):
        average_reports([])


def test_diagnose(data):
    q, c = data
    info = diagnose(pre_csls(q, c, CFG), CFG)
    assert info["L"] == 5 and sum(info["popularity"]) == q.n * CFG.K_pop
