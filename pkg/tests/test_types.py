import json

import numpy as np
import pytest

from simcal import errors
from simcal.types import CalibConfig, EmbeddingSet, Role, SimMatrix, Stage, canonicalize_subjects, validate


def test_well_formed_query_set():
    emb = EmbeddingSet.queries(np.arange(12.0).reshape(3, 4), ["b", "a", "b"], [0, 1, 0])
    assert emb.n == 3 and emb.dim == 4
    assert emb.subject_names == ("a", "b")
    np.testing.assert_array_equal(emb.subject_of, [1, 0, 1])
    assert emb.role is Role.QUERY
    validate(emb)


def test_nan_rejected():
    x = np.ones((3, 4))
    x[1, 2] = np.nan
    with pytest.raises(errors.NonFinite):
        EmbeddingSet.queries(x, [0, 0, 0])


def test_duplicate_class_rejected():
    with pytest.raises(errors.DuplicateClass):
        EmbeddingSet.candidates(np.eye(3), [7, 1, 7])


def test_small_or_empty_inputs():
    with pytest.raises(errors.DimTooSmall):
        EmbeddingSet.queries(np.ones((3, 1)), [0, 0, 0])
    with pytest.raises(errors.EmptySet):
        EmbeddingSet.queries(np.ones((0, 4)), [])
    with pytest.raises(errors.ValidationError):
        EmbeddingSet.queries([["a", "b"]], [0])


def test_label_length_mismatch():
    with pytest.raises(errors.ShapeMismatch):
        EmbeddingSet.queries(np.ones((3, 4)), [0, 0, 0], [1, 2])


def test_arrays_are_read_only():
    emb = EmbeddingSet.queries(np.ones((2, 3)), [0, 1])
    with pytest.raises(ValueError):
        emb.vectors[0, 0] = 5.0


def test_subset_recanonicalizes_subjects():
    emb = EmbeddingSet.queries(np.eye(4), ["s1", "s2", "s3", "s2"], [0, 1, 2, 3])
    sub = emb.subset([1, 3])
    assert sub.subject_names == ("s2",)
    np.testing.assert_array_equal(sub.subject_of, [0, 0])
    np.testing.assert_array_equal(sub.label_of, [1, 3])
    assert sub.without_labels().label_of is None


def test_canonicalize_mixed_tags():
    ids, names = canonicalize_subjects([np.int64(3), 1, 3])
    assert names == (1, 3)
    assert all(type(n) is int for n in names)
    np.testing.assert_array_equal(ids, [1, 0, 1])


def test_simmatrix_stage_transitions():
    s = SimMatrix(np.zeros((2, 3)), Stage.BASE)
    new = s.advance(Stage.NEW)
    new.advance(Stage.GEOM).advance(Stage.FINAL)
    new.advance(Stage.STRUCT)
    with pytest.raises(errors.WrongStage):
        s.advance(Stage.GEOM)
    with pytest.raises(errors.WrongStage):
        new.advance(Stage.FINAL)
    with pytest.raises(errors.ShapeMismatch):
        new.advance(Stage.GEOM, np.zeros((3, 2)))


def test_simmatrix_rejects_bad_inputs():
    with pytest.raises(errors.NonFinite):
        SimMatrix([[np.inf]], Stage.BASE)
    with pytest.raises(errors.ValidationError):
        SimMatrix(np.zeros((2, 2)), Stage.BASE, class_ids=[4, 4])


def test_column_of():
    s = SimMatrix(np.zeros((1, 3)), Stage.BASE, class_ids=[10, 20, 30])
    np.testing.assert_array_equal(s.column_of([30, 10]), [2, 0])
    with pytest.raises(errors.ClassSetMismatch):
        s.column_of([40])


def test_config_defaults_and_json():
    cfg = CalibConfig()
    assert (cfg.tau, cfg.logit_scale, cfg.poe_alpha, cfg.poe_beta) == (1.0, 1.0, 1.0, 1.9)
    assert (cfg.k_min, cfg.k_max, cfg.k_fixed, cfg.L, cfg.K_pop, cfg.h_thr) == (5, 20, 12, 5, 5, 0.5)
    assert cfg.resolved_m(200) == 50 and cfg.resolved_m(30) == 30
    again = CalibConfig.from_json(json.dumps(cfg.to_dict()))
    assert again == cfg
    assert CalibConfig.from_json('{"L": 3}').L == 3


@pytest.mark.parametrize(
    "text",
    ['{"Lx": 3}', '{"tau": 0}', '{"k_min": 9, "k_max": 4}', '{"csls_mode": "both"}', '{"h_thr": 2}', "[1]", "{", '{"L": "5"}'],
)
def test_config_errors(text):
    with pytest.raises(errors.BadConfig):
        CalibConfig.from_json(text)


def test_config_checks_against_class_count():
    with pytest.raises(errors.BadConfig):
        CalibConfig().check(10)  # k_max=20 > 10 classes
    CalibConfig(k_max=10, k_min=2, L=3, K_pop=3).check(10)
