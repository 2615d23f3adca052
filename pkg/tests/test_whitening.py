import logging

import numpy as np
import pytest

from oracles import inv_sqrt_denman_beavers
from simcal import errors, whitening
from simcal.types import EmbeddingSet


def test_two_points_analytic():
    m = whitening.fit(np.array([[0.0, 0.0], [2.0, 0.0]]), lambda_reg=1.0)
    np.testing.assert_allclose(m.mean, [1.0, 0.0])
    np.testing.assert_allclose(m.w, np.diag([1 / np.sqrt(2), 1.0]), atol=1e-15)


def test_single_point_gives_identity():
    x = np.array([[0.3, -1.2, 4.0]])
    m = whitening.fit(x, lambda_reg=1.0)
    np.testing.assert_array_equal(m.mean, x[0])
    np.testing.assert_allclose(m.w, np.eye(3), atol=1e-15)


def test_matches_independent_inverse_sqrt():
    rng = np.random.default_rng(7)
    x = rng.multivariate_normal([0, 0], [[2, 1], [1, 2]], size=50)
    m = whitening.fit(x, lambda_reg=1e-6)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / len(x)
    np.testing.assert_allclose(m.w, inv_sqrt_denman_beavers(cov + 1e-6 * np.eye(2)), atol=1e-10)


def test_default_lambda_is_relative():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 5)) * 3.0
    m = whitening.fit(x)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / len(x)
    assert m.lambda_reg == pytest.approx(whitening.LAMBDA_REL * np.trace(cov) / 5)
    # scale invariance of the whitened output
    m2 = whitening.fit(10 * x)
    np.testing.assert_allclose(whitening.apply(m2, 10 * x), whitening.apply(m, x), atol=1e-10)
    assert whitening.fit(np.ones((4, 3))).lambda_reg == whitening.LAMBDA_FLOOR


def test_apply_identity_and_hand_example():
    ident = whitening.WhitenModel(np.zeros(2), np.eye(2), 1.0, 1)
    x = np.array([[1.5, -2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(whitening.apply(ident, x), x)
    m = whitening.WhitenModel(np.array([1.0, 0.0]), np.diag([2.0, 1.0]), 1.0, 1)
    np.testing.assert_allclose(whitening.apply(m, [[2.0, 3.0]]), [[2.0, 3.0]])
    with pytest.raises(errors.DimMismatch):
        whitening.apply(m, np.ones((1, 3)))


def test_fit_then_apply_moments():
    rng = np.random.default_rng(3)
    d = 8
    a = rng.standard_normal((d, d))
    x = rng.standard_normal((10 * d, d)) @ a + 5.0
    m = whitening.fit(x, lambda_reg=1e-9)
    y = whitening.apply(m, x)
    assert np.abs(y.mean(axis=0)).max() < 1e-10
    cov = y.T @ y / len(y)
    assert np.abs(cov - np.eye(d)).max() < 1e-6


def test_fit_errors_and_warning(caplog):
    with pytest.raises(errors.DegenerateInput):
        whitening.fit(np.ones((0, 3)))
    with pytest.raises(errors.ValidationError):
        whitening.fit(np.ones((3, 3)), lambda_reg=0.0)
    with caplog.at_level(logging.WARNING):
        whitening.fit(np.random.default_rng(0).standard_normal((3, 40)))
    assert "ridge" in caplog.text


def test_l2_normalize():
    np.testing.assert_allclose(whitening.l2_normalize([[3.0, 4.0]]), [[0.6, 0.8]])
    u = np.array([[0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(whitening.l2_normalize(u), u)
    with pytest.raises(errors.ZeroVector):
        whitening.l2_normalize([[0.0, 0.0]])
    x = np.random.default_rng(2).standard_normal((50, 7))
    np.testing.assert_allclose(np.linalg.norm(whitening.l2_normalize(x), axis=1), 1.0, atol=1e-12)


def _two_subject_set(rng, n=60, d=4):
    x = rng.standard_normal((n, d))
    return EmbeddingSet.queries(np.vstack([x, x]), ["a"] * n + ["b"] * n)


def test_per_subject_identical_clouds():
    q = _two_subject_set(np.random.default_rng(4))
    models = whitening.saw_fit_per_subject(q)
    np.testing.assert_array_equal(models[0].w, models[1].w)
    np.testing.assert_array_equal(models[0].mean, models[1].mean)


def test_per_subject_single_sample():
    q = EmbeddingSet.queries(np.array([[1.0, 2.0], [3.0, 1.0], [0.0, 5.0]]), ["x", "y", "y"])
    m = whitening.saw_fit_per_subject(q, lambda_reg=0.25)[0]
    np.testing.assert_array_equal(m.mean, [1.0, 2.0])
    np.testing.assert_allclose(m.w, 2.0 * np.eye(2))


def test_per_subject_uses_only_own_rows():
    rng = np.random.default_rng(5)
    q = EmbeddingSet.queries(
        np.vstack([rng.standard_normal((40, 3)), 10 + 3 * rng.standard_normal((40, 3))]), [0] * 40 + [1] * 40
    )
    models = whitening.saw_fit_per_subject(q, lambda_reg=0.1)
    ref = whitening.fit(q.vectors[40:], lambda_reg=0.1)
    np.testing.assert_allclose(models[1].w, ref.w)
    out = whitening.saw_apply(q, models)
    np.testing.assert_allclose(out[40:], whitening.apply(ref, q.vectors[40:]))


def test_window_mode():
    rng = np.random.default_rng(6)
    q = EmbeddingSet.queries(rng.standard_normal((200, 4)) @ np.diag([1, 2, 3, 4]), [0] * 200)
    full = whitening.saw_fit_per_subject(q)[0]
    win = whitening.saw_fit_per_subject(q, window=50)[0]
    assert win.n_fit == 50 and full.n_fit == 200
    np.testing.assert_allclose(win.w, whitening.fit(q.vectors[:50]).w)
    assert not np.allclose(whitening.saw_apply(q, {0: win}), whitening.saw_apply(q, {0: full}))
    # the window model still whitens its own window
    y = whitening.apply(win, q.vectors[:50])
    assert np.abs(y.mean(axis=0)).max() < 1e-10
    with pytest.raises(errors.WindowTooLarge):
        whitening.saw_fit_per_subject(q, window=201)


def test_saw_apply_missing_model():
    q = EmbeddingSet.queries(np.eye(3), [0, 1, 1])
    with pytest.raises(errors.UnknownSubject):
        whitening.saw_apply(q, {0: whitening.fit(np.eye(3)[:1])})
