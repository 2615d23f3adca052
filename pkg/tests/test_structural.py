import numpy as np
import pytest

import oracles
from simcal import errors
from simcal.structural import (
    bidirectional_topL,
    build_struct_logits,
    compute_ranks,
    gather_evidence,
    hub_score,
    mnn_pairs,
    popularity,
)
from simcal.types import CalibConfig, SimMatrix, Stage


def _seeded(seed, shape=(30, 25)):
    return np.random.default_rng(seed).standard_normal(shape)


def test_rank_tables_match_oracle():
    s = _seeded(0)
    rt = compute_ranks(s)
    r_row, r_col = oracles.rank_tables(s)
    np.testing.assert_array_equal(rt.r_row, r_row)
    np.testing.assert_array_equal(rt.r_col, r_col)


def test_mnn_identity():
    rt = compute_ranks(np.eye(3))
    np.testing.assert_array_equal(np.argwhere(mnn_pairs(rt)), [[0, 0], [1, 1], [2, 2]])


def test_mnn_single_popular_class():
    s = np.full((5, 4), 0.1)
    s[:, 0] = [0.5, 0.9, 0.6, 0.7, 0.8]
    mnn = mnn_pairs(compute_ranks(s))
    np.testing.assert_array_equal(np.argwhere(mnn), [[1, 0]])


def test_mnn_and_topL_match_oracle():
    s = _seeded(1)
    rt = compute_ranks(s)
    r_row, r_col = oracles.rank_tables(s)
    np.testing.assert_array_equal(mnn_pairs(rt), (r_row == 1) & (r_col == 1))
    np.testing.assert_array_equal(bidirectional_topL(rt, 3), (r_row <= 3) & (r_col <= 3))
    np.testing.assert_array_equal(bidirectional_topL(rt, 1), mnn_pairs(rt))
    assert bidirectional_topL(rt, 30).all()
    with pytest.raises(errors.ValidationError):
        bidirectional_topL(rt, 0)


def test_popularity():
    row = _seeded(2, (1, 12))[0]
    pop = popularity(compute_ranks(np.tile(row, (8, 1))), 5)
    assert sorted(pop.tolist()) == [0] * 7 + [8] * 5
    s = _seeded(3)
    np.testing.assert_array_equal(popularity(compute_ranks(s), 25), np.full(25, 30))
    r_row, _ = oracles.rank_tables(s)
    pop = popularity(compute_ranks(s), 5)
    np.testing.assert_array_equal(pop, (r_row <= 5).sum(axis=0))
    assert pop.sum() == 30 * 5
    with pytest.raises(errors.ValidationError):
        popularity(compute_ranks(s), 26)


def test_hub_score():
    np.testing.assert_allclose(hub_score([0, 5, 10]), [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(hub_score([4, 4, 4]), [0.0, 0.0, 0.0])
    pop = np.random.default_rng(4).integers(0, 50, 40)
    want = [(p - pop.min()) / (pop.max() - pop.min()) for p in pop]
    np.testing.assert_allclose(hub_score(pop), want, rtol=0, atol=1e-15)


def test_clean_diagonal_gives_anchors_only():
    s = np.eye(6) + 0.01 * np.arange(6)[None, :] * (1 - np.eye(6))
    cfg = CalibConfig(L=1, K_pop=1, k_max=5, k_min=1)
    logits, ev = build_struct_logits(s, cfg)
    np.testing.assert_array_equal(logits.scores, np.eye(6) * cfg.lam_anchor)
    assert not ev.hubs.any()


def test_hand_built_hub_penalty():
    # class 0 is in the top-2 of every query except q*=4; for q* it sits at
    # row rank 4, yet q* is class 0's best query (column rank 1 <= L)
    nq, nc = 5, 6
    s = np.tile(np.linspace(0.5, 0.0, nc), (nq, 1))
    s[:, 0] = [0.95, 0.96, 0.97, 0.98, 0.1]
    s[4] = [0.99, -1.0, 3.0, 2.0, 1.0, 0.0]
    cfg = CalibConfig(L=2, K_pop=2, k_min=1, k_max=2, m_density=2, h_thr=0.5, lam_pen=0.7)
    ev = gather_evidence(s, cfg)
    rt = compute_ranks(s)
    assert rt.r_row[4, 0] == 4 and rt.r_col[4, 0] == 1
    assert ev.hub_score[0] == 1.0
    logits, _ = build_struct_logits(s, cfg)
    assert logits.scores[4, 0] == pytest.approx(-0.7)
    np.testing.assert_allclose(logits.scores, oracles.struct_logits(s, 2, 2, 0.5, 1.0, 0.7))


@pytest.mark.parametrize("seed", range(8))
def test_logits_match_oracle(seed):
    rng = np.random.default_rng(seed)
    s = np.round(rng.standard_normal((20, 15)), 1)  # with ties
    cfg = CalibConfig(L=3, K_pop=4, k_min=2, k_max=6, m_density=8, h_thr=0.3, lam_anchor=1.5, lam_pen=0.8)
    logits, _ = build_struct_logits(s, cfg)
    np.testing.assert_allclose(logits.scores, oracles.struct_logits(s, 3, 4, 0.3, 1.5, 0.8), atol=1e-15)


def test_input_untouched_and_stage():
    snew = SimMatrix(_seeded(5), Stage.NEW)
    before = snew.scores.copy()
    logits, ev = build_struct_logits(snew)
    np.testing.assert_array_equal(snew.scores, before)
    assert logits.stage is Stage.STRUCT
    summ = ev.summary()
    assert summ["anchor_count"] == int(ev.anchors.sum())
    assert sum(summ["popularity_hist"]["counts"]) == 25
