import math

import numpy as np
import pytest

from hcfkit.baselines import (BpdmConfig, bpdm_fit, bpdm_score, load_baseline,
                              memcf_fit, memcf_score, memcf_score_matrix,
                              save_baseline, stage1_only_fit)
from hcfkit.core import EmbeddingSet, HcfError, InteractionMatrix
from hcfkit.evaluation import roc_auc
from hcfkit.rng import make_rng


def matrix_from_pairs(m, n, pairs):
    return InteractionMatrix(tuple(f"e{k}" for k in range(m)),
                             tuple(f"i{k}" for k in range(n)),
                             frozenset(pairs))


def two_block_matrix(m=20, n=12, seed=0, p_in=0.9, p_out=0.05):
    """Entities/items split into two halves; dense inside, sparse across."""
    rng = make_rng(seed, "block")
    pairs = set()
    for u in range(m):
        for i in range(n):
            same = (u < m // 2) == (i < n // 2)
            if rng.random() < (p_in if same else p_out):
                pairs.add((u, i))
    return matrix_from_pairs(m, n, pairs)


def oracle_similarity(train):
    """Brute-force set-overlap cosine, straight from the definition."""
    holders = [set() for _ in range(train.n)]
    for u, i in train.pairs:
        holders[i].add(u)
    sim = np.zeros((train.n, train.n))
    for i in range(train.n):
        for j in range(train.n):
            if holders[i] and holders[j]:
                sim[i, j] = len(holders[i] & holders[j]) / math.sqrt(
                    len(holders[i]) * len(holders[j]))
    return sim


class TestMemCf:
    def test_identical_user_sets_sim_one(self):
        mat = matrix_from_pairs(3, 2, {(0, 0), (0, 1), (2, 0), (2, 1)})
        sims = memcf_fit(mat)
        assert sims.sim[0, 1] == pytest.approx(1.0)

    def test_disjoint_user_sets_sim_zero(self):
        mat = matrix_from_pairs(4, 2, {(0, 0), (1, 0), (2, 1), (3, 1)})
        assert memcf_fit(mat).sim[0, 1] == 0.0

    def test_hand_counted_overlap(self):
        # |U_0| = 4, |U_1| = 1, overlap 1 -> 1 / sqrt(4) = 0.5
        mat = matrix_from_pairs(5, 2, {(0, 0), (1, 0), (2, 0), (3, 0), (3, 1)})
        assert memcf_fit(mat).sim[0, 1] == pytest.approx(0.5)

    def test_matches_brute_force_oracle_exactly(self):
        rng = make_rng(31, "memcf")
        for trial in range(30):
            m = int(rng.integers(3, 30))
            n = int(rng.integers(2, 20))
            pairs = {(int(u), int(i)) for u in range(m) for i in range(n)
                     if rng.random() < 0.3}
            pairs.add((0, 0))
            mat = matrix_from_pairs(m, n, pairs)
            assert np.allclose(memcf_fit(mat).sim, oracle_similarity(mat),
                               atol=1e-12)

    def test_symmetry_and_diagonal(self):
        mat = two_block_matrix(seed=3)
        sims = memcf_fit(mat)
        assert np.allclose(sims.sim, sims.sim.T, atol=1e-12)
        counts = mat.item_counts()
        for i in range(mat.n):
            if counts[i] > 0:
                assert sims.sim[i, i] == pytest.approx(1.0)

    def test_single_neighbor_saturation(self):
        # item i1's only neighbor is i0 (sim 0.8); an entity holding i0
        # scores 0.8 / 0.8 = 1.0 for i1
        mat = matrix_from_pairs(5, 2, {(0, 0), (1, 0), (2, 0), (3, 0),
                                       (0, 1), (1, 1), (2, 1), (4, 1)})
        sims = memcf_fit(mat)
        assert sims.sim[0, 1] == pytest.approx(3 / 4)
        score = memcf_score(sims, mat, 3, 1)
        assert score == pytest.approx(1.0)  # numerator = denominator = sim(0,1)

    def test_entity_with_no_items_scores_zero(self):
        mat = matrix_from_pairs(3, 2, {(0, 0), (1, 1)})
        sims = memcf_fit(mat)
        assert memcf_score(sims, mat, 2, 0) == 0.0

    def test_two_neighbor_saturation(self):
        # target i0 has neighbors {i1: 0.5, i2: 0.0}; an entity holding only
        # i1 scores 0.5 / 0.5 = 1.0 (the documented saturation the optional
        # k-neighbor guard exists for)
        mat = matrix_from_pairs(5, 3, {(0, 0),
                                       (0, 1), (1, 1), (2, 1), (3, 1),
                                       (4, 2)})
        sims = memcf_fit(mat)
        assert sims.sim[0, 1] == pytest.approx(0.5)
        assert sims.sim[0, 2] == 0.0
        assert memcf_score(sims, mat, 1, 0) == pytest.approx(1.0)

    def test_scores_graded_in_unit_interval(self):
        mat = two_block_matrix(seed=5)
        scores = memcf_score_matrix(memcf_fit(mat), mat)
        assert np.all(scores >= 0.0) and np.all(scores <= 1.0 + 1e-12)
        assert len(np.unique(np.round(scores, 9))) > 2  # not a 0/1 indicator

    def test_knn_truncation_keeps_top_neighbors_only(self):
        mat = two_block_matrix(seed=7)
        full = memcf_score_matrix(memcf_fit(mat), mat, k_neighbors=0)
        truncated = memcf_score_matrix(memcf_fit(mat), mat, k_neighbors=2)
        assert full.shape == truncated.shape
        assert not np.allclose(full, truncated)

    def test_empty_train_rejected(self):
        with pytest.raises(HcfError):
            memcf_fit(matrix_from_pairs(2, 2, set()))


class TestBpdm:
    def test_in_block_pairs_outrank_out_of_block(self):
        train = two_block_matrix(seed=11)
        cfg = BpdmConfig(k=8, epochs=40, lr=0.08, seed=13)
        model = bpdm_fit(train, cfg)
        m, n = train.m, train.n
        in_scores, out_scores = [], []
        for u in range(m):
            for i in range(n):
                same = (u < m // 2) == (i < n // 2)
                (in_scores if same else out_scores).append(
                    float(bpdm_score(model, [u], [i])[0]))
        assert np.mean(in_scores) > np.mean(out_scores)

    def test_zero_epochs_near_chance_auc(self):
        train = two_block_matrix(seed=17)
        aucs = []
        for seed in range(10):
            model = bpdm_fit(train, BpdmConfig(k=8, epochs=0, seed=seed))
            rng = make_rng(seed, "eval")
            u = rng.integers(0, train.m, size=500)
            i = rng.integers(0, train.n, size=500)
            labels = np.array([(a, b) in train.pairs for a, b in zip(u, i)],
                              dtype=float)
            if labels.min() == labels.max():
                continue
            aucs.append(roc_auc(bpdm_score(model, u, i), labels))
        assert abs(np.mean(aucs) - 0.5) < 0.1

    def test_same_seed_identical_model(self):
        train = two_block_matrix(seed=19)
        cfg = BpdmConfig(k=6, epochs=5, seed=23)
        a, b = bpdm_fit(train, cfg), bpdm_fit(train, cfg)
        assert np.array_equal(a.entity_factors, b.entity_factors)
        assert np.array_equal(a.item_factors, b.item_factors)
        assert np.array_equal(a.item_bias, b.item_bias)

    def test_objective_improves_on_separable_data(self):
        # enough positives/epochs for >= 300 recorded minibatch steps, so the
        # smoothing windows are a full 100 steps each
        train = two_block_matrix(m=60, n=30, seed=29, p_in=0.95, p_out=0.02)
        model = bpdm_fit(train, BpdmConfig(k=8, epochs=120, lr=0.08,
                                           batch_size=256, seed=31))
        hist = model.objective_history
        assert len(hist) >= 300
        early = np.mean(hist[:100])
        late = np.mean(hist[-100:])
        assert late > early

    def test_empty_train_rejected(self):
        with pytest.raises(HcfError):
            bpdm_fit(matrix_from_pairs(2, 2, set()), BpdmConfig())


class TestStage1Only:
    def _embeddings(self, train, dim, seed):
        rng = make_rng(seed, "s1")
        return EmbeddingSet(dim, {eid: rng.normal(size=dim)
                                  for eid in train.entity_ids})

    def test_entity_factors_frozen(self):
        train = two_block_matrix(seed=37)
        cfg = BpdmConfig(k=6, epochs=8, seed=41)
        stage1 = self._embeddings(train, 10, 43)
        model = stage1_only_fit(stage1, train, cfg)
        proj = make_rng(cfg.seed, "stage1-proj").normal(
            0.0, 1.0 / np.sqrt(cfg.k), size=(10, cfg.k))
        expected = stage1.matrix(train.entity_ids) @ proj
        assert np.array_equal(model.entity_factors, expected)

    def test_identity_projection_when_dims_match(self):
        train = two_block_matrix(seed=47)
        cfg = BpdmConfig(k=6, epochs=0, seed=53)
        stage1 = self._embeddings(train, 6, 59)
        model = stage1_only_fit(stage1, train, cfg)
        assert np.array_equal(model.entity_factors, stage1.matrix(train.entity_ids))

    def test_deterministic(self):
        train = two_block_matrix(seed=61)
        cfg = BpdmConfig(k=4, epochs=4, seed=67)
        stage1 = self._embeddings(train, 4, 71)
        a = stage1_only_fit(stage1, train, cfg)
        b = stage1_only_fit(stage1, train, cfg)
        assert np.array_equal(a.item_factors, b.item_factors)


class TestBaselineCheckpoints:
    def test_bpdm_roundtrip_scores_close(self, tmp_path):
        train = two_block_matrix(seed=73)
        model = bpdm_fit(train, BpdmConfig(k=6, epochs=5, seed=79))
        path = tmp_path / "bpdm.json"
        save_baseline(model, path)
        loaded = load_baseline(path)
        u = np.arange(train.m)
        i = np.arange(train.m) % train.n
        assert np.allclose(bpdm_score(model, u, i), bpdm_score(loaded, u, i),
                           atol=1e-6)
        assert loaded.entity_ids == model.entity_ids

    def test_memcf_roundtrip(self, tmp_path):
        train = two_block_matrix(seed=83)
        sims = memcf_fit(train)
        path = tmp_path / "memcf.json"
        save_baseline(sims, path)
        loaded = load_baseline(path)
        assert loaded.item_ids == sims.item_ids
        assert np.allclose(loaded.sim, sims.sim, atol=1e-6)

    def test_foreign_file_rejected(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(HcfError, match="not a baseline checkpoint"):
            load_baseline(path)
