"""Encoder: bag-of-words embedding, normalization, dropout views, and exact
gradients checked against central finite differences."""

from __future__ import annotations

import numpy as np
import pytest

from matchlab import (
    DegenerateNormError,
    EmbeddingModel,
    EncodeError,
    VocabMismatchError,
    encode,
    encode_backward,
    encode_dropout_backward,
    encode_with_dropout,
    init_model,
    relevance,
)

from conftest import fd_gradient, grad_rel_error, make_vocab, model_from_rows, random_model

INV_SQRT2 = 0.7071067811865475  # 1/sqrt(2)


class TestModel:
    def test_init_shape_and_range(self):
        vocab = make_vocab(5)
        model = init_model(vocab, dim=8, seed=0)
        assert model.table.shape == (6, 8)
        bound = 0.5 / 8
        assert np.all(np.abs(model.table) <= bound)

    def test_row_count_must_match_vocab(self):
        vocab = make_vocab(5)
        with pytest.raises(VocabMismatchError):
            EmbeddingModel(np.zeros((4, 3)), vocab)

    def test_non_finite_rejected(self):
        vocab = make_vocab(2)
        table = np.zeros((3, 4))
        table[1, 0] = np.nan
        with pytest.raises(ValueError):
            EmbeddingModel(table, vocab)

    def test_frozen_table_is_read_only(self):
        model = random_model(3, 4, np.random.default_rng(0), frozen=True)
        with pytest.raises(ValueError):
            model.table[0, 0] = 1.0

    def test_checksum_tracks_content(self):
        a = random_model(3, 4, np.random.default_rng(0))
        b = a.copy()
        assert a.checksum() == b.checksum()
        b.table[1, 0] += 1.0
        assert a.checksum() != b.checksum()


class TestEncode:
    def test_unit_norm(self):
        model = random_model(6, 5, np.random.default_rng(1))
        rng = np.random.default_rng(0)
        for _ in range(30):
            ids = tuple(int(i) for i in rng.integers(1, 7, size=rng.integers(1, 6)))
            emb = encode(model, ids).embedding
            assert np.linalg.norm(emb) == pytest.approx(1.0, abs=1e-12)

    def test_hand_value_single_token(self):
        model = model_from_rows([[3.0, 4.0]])
        emb = encode(model, (1,)).embedding
        np.testing.assert_allclose(emb, [0.6, 0.8], atol=1e-15)

    def test_hand_value_two_tokens(self):
        model = model_from_rows([[1.0, 0.0], [0.0, 1.0]])
        emb = encode(model, (1, 2)).embedding
        np.testing.assert_allclose(emb, [INV_SQRT2, INV_SQRT2], atol=1e-15)

    def test_multiplicity_counts(self):
        model = model_from_rows([[1.0, 0.0], [0.0, 1.0]])
        emb = encode(model, (1, 1, 2)).embedding
        expect = np.array([2.0, 1.0]) / np.sqrt(5.0)
        np.testing.assert_allclose(emb, expect, atol=1e-15)

    def test_permutation_invariance_is_bit_exact(self):
        model = random_model(12, 16, np.random.default_rng(3))
        rng = np.random.default_rng(5)
        for _ in range(50):
            ids = [int(i) for i in rng.integers(1, 13, size=rng.integers(2, 9))]
            base = encode(model, tuple(ids)).embedding
            rng.shuffle(ids)
            again = encode(model, tuple(ids)).embedding
            assert np.array_equal(base, again)

    def test_empty_sentence_rejected(self):
        model = random_model(3, 4, np.random.default_rng(0))
        with pytest.raises(EncodeError):
            encode(model, ())

    def test_out_of_range_id_rejected(self):
        model = random_model(3, 4, np.random.default_rng(0))
        with pytest.raises(EncodeError):
            encode(model, (1, 9))

    def test_degenerate_norm_raises(self):
        model = model_from_rows([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(DegenerateNormError):
            encode(model, (1, 2))

    def test_relevance_range_and_symmetry(self):
        model = random_model(8, 6, np.random.default_rng(7))
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = tuple(int(i) for i in rng.integers(1, 9, size=3))
            b = tuple(int(i) for i in rng.integers(1, 9, size=3))
            r = relevance(model, a, b)
            assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12
            assert relevance(model, b, a) == pytest.approx(r, abs=1e-15)
            assert relevance(model, a, a) == pytest.approx(1.0, abs=1e-12)


class TestEncodeBackward:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            model = random_model(7, 5, np.random.default_rng(trial))
            length = int(rng.integers(1, 6))
            ids = tuple(int(i) for i in rng.integers(1, 8, size=length))
            g = rng.normal(size=5)

            grads = encode_backward(model, ids, g)
            fd = fd_gradient(lambda: float(g @ encode(model, ids).embedding),
                             model, set(ids))
            assert grad_rel_error(grads, fd, model.dim) < 1e-5

    def test_gradient_orthogonal_to_embedding(self):
        # projection Jacobian kills the radial direction
        model = random_model(5, 4, np.random.default_rng(2))
        ids = (1, 2, 3)
        res = encode(model, ids)
        grads = encode_backward(model, ids, res.embedding.copy())
        for g in grads.values():
            assert np.linalg.norm(g) < 1e-12

    def test_repeated_token_accumulates(self):
        model = random_model(4, 3, np.random.default_rng(5))
        g = np.array([0.3, -0.2, 0.5])
        grads = encode_backward(model, (1, 1, 2), g)
        assert set(grads) == {1, 2}
        fd = fd_gradient(lambda: float(g @ encode(model, (1, 1, 2)).embedding),
                         model, {1, 2})
        assert grad_rel_error(grads, fd, model.dim) < 1e-5


class TestDropout:
    def test_rate_zero_equals_plain_encode(self):
        model = random_model(6, 5, np.random.default_rng(0))
        ids = (1, 2, 3)
        a = encode(model, ids).embedding
        b = encode_with_dropout(model, ids, rate=0.0, seed=4).embedding
        assert np.array_equal(a, b)

    def test_seed_reproducible_and_views_differ(self):
        model = random_model(6, 8, np.random.default_rng(1))
        ids = (1, 2, 3, 4)
        a = encode_with_dropout(model, ids, rate=0.4, seed=10).embedding
        b = encode_with_dropout(model, ids, rate=0.4, seed=10).embedding
        c = encode_with_dropout(model, ids, rate=0.4, seed=11).embedding
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unit_norm(self):
        model = random_model(6, 8, np.random.default_rng(1))
        for seed in range(20):
            emb = encode_with_dropout(model, (1, 2, 3), rate=0.3, seed=seed).embedding
            assert np.linalg.norm(emb) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_scaling_recovers_mean(self):
        # prenorm sum averaged over many masks approaches the clean sum
        model = random_model(5, 6, np.random.default_rng(3))
        ids = (1, 2, 3)
        clean = encode(model, ids).prenorm_sum
        acc = np.zeros(6)
        n = 4000
        for seed in range(n):
            acc += encode_with_dropout(model, ids, rate=0.5, seed=seed).prenorm_sum
        np.testing.assert_allclose(acc / n, clean, atol=0.05)

    def test_rate_one_rejected(self):
        model = random_model(4, 3, np.random.default_rng(0))
        with pytest.raises(EncodeError):
            encode_with_dropout(model, (1, 2), rate=1.0, seed=0)

    def test_dropout_backward_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        for trial in range(8):
            model = random_model(6, 5, np.random.default_rng(100 + trial))
            ids = tuple(int(i) for i in rng.integers(1, 7, size=4))
            seed = int(rng.integers(0, 1000))
            g = rng.normal(size=5)

            grads = encode_dropout_backward(model, ids, 0.3, seed, g)
            fd = fd_gradient(
                lambda: float(g @ encode_with_dropout(model, ids, rate=0.3,
                                                      seed=seed).embedding),
                model, set(ids))
            assert grad_rel_error(grads, fd, model.dim) < 1e-5
