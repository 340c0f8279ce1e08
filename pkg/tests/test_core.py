import itertools

import numpy as np
import pytest

from flowhash import (
    EmbeddingSet,
    HashCode,
    Rng,
    SparsityConfig,
    ValidationError,
    canonicalize_labels,
    class_means,
    random_k_sparse_codes,
)


class TestCanonicalizeLabels:
    def test_first_appearance_order(self):
        labels, mapping = canonicalize_labels([5, 5, 9])
        assert labels.tolist() == [0, 0, 1]
        assert mapping == {5: 0, 9: 1}

    def test_identity(self):
        labels, _ = canonicalize_labels([0, 1, 2])
        assert labels.tolist() == [0, 1, 2]

    def test_interleaved(self):
        labels, mapping = canonicalize_labels([3, 1, 3, 1])
        assert labels.tolist() == [0, 1, 0, 1]
        assert sorted(mapping.values()) == [0, 1]

    def test_mapping_is_bijective(self):
        rng = Rng(0)
        raw = rng.integers(0, 20, size=100)
        labels, mapping = canonicalize_labels(raw)
        assert len(set(mapping.values())) == len(mapping)
        assert labels.max() == len(mapping) - 1
        # applying the mapping reproduces the canonical labels
        assert [mapping[v] for v in raw.tolist()] == labels.tolist()

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            canonicalize_labels([0, -1])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            canonicalize_labels([])


class TestClassMeans:
    def test_single_item_classes(self):
        data = np.array([[1.0, 2.0], [3.0, 4.0], [-1.0, 0.5]])
        e = EmbeddingSet(data, np.array([0, 1, 2]))
        assert np.array_equal(class_means(e), data)

    def test_symmetric_pair(self):
        e = EmbeddingSet(np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([0, 0]))
        assert class_means(e).tolist() == [[1.0, 1.0]]

    def test_matches_accumulate_divide_oracle(self):
        rng = Rng(7)
        data = rng.normal(size=(40, 5))
        labels = rng.integers(0, 4, size=40).astype(np.int64)
        labels[:4] = [0, 1, 2, 3]  # every class present
        labels, _ = canonicalize_labels(labels)
        e = EmbeddingSet(data, labels)
        acc = np.zeros((4, 5))
        counts = np.zeros(4)
        for row, lab in zip(data, labels.tolist()):
            acc[lab] += row
            counts[lab] += 1
        assert np.allclose(class_means(e), acc / counts[:, None], atol=1e-12)

    def test_permutation_invariant_exactly(self):
        rng = Rng(3)
        data = rng.normal(size=(30, 4))
        labels, _ = canonicalize_labels(rng.integers(0, 3, size=30).astype(np.int64))
        e = EmbeddingSet(data, labels)
        base = class_means(e)
        for seed in range(5):
            perm = Rng(seed).permutation(30)
            shuffled = EmbeddingSet(data[perm], labels[perm])
            assert np.array_equal(class_means(shuffled), base)

    def test_gap_in_labels_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingSet(np.zeros((2, 2)), np.array([0, 2]))


class TestEmbeddingSet:
    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            EmbeddingSet(np.array([[np.nan, 0.0]]), np.array([0]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValidationError):
            EmbeddingSet(np.zeros((3, 2)), np.array([0, 1]))

    def test_from_raw_canonicalizes(self):
        e = EmbeddingSet.from_raw(np.zeros((3, 2)), np.array([7, 7, 3]))
        assert e.labels.tolist() == [0, 0, 1]
        assert e.num_classes == 2

    def test_immutable(self):
        e = EmbeddingSet(np.zeros((2, 2)), np.array([0, 1]))
        with pytest.raises(ValueError):
            e.data[0, 0] = 1.0


class TestHashCode:
    def test_round_trip_exhaustive_small_d(self):
        for d in range(1, 9):
            for k in range(1, d + 1):
                for bits in itertools.combinations(range(d), k):
                    code = HashCode(bits, d)
                    assert HashCode.from_dense(code.to_dense()) == code
                    assert HashCode.from_words(code.to_words(), d) == code

    def test_round_trip_d64_and_multiword(self):
        rng = Rng(5)
        for d in (64, 70, 130):
            for code in random_k_sparse_codes(rng, 25, d, 3):
                words = code.to_words()
                assert words.size == (d + 63) // 64
                assert HashCode.from_words(words, d) == code
                assert HashCode.from_dense(code.to_dense()) == code

    def test_dense_matches_bits(self):
        code = HashCode((1, 3), 5)
        assert code.to_dense().tolist() == [False, True, False, True, False]
        assert code.k == 2

    def test_validation(self):
        with pytest.raises(ValidationError):
            HashCode((3, 1), 5)  # not increasing
        with pytest.raises(ValidationError):
            HashCode((1, 1), 5)  # duplicate
        with pytest.raises(ValidationError):
            HashCode((5,), 5)  # out of range
        with pytest.raises(ValidationError):
            HashCode((), 5)  # k = 0

    def test_intersects(self):
        assert HashCode((0, 2), 4).intersects(HashCode((2, 3), 4))
        assert not HashCode((0, 1), 4).intersects(HashCode((2, 3), 4))


class TestSparsityConfig:
    def test_uniform(self):
        cfg = SparsityConfig.uniform(4, 2, 0.5)
        assert cfg.lam.tolist() == [0.5] * 4

    def test_validation(self):
        with pytest.raises(ValidationError):
            SparsityConfig(4, 5, np.zeros(4))
        with pytest.raises(ValidationError):
            SparsityConfig(4, 2, -np.ones(4))


class TestRng:
    def test_identical_streams(self):
        a, b = Rng(123), Rng(123)
        assert np.array_equal(a.normal(size=10), b.normal(size=10))
        assert np.array_equal(a.integers(0, 100, size=10), b.integers(0, 100, size=10))
        assert np.array_equal(a.permutation(20), b.permutation(20))

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).normal(size=10), Rng(2).normal(size=10))

    def test_spawn_deterministic(self):
        a = Rng(9).spawn()
        b = Rng(9).spawn()
        assert np.array_equal(a.normal(size=5), b.normal(size=5))

    def test_uniform_codes_valid(self):
        codes = random_k_sparse_codes(Rng(4), 50, 10, 3)
        assert all(c.k == 3 and c.d == 10 for c in codes)
