from fractions import Fraction

import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score

from flowhash import (
    HashCode,
    Rng,
    ValidationError,
    build_index,
    collision_counts,
    measured_suf,
    nmi,
    precision_at,
    query,
    random_k_sparse_codes,
    scan_candidates,
    theoretical_suf,
    theoretical_suf_exact,
)
from flowhash.index import metrics_row


def single_bit_index(bits, labels, embeddings=None, d=None):
    d = d or (max(bits) + 1)
    codes = [HashCode((b,), d) for b in bits]
    if embeddings is None:
        embeddings = np.zeros((len(bits), 2))
    return build_index(codes, embeddings, np.asarray(labels, dtype=np.int64))


class TestBuild:
    def test_forced_buckets(self):
        ix = single_bit_index([0, 0, 1], [0, 0, 1], d=2)
        assert ix.buckets[0].tolist() == [0, 1]
        assert ix.buckets[1].tolist() == [2]

    def test_k_equals_d_fills_every_bucket(self):
        codes = [HashCode((0, 1), 2)] * 3
        ix = build_index(codes, np.zeros((3, 2)), np.zeros(3, dtype=np.int64))
        assert all(b.tolist() == [0, 1, 2] for b in ix.buckets)

    def test_rebuild_identical(self):
        rng = Rng(1)
        codes = random_k_sparse_codes(rng, 20, 6, 2)
        emb = rng.normal(size=(20, 3))
        labels = rng.integers(0, 3, size=20).astype(np.int64)
        a = build_index(codes, emb, labels)
        b = build_index(codes, emb, labels)
        assert all(np.array_equal(x, y) for x, y in zip(a.buckets, b.buckets))

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            build_index(
                [HashCode((0,), 2), HashCode((0,), 3)],
                np.zeros((2, 2)),
                np.zeros(2, dtype=np.int64),
            )


class TestQuery:
    def test_single_bucket_true_neighbor(self):
        emb = np.array([[0.0, 0.0], [5.0, 5.0]])
        ix = single_bit_index([0, 1], [0, 1], embeddings=emb, d=2)
        res = query(ix, HashCode((0,), 2), np.array([0.1, 0.1]), top_m=3)
        assert res.retrieved.tolist() == [0]
        assert res.candidate_count == 1

    def test_disjoint_code_empty_result(self):
        ix = single_bit_index([0, 0], [0, 0], d=3)
        res = query(ix, HashCode((2,), 3), np.zeros(2), top_m=2)
        assert res.candidate_count == 0
        assert res.retrieved.size == 0

    def test_rerank_matches_brute_force(self):
        rng = Rng(44)
        for _ in range(20):
            n, d, dim = 40, 6, 4
            codes = random_k_sparse_codes(rng, n, d, 2)
            emb = rng.normal(size=(n, dim))
            labels = rng.integers(0, 3, size=n).astype(np.int64)
            ix = build_index(codes, emb, labels)
            q_code = random_k_sparse_codes(rng, 1, d, 2)[0]
            q_emb = rng.normal(size=dim)
            res = query(ix, q_code, q_emb, top_m=10)
            cand = scan_candidates(codes, q_code)
            dists = np.linalg.norm(emb[cand] - q_emb, axis=1)
            expected = cand[np.lexsort((cand, dists))][:10]
            assert res.retrieved.tolist() == expected.tolist()
            assert res.candidate_count == cand.size

    def test_exclude_self(self):
        ix = single_bit_index([0, 0], [0, 0], d=2)
        res = query(ix, HashCode((0,), 2), np.zeros(2), top_m=5, exclude=0)
        assert res.retrieved.tolist() == [1]

    def test_candidates_match_scan_oracle(self):
        rng = Rng(45)
        for _ in range(20):
            n, d = 60, 8
            codes = random_k_sparse_codes(rng, n, d, 2)
            ix = build_index(codes, np.zeros((n, 2)), np.zeros(n, dtype=np.int64))
            q_code = random_k_sparse_codes(rng, 1, d, 2)[0]
            res = query(ix, q_code, np.zeros(2), top_m=n)
            cand = scan_candidates(codes, q_code)
            assert sorted(res.retrieved.tolist()) == cand.tolist()


class TestPrecision:
    def test_all_correct(self):
        emb = np.zeros((4, 2))
        ix = single_bit_index([0, 0, 0, 0], [1, 1, 1, 1], embeddings=emb, d=2)
        results = [query(ix, HashCode((0,), 2), np.zeros(2), top_m=4)]
        assert precision_at(ix, results, [1], 4) == 1.0

    def test_empty_retrieval_counts_zero(self):
        ix = single_bit_index([0], [0], d=2)
        results = [
            query(ix, HashCode((1,), 2), np.zeros(2), top_m=1),  # empty
            query(ix, HashCode((0,), 2), np.zeros(2), top_m=1),  # hits label 0
        ]
        assert precision_at(ix, results, [0, 0], 1) == pytest.approx(0.5)

    def test_mean_of_two_queries(self):
        emb = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        ix = single_bit_index([0, 0, 0, 0], [0, 0, 1, 1], embeddings=emb, d=1)
        r1 = query(ix, HashCode((0,), 1), np.array([-0.5, 0.0]), top_m=2)
        r2 = query(ix, HashCode((0,), 1), np.array([1.1, 0.0]), top_m=2)
        # r1 top-2 are items 0,1 (both label 0); r2 top-2 are items 1,2 (one matches)
        assert precision_at(ix, [r1, r2], [0, 0], 2) == pytest.approx(0.75)

    def test_topk_capped_by_retrieved(self):
        ix = single_bit_index([0], [0], d=2)
        res = query(ix, HashCode((0,), 2), np.zeros(2), top_m=1)
        assert precision_at(ix, [res], [0], 16) == 1.0


class TestNmi:
    def test_perfect_buckets(self):
        ix = single_bit_index([0, 0, 1, 1], [0, 0, 1, 1], d=2)
        assert nmi(ix) == 1.0

    def test_independent_buckets(self):
        ix = single_bit_index([0, 1, 0, 1], [0, 0, 1, 1], d=2)
        assert nmi(ix) == 0.0

    def test_matches_sklearn_on_small_case(self):
        bits = [0, 2, 2, 1, 0, 1]
        labels = [0, 0, 1, 1, 2, 2]
        ix = single_bit_index(bits, labels, d=3)
        expected = normalized_mutual_info_score(labels, bits, average_method="arithmetic")
        assert nmi(ix) == pytest.approx(expected, abs=1e-12)

    def test_random_cases_match_sklearn(self):
        rng = Rng(50)
        for _ in range(10):
            n = 30
            bits = rng.integers(0, 5, size=n).tolist()
            labels = rng.integers(0, 4, size=n).astype(np.int64)
            labels[:4] = [0, 1, 2, 3]
            labels, _ = __import__("flowhash").canonicalize_labels(labels)
            ix = single_bit_index(bits, labels, d=5)
            expected = normalized_mutual_info_score(
                labels.tolist(), bits, average_method="arithmetic"
            )
            assert nmi(ix) == pytest.approx(expected, abs=1e-12)
            assert 0.0 <= nmi(ix) <= 1.0

    def test_requires_k1(self):
        codes = [HashCode((0, 1), 3)] * 2
        ix = build_index(codes, np.zeros((2, 2)), np.zeros(2, dtype=np.int64))
        with pytest.raises(ValidationError):
            nmi(ix)


class TestSuf:
    def test_full_scan_equivalence(self):
        ix = single_bit_index([0] * 10, [0] * 10, d=2)
        # external queries hitting everything: SUF = 1
        assert measured_suf(ix, ix.item_codes, exclude_self=False) == 1.0

    def test_tenth_retrieval(self):
        bits = list(range(10)) * 10  # 10 buckets x 10 items
        ix = single_bit_index(bits, [0] * 100, d=10)
        assert measured_suf(ix, ix.item_codes, exclude_self=False) == pytest.approx(10.0)

    def test_theoretical_values(self):
        assert theoretical_suf_exact(64, 1) == Fraction(64, 1)
        assert theoretical_suf_exact(64, 2) == Fraction(4032, 250)
        assert theoretical_suf(64, 1).suf == 64.0

    def test_d_much_larger_than_k_approaches_ratio(self):
        t = theoretical_suf(4096, 2)
        assert t.suf == pytest.approx(4096 / 4, rel=2e-3)

    def test_small_d_returns_one(self):
        assert theoretical_suf(3, 2).suf == 1.0  # any two codes collide

    def test_variance_factor(self):
        t = theoretical_suf(64, 1)
        p_collide = 1 / 64
        assert t.nq_fraction == pytest.approx(p_collide)
        assert t.variance_factor == pytest.approx(p_collide * (1 - p_collide))

    def test_monte_carlo_agreement_small(self):
        rng = Rng(60)
        n, d, k = 4000, 16, 1
        codes = random_k_sparse_codes(rng, n, d, k)
        ix = build_index(codes, np.zeros((n, 1)), np.zeros(n, dtype=np.int64))
        suf = measured_suf(ix)
        theory = theoretical_suf(d, k)
        expect_nq = (n - 1) * theory.nq_fraction
        se = np.sqrt((n - 1) * theory.variance_factor / n)
        lo, hi = n / (expect_nq + 3 * se), n / (expect_nq - 3 * se)
        assert lo <= suf <= hi


class TestCollisionKernels:
    def test_engines_agree(self):
        rng = Rng(61)
        items = random_k_sparse_codes(rng, 300, 70, 3)  # two-word codes
        queries = random_k_sparse_codes(rng, 50, 70, 3)
        a = collision_counts(items, queries, engine="python")
        b = collision_counts(items, queries, engine="numba")
        assert np.array_equal(a, b)

    def test_counts_match_scan(self):
        rng = Rng(62)
        items = random_k_sparse_codes(rng, 80, 9, 2)
        queries = random_k_sparse_codes(rng, 10, 9, 2)
        counts = collision_counts(items, queries)
        for qi, q_code in enumerate(queries):
            assert counts[qi] == scan_candidates(items, q_code).size

    def test_subtract_self(self):
        codes = [HashCode((0,), 2), HashCode((1,), 2)]
        counts = collision_counts(codes, codes, subtract_self=True)
        assert counts.tolist() == [0, 0]


class TestMetricsRow:
    def test_format(self):
        header, row = metrics_row("mcf", 1, 16, 8.0, [(1, 1.0), (4, 0.5)], 0.9)
        assert header == "method,k,d,SUF,pr1,pr4,nmi"
        assert row == "mcf,1,16,8.0000,1.0000,0.5000,0.9000"

    def test_empty_nmi_column(self):
        _, row = metrics_row("th", 2, 16, 4.0, [(1, 1.0)], None)
        assert row.endswith(",")
