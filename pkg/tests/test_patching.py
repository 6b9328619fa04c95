import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoclf import errors
from protoclf.kernels import get_backend
from protoclf.patching import (
    ATTENTION,
    BRUTE_FORCE,
    COSINE,
    NEG_L2,
    SLIDING,
    SelectorConfig,
    attention_scores,
    attention_select,
    enumerate_patches,
    generate_patches,
    pairwise_similarity,
    similarity,
    sliding_patches,
)


class TestSimilarity:
    def test_cosine_self_is_one(self, rng):
        for _ in range(5):
            v = rng.standard_normal(6)
            assert similarity(v, v, COSINE) == pytest.approx(1.0)

    def test_cosine_orthogonal(self):
        assert similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0]), COSINE) == 0.0

    def test_neg_l2_pythagorean(self):
        assert similarity(np.array([1.0, 2.0]), np.array([1.0, 2.0]), NEG_L2) == 0.0
        assert similarity(np.array([0.0, 0.0]), np.array([3.0, 4.0]), NEG_L2) == -5.0

    def test_zero_vector_cosine(self):
        with pytest.raises(errors.ZeroVector):
            similarity(np.zeros(3), np.ones(3), COSINE)

    def test_dim_mismatch(self):
        with pytest.raises(errors.DimMismatch):
            similarity(np.ones(3), np.ones(4), COSINE)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry_and_ranges(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(5) + 0.01, r.standard_normal(5) + 0.01
        cos = similarity(a, b, COSINE)
        assert similarity(b, a, COSINE) == pytest.approx(cos)
        assert -1 - 1e-12 <= cos <= 1 + 1e-12
        nl2 = similarity(a, b, NEG_L2)
        assert similarity(b, a, NEG_L2) == pytest.approx(nl2)
        assert nl2 <= 0

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    @settings(max_examples=25, deadline=None)
    def test_cosine_scale_invariant_neg_l2_translation_invariant(self, seed, alpha):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(4) + 0.01, r.standard_normal(4) + 0.01
        assert similarity(alpha * a, b, COSINE) == pytest.approx(similarity(a, b, COSINE))
        shift = r.standard_normal(4)
        assert similarity(a + shift, b + shift, NEG_L2) == pytest.approx(
            similarity(a, b, NEG_L2)
        )


class TestEnumerate:
    def test_eight_choose_four_is_seventy(self, rng):
        patches = enumerate_patches(rng.standard_normal((8, 3)), k=4)
        assert len(patches) == 70

    def test_full_sequence_single_patch(self, rng):
        patches = enumerate_patches(rng.standard_normal((3, 2)), k=3)
        assert len(patches) == 1
        assert patches[0].token_indices == (0, 1, 2)

    def test_matches_bitmask_oracle(self, rng):
        # oracle: all 2^l subsets filtered to size k
        l, k = 5, 2
        oracle = sorted(
            tuple(i for i in range(l) if mask >> i & 1)
            for mask in range(2**l)
            if bin(mask).count("1") == k
        )
        patches = enumerate_patches(rng.standard_normal((l, 3)), k=k)
        assert [p.token_indices for p in patches] == oracle
        assert len(patches) == 10

    def test_lexicographic_order_and_distinct(self, rng):
        patches = enumerate_patches(rng.standard_normal((6, 2)), k=3)
        keys = [p.token_indices for p in patches]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)

    def test_too_short(self, rng):
        with pytest.raises(errors.TooShort):
            enumerate_patches(rng.standard_normal((2, 3)), k=3)

    def test_overflow_guard(self, rng):
        with pytest.raises(errors.EnumerationOverflow):
            enumerate_patches(rng.standard_normal((10, 2)), k=5, cap=100)

    def test_patch_vec_is_exact_mean(self, rng):
        vecs = rng.standard_normal((6, 4))
        for patch in enumerate_patches(vecs, k=3):
            rows = vecs[list(patch.token_indices)].astype(np.float64)
            acc = np.zeros(4)
            for row in rows:
                acc += row
            assert np.allclose(patch.vec, acc / 3, rtol=1e-15, atol=1e-15)


class TestSliding:
    def test_window_count_without_dilation(self, rng):
        # 8 tokens, pairs of neighbors: (0,1) ... (6,7)
        patches = sliding_patches(rng.standard_normal((8, 3)), k=2, dilation=0)
        assert len(patches) == 7
        assert [p.token_indices for p in patches] == [(i, i + 1) for i in range(7)]

    def test_window_count_with_dilation(self, rng):
        # dilation 1 skips one token: (0,2) ... (5,7)
        patches = sliding_patches(rng.standard_normal((8, 3)), k=2, dilation=1)
        assert len(patches) == 6
        assert patches[0].token_indices == (0, 2)
        assert [p.token_indices for p in patches] == [(i, i + 2) for i in range(6)]

    def test_too_short_for_span(self, rng):
        with pytest.raises(errors.TooShort):
            sliding_patches(rng.standard_normal((4, 3)), k=3, dilation=1)

    def test_subset_of_enumeration(self, rng):
        for l in range(2, 11):
            vecs = rng.standard_normal((l, 3))
            for k in range(1, min(l, 3) + 1):
                full = {p.token_indices for p in enumerate_patches(vecs, k)}
                for dilation in range(3):
                    if l < 1 + (k - 1) * (dilation + 1):
                        continue
                    got = {p.token_indices for p in sliding_patches(vecs, k, dilation)}
                    assert got <= full
                    assert len(got) == l - (k - 1) * (dilation + 1)


class TestAttention:
    def test_default_config_yields_seventy_patches(self, rng):
        cfg = SelectorConfig(kind=ATTENTION, k=4, k_lim=10)
        selected, patches = attention_select(rng.standard_normal((12, 6)), cfg)
        assert len(selected) == 8  # n_w = min(10, 2*4)
        assert len(patches) == math.comb(8, 4) == 70

    def test_selection_forced_when_l_equals_k(self, rng):
        cfg = SelectorConfig(kind=ATTENTION, k=4, k_lim=10)
        selected, patches = attention_select(rng.standard_normal((4, 3)), cfg)
        assert list(selected) == [0, 1, 2, 3]
        assert len(patches) == 1

    def test_scores_match_dense_softmax_oracle(self, rng):
        # one token 10x the magnitude of the others
        vecs = rng.standard_normal((6, 4))
        vecs[2] *= 10.0
        d = vecs.shape[1]
        logits = vecs @ vecs.T / np.sqrt(d)
        dense = np.exp(logits)  # no max-shift: independent implementation
        dense /= dense.sum(axis=1, keepdims=True)
        oracle = dense.mean(axis=0)
        got = attention_scores(vecs)
        assert np.max(np.abs(got - oracle)) < 1e-6

    def test_embeddings_untouched(self, rng):
        vecs = rng.standard_normal((6, 4))
        before = vecs.copy()
        cfg = SelectorConfig(kind=ATTENTION, k=2, k_lim=10)
        _, patches = attention_select(vecs, cfg)
        assert np.array_equal(vecs, before)
        for p in patches:
            assert np.allclose(p.vec, vecs[list(p.token_indices)].mean(axis=0))

    def test_subset_of_enumeration(self, rng):
        for l in range(2, 11):
            vecs = rng.standard_normal((l, 3))
            for k in range(1, min(l, 3) + 1):
                full = {p.token_indices for p in enumerate_patches(vecs, k)}
                cfg = SelectorConfig(kind=ATTENTION, k=k, k_lim=10)
                _, got = attention_select(vecs, cfg)
                assert {p.token_indices for p in got} <= full

    def test_tie_breaks_to_lower_index(self):
        # identical rows: all scores equal, so selection must be 0..n_w-1
        vecs = np.tile(np.array([[1.0, 2.0, 3.0]]), (6, 1))
        cfg = SelectorConfig(kind=ATTENTION, k=2, k_lim=4)
        selected, _ = attention_select(vecs, cfg)
        assert list(selected) == [0, 1, 2, 3]


class TestSelectorsVsEnumeration:
    def test_selector_never_beats_enumeration(self, rng):
        for _ in range(10):
            l = int(rng.integers(4, 9))
            vecs = rng.standard_normal((l, 3))
            p = rng.standard_normal(3)
            k = 2
            full_best = max(
                similarity(patch.vec, p, COSINE) for patch in enumerate_patches(vecs, k)
            )
            for cfg in (
                SelectorConfig(kind=SLIDING, k=k),
                SelectorConfig(kind=SLIDING, k=k, dilation=1),
                SelectorConfig(kind=ATTENTION, k=k, k_lim=4),
            ):
                sel_best = max(
                    similarity(patch.vec, p, COSINE)
                    for patch in generate_patches(vecs, cfg)
                )
                assert sel_best <= full_best + 1e-12

    def test_brute_force_selector_dispatch(self, rng):
        vecs = rng.standard_normal((5, 3))
        cfg = SelectorConfig(kind=BRUTE_FORCE, k=2)
        got = generate_patches(vecs, cfg)
        assert len(got) == 10


class TestKernelBackends:
    def test_backends_agree(self, rng):
        a = rng.standard_normal((7, 5))
        b = rng.standard_normal((4, 5))
        pure = get_backend("pure")
        for kind_fn in ("pairwise_cosine", "pairwise_neg_l2"):
            try:
                native = get_backend("native")
            except ImportError:
                pytest.skip("native kernel not built")
            got_p = getattr(pure, kind_fn)(a, b)
            got_n = getattr(native, kind_fn)(np.ascontiguousarray(a), np.ascontiguousarray(b))
            assert np.allclose(got_p, got_n, rtol=1e-12, atol=1e-14)

    def test_pairwise_matches_scalar(self, rng):
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((3, 3))
        for kind in (COSINE, NEG_L2):
            mat = pairwise_similarity(a, b, kind)
            for i, j in itertools.product(range(4), range(3)):
                assert mat[i, j] == pytest.approx(similarity(a[i], b[j], kind), abs=1e-12)
