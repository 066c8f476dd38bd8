import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import binarize_exhaustive
from tempattn.masks import (
    BrushConfig,
    MaskArtifacts,
    binarize_patch_mask,
    downsample_mask,
    generate_freeform_mask,
    mask_ratio,
    square_side,
)


def test_deterministic_per_seed():
    a = generate_freeform_mask(32, 32, 7)
    b = generate_freeform_mask(32, 32, 7)
    c = generate_freeform_mask(32, 32, 8)
    assert a.dtype == np.uint8 and set(np.unique(a)) <= {0, 1}
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_contains_the_square():
    side = square_side(64, 64)
    assert side == 24
    m = generate_freeform_mask(64, 64, 3)
    # some side x side window is fully missing
    sat = np.pad(m.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    win = sat[side:, side:] - sat[:-side, side:] - sat[side:, :-side] + sat[:-side, :-side]
    assert (win == side * side).any()


def test_too_small_raises():
    with pytest.raises(ValueError):
        generate_freeform_mask(15, 32, 0)


def test_ratio_usually_at_most_half():
    ratios = np.array([mask_ratio(generate_freeform_mask(32, 32, s)) for s in range(2000)])
    assert (ratios <= 0.5).mean() >= 0.99
    assert ratios.min() > 0


def test_no_strokes_leaves_only_square():
    cfg = BrushConfig(min_strokes=0, max_strokes=0)
    m = generate_freeform_mask(32, 32, 0, cfg)
    assert m.sum() == square_side(32, 32) ** 2


class TestDownsample:
    def test_block_max(self):
        m = np.zeros((8, 8), dtype=np.uint8)
        m[5, 2] = 1
        low = downsample_mask(m, 4, 4)
        expect = np.zeros((4, 4), dtype=np.uint8)
        expect[2, 1] = 1
        np.testing.assert_array_equal(low, expect)

    def test_non_integer_factor(self):
        with pytest.raises(ValueError):
            downsample_mask(np.zeros((10, 10)), 4, 4)

    @given(arrays(np.uint8, (12, 12), elements=st.integers(0, 1)))
    def test_coverage_preserved(self, m):
        # every missing pixel lands in a missing cell
        low = downsample_mask(m, 4, 4)
        assert np.all(np.repeat(np.repeat(low, 3, 0), 3, 1) >= m)


class TestBinarize:
    def test_exhaustive_3x3_stride_3(self):
        # all 512 masks on a 3x3 grid, one 3x3 key
        for bits in itertools.product([0, 1], repeat=9):
            m = np.array(bits, dtype=np.uint8).reshape(3, 3)
            np.testing.assert_array_equal(binarize_patch_mask(m, 3, 3), binarize_exhaustive(m, 3, 3))

    @given(arrays(np.uint8, (7, 9), elements=st.integers(0, 1)), st.sampled_from([1, 3, 5]), st.integers(1, 3))
    def test_matches_exhaustive(self, m, size, stride):
        np.testing.assert_array_equal(binarize_patch_mask(m, size, stride), binarize_exhaustive(m, size, stride))

    def test_batched(self, rng):
        m = (rng.random((3, 6, 6)) < 0.2).astype(np.uint8)
        got = binarize_patch_mask(m, 3)
        for b in range(3):
            np.testing.assert_array_equal(got[b], binarize_exhaustive(m[b], 3))

    def test_too_small(self):
        with pytest.raises(ValueError):
            binarize_patch_mask(np.zeros((2, 2)), 3)


def test_artifacts_broadcast():
    m = np.zeros((16, 16), dtype=np.uint8)
    m[:4, :4] = 1
    art = MaskArtifacts.build(m, 4, 4, 3)
    assert art.low.shape == (1, 4, 4) and art.m_prime.shape == (1, 4)
    np.testing.assert_array_equal(art.m_prime[0], [0, 1, 1, 1])
    full = art.broadcast(16)
    assert full.shape == (1, 16, 4) and np.all(full == art.m_prime[:, None, :])
