"""Clip-assembly laws and built-in encoder behavior."""

import numpy as np
import pytest

from mimiclab.encoder import (
    CLIP_LEN,
    Clip,
    EncoderParams,
    assemble_clip,
    clip_features,
    clip_indices,
    encode_builtin,
    projection_matrix,
)
from mimiclab.errors import IndexOutOfRange
from mimiclab.video import VideoSequence


def tagged_video(n, h=16, w=16):
    """Frames whose top-left pixel stores the frame index for tracing."""
    frames = []
    for i in range(n):
        f = np.zeros((h, w), dtype=np.uint8)
        f[0, 0] = i
        frames.append(f)
    return VideoSequence(frames=frames, masks=None, fps=25.0)


class TestClipAssembly:
    def test_window_at_t9(self):
        assert clip_indices(9, 20) == [2, 3, 4, 5, 6, 7, 8, 9]

    def test_full_clamp_at_t0(self):
        assert clip_indices(0, 20) == [0] * 8

    def test_partial_clamp_keeps_intermediate_frames(self):
        assert clip_indices(3, 20) == [0, 0, 0, 0, 0, 1, 2, 3]

    def test_repeat_first_mode(self):
        assert clip_indices(3, 20, mode="repeat_first") == [0] * 7 + [3]
        assert clip_indices(9, 20, mode="repeat_first") == list(range(2, 10))

    def test_length_always_eight(self):
        for n in (1, 5, 20):
            for t in range(n):
                assert len(clip_indices(t, n)) == CLIP_LEN

    def test_trailing_window_when_t_ge_7(self):
        for t in range(7, 20):
            assert clip_indices(t, 20) == list(range(t - 7, t + 1))

    def test_consecutive_windows_overlap_in_seven(self):
        for t in range(7, 19):
            a = set(clip_indices(t, 20))
            b = set(clip_indices(t + 1, 20))
            assert len(a & b) == 7

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            clip_indices(20, 20)
        with pytest.raises(IndexOutOfRange):
            clip_indices(-1, 20)

    def test_assemble_uses_indices(self):
        video = tagged_video(20)
        clip = assemble_clip(video, 9)
        assert clip.anchor == 9
        assert [int(f[0, 0]) for f in clip.frames] == [2, 3, 4, 5, 6, 7, 8, 9]


class TestBuiltinEncoder:
    def test_zero_clip_zero_embedding(self):
        clip = Clip(np.zeros((8, 16, 16), dtype=np.uint8), anchor=0)
        emb = encode_builtin(clip)
        assert emb.vector.shape == (64,)
        assert np.all(emb.vector == 0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        frames = rng.integers(0, 256, (8, 16, 16), dtype=np.uint8)
        a = encode_builtin(Clip(frames.copy(), 0))
        b = encode_builtin(Clip(frames.copy(), 0))
        assert np.array_equal(a.vector, b.vector)

    def test_unit_norm_for_nonzero_input(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            frames = rng.integers(0, 256, (8, 16, 16), dtype=np.uint8)
            emb = encode_builtin(Clip(frames, 0))
            assert np.linalg.norm(emb.vector) == pytest.approx(1.0, abs=1e-12)

    def test_shift_sensitivity(self):
        rng = np.random.default_rng(3)
        frames = rng.integers(0, 256, (8, 64, 64), dtype=np.uint8)
        shifted = frames.copy()
        shifted[-1] = np.roll(shifted[-1], 8, axis=1)
        a = encode_builtin(Clip(frames, 0))
        b = encode_builtin(Clip(shifted, 0))
        assert np.linalg.norm(a.vector - b.vector) > 0.0

    def test_features_match_loop_oracle(self):
        # Independent slow reimplementation with explicit loops.
        rng = np.random.default_rng(4)
        frames = rng.integers(0, 256, (8, 16, 16), dtype=np.uint8)
        got = clip_features(Clip(frames, 0))
        f = frames.astype(np.float64) / 255.0
        means, diffs = [], []
        for j in range(8):
            for gy in range(8):
                for gx in range(8):
                    patch = f[j, gy * 2:(gy + 1) * 2, gx * 2:(gx + 1) * 2]
                    means.append(patch.mean())
        for j in range(8):
            for gy in range(8):
                for gx in range(8):
                    if j == 0:
                        diffs.append(0.0)
                    else:
                        d = np.abs(
                            f[j, gy * 2:(gy + 1) * 2, gx * 2:(gx + 1) * 2]
                            - f[j - 1, gy * 2:(gy + 1) * 2, gx * 2:(gx + 1) * 2]
                        )
                        diffs.append(d.mean())

        want = np.array(means + diffs)
        np.testing.assert_allclose(got, want, atol=1e-15, rtol=0)

    def test_custom_dim_and_seed(self):
        rng = np.random.default_rng(5)
        frames = rng.integers(0, 256, (8, 16, 16), dtype=np.uint8)
        e32 = encode_builtin(Clip(frames, 0), EncoderParams(seed=7, dim=32))
        assert e32.vector.shape == (32,)
        e0 = encode_builtin(Clip(frames, 0), EncoderParams(seed=0))
        e7 = encode_builtin(Clip(frames, 0), EncoderParams(seed=7))
        assert not np.array_equal(e0.vector, e7.vector)

    def test_projection_matrix_is_documented_recipe(self):
        p = projection_matrix(EncoderParams(seed=3, dim=16))
        want = np.random.default_rng(3).standard_normal((16, 1024)) / np.sqrt(1024)
        assert np.array_equal(p, want)

    def test_indivisible_resolution_rejected(self):
        clip = Clip(np.zeros((8, 12, 16), dtype=np.uint8), anchor=0)
        with pytest.raises(ValueError):
            clip_features(clip)
