"""Deterministic mock encoder.

Independent reimplementation of the client side's built-in clip encoder,
kept algorithm-identical so protocol conformance can be checked
end-to-end:

  * frames scaled to [0, 1], split into an 8x8 grid of equal patches
    (height and width must be divisible by 8);
  * features = per-frame patch means, then per-frame patch means of
    |frame_j - frame_{j-1}| (frame 0's block is zero), flattened
    frame-major; length 2 * 64 * 8 = 1024;
  * projected by default_rng(seed).standard_normal((dim, 1024)) / sqrt(1024)
    in float64, then L2-normalized; an all-zero feature vector (or a zero
    projection) maps to the zero embedding.
"""

from __future__ import annotations

import numpy as np

GRID = 8
CLIP_LEN = 8
FEATURE_LEN = 2 * GRID * GRID * CLIP_LEN


class MockEncoder:
    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._proj = rng.standard_normal((dim, FEATURE_LEN)) / np.sqrt(FEATURE_LEN)

    def features(self, frames: np.ndarray) -> np.ndarray:
        """frames: (8, H, W) uint8 with H, W divisible by 8."""
        if frames.shape[0] != CLIP_LEN:
            raise ValueError(f"expected {CLIP_LEN} frames")
        h, w = frames.shape[1:]
        if h % GRID or w % GRID:
            raise ValueError(f"resolution ({h}, {w}) not divisible by {GRID}")
        scaled = frames.astype(np.float64) / 255.0
        bh, bw = h // GRID, w // GRID
        out = np.empty(FEATURE_LEN)
        pos = 0
        prev = None
        # means block, frame-major
        for j in range(CLIP_LEN):
            blocks = scaled[j].reshape(GRID, bh, GRID, bw)
            out[pos:pos + GRID * GRID] = blocks.mean(axis=(1, 3)).ravel()
            pos += GRID * GRID
        # temporal-difference block
        for j in range(CLIP_LEN):
            if j == 0:
                out[pos:pos + GRID * GRID] = 0.0
            else:
                d = np.abs(scaled[j] - scaled[j - 1]).reshape(GRID, bh, GRID, bw)
                out[pos:pos + GRID * GRID] = d.mean(axis=(1, 3)).ravel()
            pos += GRID * GRID
        return out

    def encode(self, frames: np.ndarray) -> np.ndarray:
        v = self.features(frames)
        if not v.any():
            return np.zeros(self.dim)
        y = self._proj @ v
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return np.zeros(self.dim)
        return y / norm
