"""Pretrained video-transformer encoder behind the bridge protocol.

Wraps a Hugging Face TimeSformer-family checkpoint. Preprocessing is fixed
and documented: grayscale frames are replicated to 3 channels, resized to
the model's input resolution, scaled to [0, 1], and normalized with
mean 0.45 / std 0.225 per channel. The embedding is a pooled reduction of
the final hidden states; pooling is a config field ("mean" over tokens or
"cls" for the class token) rather than a fixed claim about any particular
training recipe. Inference runs in no-grad mode so identical inputs give
identical embeddings.
"""

from __future__ import annotations

import numpy as np

DEFAULT_MODEL = "facebook/timesformer-base-finetuned-k400"
NORM_MEAN = 0.45
NORM_STD = 0.225


class RealEncoder:
    def __init__(self, model_id: str = DEFAULT_MODEL, pooling: str = "mean"):
        if pooling not in ("mean", "cls"):
            raise ValueError(f"unknown pooling {pooling!r}")
        try:
            import torch
            from transformers import TimesformerModel
        except ImportError as e:
            raise RuntimeError(
                "real-model serving needs the [real] extra "
                "(torch + transformers)"
            ) from e
        self._torch = torch
        self.pooling = pooling
        self.model = TimesformerModel.from_pretrained(model_id)
        self.model.eval()
        self.input_size = int(self.model.config.image_size)
        self.num_frames = int(self.model.config.num_frames)
        self.dim = int(self.model.config.hidden_size)

    def _preprocess(self, frames: np.ndarray) -> "object":
        torch = self._torch
        n, h, w = frames.shape
        x = torch.from_numpy(frames.astype(np.float32) / 255.0)
        x = x.unsqueeze(1).repeat(1, 3, 1, 1)  # grayscale -> 3 channels
        x = torch.nn.functional.interpolate(
            x, size=(self.input_size, self.input_size), mode="bilinear",
            align_corners=False,
        )
        x = (x - NORM_MEAN) / NORM_STD
        # pad or trim the time axis to the model's expected frame count
        if n < self.num_frames:
            pad = x[-1:].repeat(self.num_frames - n, 1, 1, 1)
            x = torch.cat([x, pad], dim=0)
        elif n > self.num_frames:
            x = x[: self.num_frames]
        return x.unsqueeze(0)  # (1, T, C, H, W)

    def encode(self, frames: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            out = self.model(pixel_values=self._preprocess(frames))
        hidden = out.last_hidden_state[0]  # (tokens, dim)
        if self.pooling == "cls":
            vec = hidden[0]
        else:
            vec = hidden.mean(dim=0)
        return vec.numpy().astype(np.float64)
