"""Clip assembly and video embeddings.

A clip is the 8-frame window of masked frames ending at frame t (the
sequence start is handled by clamping indices at 0, so early clips repeat
the first frame while keeping the intermediate ones). Clips map to
d-dimensional embeddings through either

  * the built-in encoder: per-patch mean intensity and mean absolute
    temporal difference, projected by a fixed seed-generated Gaussian
    matrix and L2-normalized; deterministic and dependency-free, or
  * a bridge client speaking newline-delimited JSON to an out-of-process
    encoder service (for real pretrained video models).

Built-in feature recipe, normative for bridge mocks that must reproduce it:
frames are scaled to [0, 1], split into an 8x8 grid of equal patches
(resolution must be divisible by 8); feature vector = [per-frame patch
means, per-frame patch mean |f_j - f_{j-1}|] flattened frame-major
(frame 0's temporal-difference block is zero), length 2*64*8 = 1024;
projection matrix = default_rng(seed).standard_normal((d, 1024)) / sqrt(1024),
float64; output y = P v, then y / ||y|| unless v (or y) is all-zero, in
which case the zero vector is returned.
"""

from __future__ import annotations

import base64
import json
import os
import socket
from dataclasses import dataclass

import numpy as np

from .errors import (
    BridgeUnavailable,
    IndexOutOfRange,
    ProtocolError,
)
from .video import VideoSequence

CLIP_LEN = 8
PATCH_GRID = 8  # 8x8 patches per frame


@dataclass(frozen=True)
class EncoderParams:
    seed: int = 0
    dim: int = 64


@dataclass
class Clip:
    frames: np.ndarray  # (8, H, W) uint8, masked
    anchor: int         # frame index t the clip ends at

    def __post_init__(self):
        if self.frames.shape[0] != CLIP_LEN:
            raise ValueError(f"clip must have exactly {CLIP_LEN} frames")
        if self.anchor < 0:
            raise ValueError("anchor must be non-negative")


@dataclass
class Embedding:
    vector: np.ndarray  # (d,) float64
    anchor: int


def clip_indices(t: int, n: int, mode: str = "clamp") -> list[int]:
    """Frame indices for the clip anchored at t.

    mode="clamp" keeps intermediate frames by clamping t-7+j at zero;
    mode="repeat_first" pads with seven copies of frame 0 before frame t
    (the literal reading of the early-window rule; selectable for
    comparison).
    """
    if not (0 <= t < n):
        raise IndexOutOfRange(f"t={t} outside [0, {n})")
    if mode == "clamp":
        return [max(t - (CLIP_LEN - 1) + j, 0) for j in range(CLIP_LEN)]
    if mode == "repeat_first":
        if t >= CLIP_LEN - 1:
            return list(range(t - (CLIP_LEN - 1), t + 1))
        return [0] * (CLIP_LEN - 1) + [t]
    raise ValueError(f"unknown clip padding mode {mode!r}")


def assemble_clip(video: VideoSequence, t: int, mode: str = "clamp") -> Clip:
    """8-frame masked clip ending at t; video frames must be masked."""
    idx = clip_indices(t, video.n, mode)
    return Clip(frames=np.stack([video.frames[i] for i in idx]), anchor=t)


def clip_features(clip: Clip) -> np.ndarray:
    """1024-vector of per-patch means and temporal differences."""
    f = clip.frames.astype(np.float64) / 255.0
    _, h, w = f.shape
    if h % PATCH_GRID or w % PATCH_GRID:
        raise ValueError(
            f"frame resolution ({h}, {w}) must be divisible by {PATCH_GRID}"
        )
    ph_, pw = h // PATCH_GRID, w // PATCH_GRID
    # (8, gh, gw) patch means per frame
    patches = f.reshape(CLIP_LEN, PATCH_GRID, ph_, PATCH_GRID, pw)
    means = patches.mean(axis=(2, 4))
    diffs = np.zeros_like(means)
    d = np.abs(f[1:] - f[:-1]).reshape(CLIP_LEN - 1, PATCH_GRID, ph_, PATCH_GRID, pw)
    diffs[1:] = d.mean(axis=(2, 4))
    return np.concatenate([means.ravel(), diffs.ravel()])


_PROJ_CACHE: dict[tuple[int, int], np.ndarray] = {}


def projection_matrix(params: EncoderParams) -> np.ndarray:
    key = (params.seed, params.dim)
    mat = _PROJ_CACHE.get(key)
    if mat is None:
        rng = np.random.default_rng(params.seed)
        n_in = 2 * PATCH_GRID * PATCH_GRID * CLIP_LEN
        mat = rng.standard_normal((params.dim, n_in)) / np.sqrt(n_in)
        _PROJ_CACHE[key] = mat
    return mat


def encode_builtin(clip: Clip, params: EncoderParams = EncoderParams()) -> Embedding:
    v = clip_features(clip)
    if not v.any():
        return Embedding(np.zeros(params.dim), clip.anchor)
    y = projection_matrix(params) @ v
    norm = np.linalg.norm(y)
    if norm == 0.0:
        return Embedding(np.zeros(params.dim), clip.anchor)
    return Embedding(y / norm, clip.anchor)


# -- bridge client -------------------------------------------------------

BRIDGE_ENV_VAR = "NIL_BRIDGE_ADDR"
DEFAULT_TIMEOUT = 10.0  # s


def bridge_address(explicit: str | None = None) -> str:
    """Explicit address, else the NIL_BRIDGE_ADDR environment override."""
    addr = explicit or os.environ.get(BRIDGE_ENV_VAR, "")
    if not addr:
        raise BridgeUnavailable(
            "no bridge address configured (set NIL_BRIDGE_ADDR or pass one)"
        )
    return addr


class BridgeConnection:
    """Client for the newline-delimited JSON encoder protocol.

    On connect the server sends a handshake {"hello", "d", "model_name"};
    each request {"id", "h", "w", "frames": [8 base64 rows]} is answered by
    {"id", "d", "embedding": base64 little-endian float32} in order.
    """

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise BridgeUnavailable(f"bad bridge address {address!r}")
        self._timeout = timeout
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as e:
            raise BridgeUnavailable(f"cannot connect to {address}: {e}") from e
        self._file = self._sock.makefile("rwb")
        self._next_id = 0
        hello = self._read_message()
        if hello.get("hello") is None or "d" not in hello:
            raise ProtocolError(f"bad handshake: {hello!r}")
        self.dim = int(hello["d"])
        self.model_name = str(hello.get("model_name", ""))

    def _read_message(self) -> dict:
        try:
            line = self._file.readline()
        except socket.timeout as e:
            raise TimeoutError(f"bridge read timed out after {self._timeout}s") from e
        except OSError as e:
            raise BridgeUnavailable(f"bridge connection lost: {e}") from e
        if not line:
            raise BridgeUnavailable("bridge closed the connection")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"malformed bridge line: {line[:80]!r}") from e
        if not isinstance(msg, dict):
            raise ProtocolError(f"bridge message is not an object: {msg!r}")
        return msg

    def encode(self, clip: Clip) -> Embedding:
        h, w = clip.frames.shape[1:]
        req_id = self._next_id
        self._next_id += 1
        request = {
            "id": req_id,
            "h": h,
            "w": w,
            "frames": [
                base64.b64encode(f.tobytes()).decode("ascii") for f in clip.frames
            ],
        }
        try:
            self._file.write(json.dumps(request).encode() + b"\n")
            self._file.flush()
        except OSError as e:
            raise BridgeUnavailable(f"bridge write failed: {e}") from e
        msg = self._read_message()
        if "error" in msg:
            raise ProtocolError(f"bridge error response: {msg['error']!r}")
        if msg.get("id") != req_id:
            raise ProtocolError(
                f"response id {msg.get('id')!r} does not echo request {req_id}"
            )
        try:
            d = int(msg["d"])
            raw = base64.b64decode(msg["embedding"], validate=True)
        except (KeyError, ValueError, TypeError) as e:
            raise ProtocolError(f"bad response fields: {msg!r}") from e
        if d != self.dim:
            raise ProtocolError(f"response d={d} != handshake d={self.dim}")
        if len(raw) != 4 * d:
            raise ProtocolError(
                f"embedding payload {len(raw)} bytes, expected {4 * d}"
            )
        vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(vec)):
            raise ProtocolError("embedding contains non-finite values")
        return Embedding(vec, clip.anchor)

    def close(self) -> None:
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def encode_bridge(clip: Clip, conn: BridgeConnection) -> Embedding:
    return conn.encode(clip)
