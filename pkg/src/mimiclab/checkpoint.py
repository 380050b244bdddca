"""Versioned binary checkpoints.

Layout (all integers and floats little-endian; floats 32-bit):

    offset  field
    0       magic  b"MLABCKPT"
    8       version u32 (currently 1)
    12      step u64
    20      obs_dim u32, act_dim u32
    28      n_hidden u32, then hidden sizes u32 each
    ..      act_limits f32 x act_dim
    ..      log_alpha f32, alpha_m f32, alpha_v f32, alpha_t u64
    ..      5 nets (actor, q1, q2, q1_target, q2_target):
                n_params u32, theta f32 x n
    ..      3 optimizers (actor, q1, q2):
                t u64, m f32 x n, v f32 x n
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointFormatError
from .sac import PolicyState, TrainerConfig, init_policy

MAGIC = b"MLABCKPT"
VERSION = 1


def save_checkpoint(path: str, policy: PolicyState) -> None:
    parts = [MAGIC, struct.pack("<IQ", VERSION, policy.step)]
    hidden = policy.actor.sizes[1:-1]
    parts.append(struct.pack("<II", policy.obs_dim, policy.act_dim))
    parts.append(struct.pack("<I", len(hidden)))
    parts.append(struct.pack(f"<{len(hidden)}I", *hidden))
    parts.append(policy.act_limits.astype("<f4").tobytes())
    parts.append(
        struct.pack(
            "<fffQ",
            policy.log_alpha,
            float(policy.alpha_opt.m[0]),
            float(policy.alpha_opt.v[0]),
            policy.alpha_opt.t,
        )
    )
    for net in (policy.actor, policy.q1, policy.q2, policy.q1_target,
                policy.q2_target):
        parts.append(struct.pack("<I", net.n_params))
        parts.append(net.theta.astype("<f4").tobytes())
    for opt in (policy.actor_opt, policy.q1_opt, policy.q2_opt):
        parts.append(struct.pack("<Q", opt.t))
        parts.append(opt.m.astype("<f4").tobytes())
        parts.append(opt.v.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointFormatError("checkpoint truncated")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").copy()


def load_checkpoint(path: str, config: TrainerConfig) -> PolicyState:
    """Rebuild a PolicyState; net sizes come from the file, not the config."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(8) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    (step,) = r.unpack("<Q")
    obs_dim, act_dim = r.unpack("<II")
    (n_hidden,) = r.unpack("<I")
    if n_hidden > 16:
        raise CheckpointFormatError(f"{path}: implausible hidden count")
    hidden = list(r.unpack(f"<{n_hidden}I"))
    act_limits = r.f32(act_dim).astype(np.float64)
    log_alpha, am, av, at = r.unpack("<fffQ")

    import dataclasses

    cfg = dataclasses.replace(config, hidden=tuple(hidden))
    policy = init_policy(obs_dim, act_limits, cfg)
    policy.step = step
    policy.log_alpha = float(log_alpha)
    policy.alpha_opt.m[0] = am
    policy.alpha_opt.v[0] = av
    policy.alpha_opt.t = at
    for net in (policy.actor, policy.q1, policy.q2, policy.q1_target,
                policy.q2_target):
        (n,) = r.unpack("<I")
        if n != net.n_params:
            raise CheckpointFormatError(
                f"{path}: parameter count {n} != expected {net.n_params}"
            )
        net.set_theta(r.f32(n))
    for opt, net in ((policy.actor_opt, policy.actor),
                     (policy.q1_opt, policy.q1),
                     (policy.q2_opt, policy.q2)):
        (t,) = r.unpack("<Q")
        opt.t = t
        opt.m[:] = r.f32(net.n_params)
        opt.v[:] = r.f32(net.n_params)
    if r.off != len(r.data):
        raise CheckpointFormatError(f"{path}: trailing bytes")
    return policy
