"""Closed-loop imitation training.

Episodes run for n_frames * k simulation steps (or until the agent falls).
At every k-th step the current state is rendered through the follow camera,
scored against the reference frame owning that step (silhouette IoU, clip
embedding distance, regularization), and the frame's reward is assigned to
each of its k steps. Transitions feed a replay buffer; after warmup every
environment step triggers one gradient update (update_every thins this).

Evaluation runs deterministic-policy episodes on fixed seeds and reports
mean mask IoU over the full reference length (frames after a fall count as
0), forward displacement, and episode return.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .encoder import (
    BridgeConnection,
    Clip,
    EncoderParams,
    assemble_clip,
    clip_indices,
    encode_builtin,
)
from .errors import ConfigError
from .render import Camera, follow_camera, render_frame, render_mask
from .reward import (
    CSV_HEADER,
    RewardBreakdown,
    RewardWeights,
    align_timesteps,
    breakdown_csv_row,
    combined_reward,
    mask_iou,
    reg_penalty,
    video_similarity,
)
from .sac import PolicyState, ReplayBuffer, TrainerConfig, act, init_policy, update_step
from .video import SIM_DT, VideoSequence

EVAL_SEED_BASE = 77_000  # fixed eval episode seeds, offset by episode index


class ClipEncoder:
    """Embeds the trailing 8-frame window of a growing frame list."""

    def __init__(self, params: EncoderParams = EncoderParams(),
                 bridge: BridgeConnection | None = None):
        self.params = params
        self.bridge = bridge

    @property
    def dim(self) -> int:
        return self.bridge.dim if self.bridge is not None else self.params.dim

    def encode_history(self, frames: list[np.ndarray], t: int) -> np.ndarray:
        idx = clip_indices(t, t + 1)
        clip = Clip(np.stack([frames[i] for i in idx]), anchor=t)
        if self.bridge is not None:
            return self.bridge.encode(clip).vector
        return encode_builtin(clip, self.params).vector


@dataclass
class ReferenceTrack:
    """Masked reference video with precomputed per-frame embeddings."""

    video: VideoSequence
    embeddings: np.ndarray  # (n, d)

    @classmethod
    def build(cls, video: VideoSequence, enc: ClipEncoder) -> "ReferenceTrack":
        if video.masks is None:
            raise ConfigError("reference video must carry masks")
        masked = [f * (m > 0) for f, m in zip(video.frames, video.masks)]
        embs = []
        for t in range(video.n):
            idx = clip_indices(t, video.n)
            clip = Clip(np.stack([masked[i] for i in idx]), anchor=t)
            if enc.bridge is not None:
                embs.append(enc.bridge.encode(clip).vector)
            else:
                embs.append(encode_builtin(clip, enc.params).vector)
        return cls(video=video, embeddings=np.stack(embs))

    @property
    def n(self) -> int:
        return self.video.n


@dataclass
class EvalMetrics:
    step: int
    episodes: int
    mean_iou: float
    mean_displacement: float
    mean_return: float
    entropy: float
    temperature: float
    critic_loss: float
    actor_loss: float

    CSV_HEADER = ("step,episodes,mean_iou,mean_displacement,mean_return,"
                  "entropy,temperature,critic_loss,actor_loss")

    def csv_row(self) -> str:
        return (
            f"{self.step},{self.episodes},{self.mean_iou:.10g},"
            f"{self.mean_displacement:.10g},{self.mean_return:.10g},"
            f"{self.entropy:.10g},{self.temperature:.10g},"
            f"{self.critic_loss:.10g},{self.actor_loss:.10g}"
        )


@dataclass
class TrainResult:
    policy: PolicyState
    metrics: list[EvalMetrics]
    episodes: int
    steps: int


def _frame_breakdown(
    morph, state, prev_state, action, prev_action, cam, ref: ReferenceTrack,
    enc: ClipEncoder, rollout_frames, weights, frame_idx, sim_step,
) -> tuple[RewardBreakdown, np.ndarray]:
    c = follow_camera(cam, state)
    frame = render_frame(state, morph, c)
    mask = render_mask(state, morph, c)
    rollout_frames.append(frame)
    t = len(rollout_frames) - 1
    z_roll = enc.encode_history(rollout_frames, t)
    s_v = video_similarity(ref.embeddings[frame_idx], z_roll)
    s_m = mask_iou(ref.video.masks[frame_idx], mask)
    pen = reg_penalty(prev_state, state, action, prev_action, weights)
    return (
        combined_reward(s_v, s_m, pen, weights, frame=frame_idx,
                        sim_step=sim_step),
        mask,
    )


def run_episode(
    morph,
    ref: ReferenceTrack,
    enc: ClipEncoder,
    cam: Camera,
    weights: RewardWeights,
    config: TrainerConfig,
    reset_seed: int,
    action_fn,
    transition_hook=None,
    breakdown_hook=None,
):
    """Roll one episode; returns (frames count, displacement, return, ious).

    action_fn(obs, sim_step) -> torque action. transition_hook receives
    (obs, a_norm, r, next_obs, done, sim_step) per step when set.
    """
    k = config.steps_per_frame
    n = ref.n
    state = ph.reset(morph, reset_seed)
    prev_state = state
    limits = np.array([j.torque_limit for j in morph.joints])
    action = np.zeros(morph.num_joints)
    prev_action = np.zeros(morph.num_joints)
    rollout_frames: list[np.ndarray] = []
    ious: list[float] = []
    obs = ph.observe(morph, state)
    x0 = float(state.root_pos[0])
    ep_return = 0.0
    reward = 0.0
    fell = False
    for s in range(n * k):
        if s % k == 0:
            f = align_timesteps(s, k, n)
            breakdown, mask = _frame_breakdown(
                morph, state, prev_state, action, prev_action, cam, ref, enc,
                rollout_frames, weights, f, s,
            )
            ious.append(breakdown.s_mask)
            reward = breakdown.r_total
            if config.divide_reward_by_k:
                reward /= k
            if breakdown_hook is not None:
                breakdown_hook(breakdown)
        prev_action = action
        action = action_fn(obs, s)
        prev_state = state
        state = ph.step(morph, state, action, SIM_DT)
        next_obs = ph.observe(morph, state)
        fell = ph.is_fallen(morph, state)
        stop = False
        if transition_hook is not None:
            stop = transition_hook(
                obs.astype(np.float32),
                (action / limits).astype(np.float32),
                reward,
                next_obs.astype(np.float32),
                1.0 if fell else 0.0,
                s,
            )
        obs = next_obs
        ep_return += reward
        if fell or stop:
            break
    displacement = float(state.root_pos[0]) - x0
    # frames never rendered (after a fall) count as zero-IoU
    mean_iou = float(np.sum(ious) / n)
    return len(ious), displacement, ep_return, mean_iou, fell


def evaluate(
    morph, ref, enc, cam, weights, config, policy, episodes,
    breakdown_hook=None,
) -> tuple[float, float, float]:
    """Deterministic-policy episodes on fixed seeds; returns mean
    (IoU, displacement, return)."""
    ious, disps, rets = [], [], []
    for e in range(episodes):
        def action_fn(obs, s):
            return act(policy, obs, deterministic=True)
        _, disp, ret, miou, _ = run_episode(
            morph, ref, enc, cam, weights, config,
            reset_seed=EVAL_SEED_BASE + e, action_fn=action_fn,
            breakdown_hook=breakdown_hook,
        )
        ious.append(miou)
        disps.append(disp)
        rets.append(ret)
    return float(np.mean(ious)), float(np.mean(disps)), float(np.mean(rets))


def train_loop(
    morph,
    reference: VideoSequence,
    config: TrainerConfig,
    weights: RewardWeights = RewardWeights(),
    cam: Camera = Camera(),
    encoder: ClipEncoder | None = None,
    out_dir: str | None = None,
    checkpoint_fn=None,
    log_file=None,
) -> TrainResult:
    """Off-policy imitation training against a masked reference video."""
    enc = encoder or ClipEncoder()
    if reference.resolution != (cam.res_h, cam.res_w):
        raise ConfigError(
            f"reference resolution {reference.resolution} != camera "
            f"({cam.res_h}, {cam.res_w})"
        )
    ref = ReferenceTrack.build(reference, enc)
    obs_dim = ph.observation_dim(morph)
    limits = np.array([j.torque_limit for j in morph.joints])
    policy = init_policy(obs_dim, limits, config,
                         obs_scale=ph.observation_scale(morph))
    buffer = ReplayBuffer(
        min(config.buffer_capacity, max(config.total_steps, 1)),
        obs_dim,
        morph.num_joints,
    )
    rng = np.random.default_rng(config.seed)
    metrics: list[EvalMetrics] = []
    reward_log = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        reward_log = open(os.path.join(out_dir, "reward_breakdown.csv"), "w")
        reward_log.write(CSV_HEADER + "\n")
    last_report = None
    global_step = 0
    episode = 0

    def maybe_eval():
        miou, disp, ret = evaluate(
            morph, ref, enc, cam, weights, config, policy,
            config.eval_episodes,
        )
        m = EvalMetrics(
            step=global_step,
            episodes=episode,
            mean_iou=miou,
            mean_displacement=disp,
            mean_return=ret,
            entropy=last_report.entropy_estimate if last_report else 0.0,
            temperature=policy.temperature,
            critic_loss=last_report.critic_loss if last_report else 0.0,
            actor_loss=last_report.actor_loss if last_report else 0.0,
        )
        metrics.append(m)
        if out_dir is not None:
            path = os.path.join(out_dir, "metrics.csv")
            new = not os.path.exists(path)
            with open(path, "a") as fh:
                if new:
                    fh.write(EvalMetrics.CSV_HEADER + "\n")
                fh.write(m.csv_row() + "\n")
        if checkpoint_fn is not None:
            checkpoint_fn(policy, global_step, len(metrics))
        if log_file is not None:
            print(
                f"step {global_step} iou {miou:.3f} disp {disp:.3f} "
                f"ret {ret:.1f} T {policy.temperature:.4f}",
                file=log_file,
                flush=True,
            )

    try:
        while global_step < config.total_steps:
            episode_seed = int(rng.integers(0, 2**31 - 1))

            def action_fn(obs, s):
                if global_step < config.warmup_steps:
                    return rng.uniform(-1.0, 1.0, morph.num_joints) * limits
                return act(policy, obs, deterministic=False, rng=rng)

            def transition_hook(obs, a_norm, r, next_obs, done, s):
                nonlocal global_step, last_report
                buffer.add(obs, a_norm, r, next_obs, done)
                global_step += 1
                if (
                    global_step >= config.warmup_steps
                    and buffer.size >= config.batch_size
                    and global_step % config.update_every == 0
                ):
                    last_report = update_step(
                        policy, buffer.sample(rng, config.batch_size), config, rng
                    )
                if global_step % config.eval_interval == 0:
                    maybe_eval()
                return global_step >= config.total_steps

            def breakdown_hook(b: RewardBreakdown):
                if reward_log is not None:
                    reward_log.write(breakdown_csv_row(b, episode) + "\n")

            run_episode(
                morph, ref, enc, cam, weights, config,
                reset_seed=episode_seed, action_fn=action_fn,
                transition_hook=transition_hook, breakdown_hook=breakdown_hook,
            )
            episode += 1
            if global_step >= config.total_steps:
                break
    finally:
        if reward_log is not None:
            reward_log.close()
    return TrainResult(policy=policy, metrics=metrics, episodes=episode,
                       steps=global_step)
