"""Per-timestep imitation reward: silhouette IoU, embedding similarity,
regularization penalties, their weighted combination, and the sim-step to
video-frame alignment rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .errors import DimensionMismatch, ResolutionMismatch

FOOT_SPEED_DEADBAND = 0.01  # m/s, below this a grounded foot counts as still
AIRTIME_CAP = 0.5           # s, air-time bonus saturates here


@dataclass(frozen=True)
class RewardWeights:
    """Combination weights and per-term regularization coefficients.

    gamma_reg is the regularization weight (kept separate from the RL
    discount). Defaults calibrated so each term's typical magnitude at the
    stand pose sits within an order of magnitude of the others; see
    scripts/calibrate_weights.py.
    """

    alpha: float = 0.02      # video-similarity weight
    beta: float = 1.0        # mask-IoU weight
    gamma_reg: float = 1.0   # regularization weight
    c_torque: float = 1e-3
    c_action_rate: float = 1e-2
    c_joint_vel: float = 1e-4
    c_foot_slide: float = 0.1
    c_airtime: float = 0.1
    c_tilt: float = 0.5


@dataclass(frozen=True)
class RegPenalty:
    """Per-term regularization values; each weighted term is <= 0 except
    the foot term, whose air-time bonus may make it positive."""

    p_torque: float = 0.0
    p_action_rate: float = 0.0
    p_joint_vel: float = 0.0
    p_foot: float = 0.0
    p_tilt: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.p_torque
            + self.p_action_rate
            + self.p_joint_vel
            + self.p_foot
            + self.p_tilt
        )


@dataclass
class RewardBreakdown:
    """One scored frame; r_total = alpha*s_video + beta*s_mask +
    gamma_reg*penalty.total."""

    s_video: float
    s_mask: float
    penalty: RegPenalty
    weights: RewardWeights
    frame: int = 0
    sim_step: int = 0

    @property
    def weighted_video(self) -> float:
        return self.weights.alpha * self.s_video

    @property
    def weighted_mask(self) -> float:
        return self.weights.beta * self.s_mask

    @property
    def weighted_reg(self) -> float:
        return self.weights.gamma_reg * self.penalty.total

    @property
    def r_total(self) -> float:
        return self.weighted_video + self.weighted_mask + self.weighted_reg


CSV_HEADER = (
    "episode,frame,sim_step,s_video,s_mask,p_torque,p_action_rate,"
    "p_joint_vel,p_foot,p_tilt,p_total,weighted_video,weighted_mask,"
    "weighted_reg,r_total"
)


def breakdown_csv_row(b: RewardBreakdown, episode: int = 0) -> str:
    vals = [
        b.s_video, b.s_mask,
        b.penalty.p_torque, b.penalty.p_action_rate, b.penalty.p_joint_vel,
        b.penalty.p_foot, b.penalty.p_tilt, b.penalty.total,
        b.weighted_video, b.weighted_mask, b.weighted_reg, b.r_total,
    ]
    nums = ",".join(f"{v:.10g}" for v in vals)
    return f"{episode},{b.frame},{b.sim_step},{nums}"


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 1.0 when both empty.

    A both-empty pair usually means the agent left the camera view, which
    callers should treat as suspicious; the value is still the agreement
    score 1.
    """
    if a.shape != b.shape:
        raise ResolutionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    a_bool = a > 0
    b_bool = b > 0
    inter = np.logical_and(a_bool, b_bool).sum()
    union = np.logical_or(a_bool, b_bool).sum()
    if union == 0:
        return 1.0
    return float(inter) / float(union)


def video_similarity(z_ref: np.ndarray, z_roll: np.ndarray) -> float:
    """Negative Euclidean distance between embeddings; 0 iff equal."""
    z_ref = np.asarray(z_ref, dtype=float)
    z_roll = np.asarray(z_roll, dtype=float)
    if z_ref.shape != z_roll.shape:
        raise DimensionMismatch(
            f"embedding dims differ: {z_ref.shape} vs {z_roll.shape}"
        )
    # + 0.0 turns -0.0 into 0.0 so equal embeddings score exactly 0
    return -float(np.linalg.norm(z_ref - z_roll)) + 0.0


def reg_penalty(
    prev: ph.SimState,
    curr: ph.SimState,
    action: np.ndarray,
    prev_action: np.ndarray,
    weights: RewardWeights,
) -> RegPenalty:
    """Regularization terms sampled at one simulator state.

    Torque and action-rate use the supplied action pair; joint velocities,
    foot contact/sliding, air time, and torso tilt come from `curr`.
    """
    action = np.asarray(action, dtype=float)
    prev_action = np.asarray(prev_action, dtype=float)
    p_torque = -weights.c_torque * float(action @ action)
    da = action - prev_action
    p_action_rate = -weights.c_action_rate * float(da @ da)
    jv = curr.joint_vels
    p_joint_vel = -weights.c_joint_vel * float(jv @ jv)

    slide = 0.0
    for contact, speed in zip(curr.foot_contact, curr.foot_speed):
        if contact > 0 and speed > FOOT_SPEED_DEADBAND:
            slide += speed
    air = float(np.minimum(curr.foot_airtime, AIRTIME_CAP).sum())
    p_foot = -weights.c_foot_slide * slide + weights.c_airtime * air

    p_tilt = -weights.c_tilt * curr.torso_tilt**2
    return RegPenalty(p_torque, p_action_rate, p_joint_vel, p_foot, p_tilt)


def combined_reward(
    s_video: float,
    s_mask: float,
    penalty: RegPenalty,
    weights: RewardWeights,
    frame: int = 0,
    sim_step: int = 0,
) -> RewardBreakdown:
    for name, v in (("s_video", s_video), ("s_mask", s_mask),
                    ("penalty", penalty.total)):
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite: {v}")
    return RewardBreakdown(
        s_video=s_video,
        s_mask=s_mask,
        penalty=penalty,
        weights=weights,
        frame=frame,
        sim_step=sim_step,
    )


def align_timesteps(sim_step: int, steps_per_frame: int, n_frames: int) -> int:
    """Video frame owning a simulation step: floor(step / k), clamped.

    Every step in [f*k, (f+1)*k) maps to frame f, so a frame's reward is
    assigned uniformly to its k steps; steps beyond the video clamp to the
    final frame.
    """
    if steps_per_frame < 1:
        raise ValueError("steps_per_frame must be >= 1")
    if sim_step < 0:
        raise ValueError("sim_step must be >= 0")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    return min(sim_step // steps_per_frame, n_frames - 1)
