"""Entropy-regularized off-policy actor-critic (soft actor-critic family).

The actor is a squashed Gaussian: raw net outputs are (mean, raw_std) per
action dimension, std = exp of a tanh-bounded log-std, actions are
tanh(mean + std*noise) scaled to torque limits. Critics score (obs,
normalized action) pairs; twin target critics provide the soft Bellman
target

    y = r + discount * (1 - done) * (min(Q1', Q2') - alpha_ent * log pi(a'|o'))

and the temperature is tuned by dual ascent toward a target entropy of
-dim(action). All gradients are computed by the hand-rolled backward
passes in nets.py and are covered by finite-difference checks in the test
suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalDivergence
from .nets import Adam, MLPNet

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_ALPHA_MIN = -5.0
LOG_ALPHA_MAX = 2.0
TANH_EPS = 1e-6


@dataclass
class TrainerConfig:
    discount: float = 0.99
    lr: float = 3e-4
    alpha_lr: float = 3e-5   # slow temperature adaptation
    batch_size: int = 256
    tau: float = 0.005          # target smoothing
    seed: int = 0
    total_steps: int = 500_000
    steps_per_frame: int = 20   # sim steps per video frame
    hidden: tuple[int, int] = (256, 256)
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 5_000
    update_every: int = 1
    eval_interval: int = 25_000
    eval_episodes: int = 2
    checkpoint_every_evals: int = 1
    init_temperature: float = 0.2
    mu_reg: float = 1e-3        # pre-tanh mean penalty, keeps tanh unsaturated
    divide_reward_by_k: bool = False  # per-frame reward split instead of repeat

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must be in [0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must be in (0, 1]")
        if self.init_temperature <= 0.0:
            raise ValueError("temperature must be positive")


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rew = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.pos = 0
        self.size = 0

    def add(self, obs, act, rew, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, self.size, size=batch_size)
        return (
            self.obs[idx],
            self.act[idx],
            self.rew[idx],
            self.next_obs[idx],
            self.done[idx],
        )


@dataclass
class PolicyState:
    actor: MLPNet
    q1: MLPNet
    q2: MLPNet
    q1_target: MLPNet
    q2_target: MLPNet
    log_alpha: float
    actor_opt: Adam
    q1_opt: Adam
    q2_opt: Adam
    alpha_opt: Adam
    act_limits: np.ndarray  # (A,) torque limits
    target_entropy: float
    obs_scale: np.ndarray | None = None  # fixed input scaling, or None
    step: int = 0

    @property
    def obs_dim(self) -> int:
        return self.actor.sizes[0]

    @property
    def act_dim(self) -> int:
        return self.act_limits.shape[0]

    @property
    def temperature(self) -> float:
        return math.exp(self.log_alpha)


def init_policy(
    obs_dim: int,
    act_limits: np.ndarray,
    config: TrainerConfig,
    dtype=np.float32,
    obs_scale: np.ndarray | None = None,
) -> PolicyState:
    act_dim = len(act_limits)
    h = list(config.hidden)
    actor = MLPNet([obs_dim] + h + [2 * act_dim], seed=config.seed,
                   dtype=dtype, final_scale=0.01)
    q1 = MLPNet([obs_dim + act_dim] + h + [1], seed=config.seed + 1, dtype=dtype)
    q2 = MLPNet([obs_dim + act_dim] + h + [1], seed=config.seed + 2, dtype=dtype)
    q1_t = MLPNet([obs_dim + act_dim] + h + [1], seed=config.seed + 1, dtype=dtype)
    q2_t = MLPNet([obs_dim + act_dim] + h + [1], seed=config.seed + 2, dtype=dtype)
    q1_t.set_theta(q1.theta)
    q2_t.set_theta(q2.theta)
    return PolicyState(
        actor=actor,
        q1=q1,
        q2=q2,
        q1_target=q1_t,
        q2_target=q2_t,
        log_alpha=math.log(config.init_temperature),
        actor_opt=Adam(actor.n_params, lr=config.lr, dtype=dtype),
        q1_opt=Adam(q1.n_params, lr=config.lr, dtype=dtype),
        q2_opt=Adam(q2.n_params, lr=config.lr, dtype=dtype),
        alpha_opt=Adam(1, lr=config.alpha_lr, dtype=np.float64),
        act_limits=np.asarray(act_limits, dtype=np.float64),
        target_entropy=-float(act_dim),
        obs_scale=None if obs_scale is None else np.asarray(obs_scale),
    )


def _log_std_from_raw(raw):
    t = np.tanh(raw)
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0), t


def _policy_terms(out, noise):
    """Shared squashed-Gaussian quantities for sampling and gradients."""
    A = out.shape[1] // 2
    mu, raw = out[:, :A], out[:, A:]
    log_std, raw_tanh = _log_std_from_raw(raw)
    std = np.exp(log_std)
    u = mu + std * noise
    t = np.tanh(u)
    # log pi in the normalized action space (before torque scaling)
    log_n = -0.5 * noise**2 - log_std - 0.5 * math.log(2.0 * math.pi)
    log_squash = np.log(1.0 - t**2 + TANH_EPS)
    logp = (log_n - log_squash).sum(axis=1)
    return mu, raw, log_std, raw_tanh, std, u, t, logp


def act(
    policy: PolicyState,
    obs: np.ndarray,
    deterministic: bool = False,
    rng: np.random.Generator | int = 0,
) -> np.ndarray:
    """Sample a torque action; deterministic=True returns the squashed mean."""
    obs = np.asarray(obs, dtype=np.float64).ravel()
    if obs.shape[0] != policy.obs_dim:
        raise DimensionMismatch(
            f"obs dim {obs.shape[0]} != expected {policy.obs_dim}"
        )
    if policy.obs_scale is not None:
        obs = obs * policy.obs_scale
    out, _ = policy.actor.forward(obs[None, :])
    out = out.astype(np.float64)
    A = policy.act_dim
    if deterministic:
        return np.tanh(out[0, :A]) * policy.act_limits
    gen = np.random.default_rng(rng)
    noise = gen.standard_normal((1, A))
    _, _, _, _, _, _, t, _ = _policy_terms(out, noise)
    return t[0] * policy.act_limits


def log_prob_correction(policy: PolicyState) -> float:
    """Constant log-det of the torque scaling, for entropy in torque units."""
    return -float(np.log(policy.act_limits).sum())


@dataclass
class LossReport:
    critic_loss: float
    actor_loss: float
    temperature_loss: float
    entropy_estimate: float
    temperature: float
    q_mean: float


def critic_loss_and_grad(critic: MLPNet, q_in: np.ndarray, y: np.ndarray):
    """0.5 * mean((Q - y)^2) and its parameter gradient."""
    B = q_in.shape[0]
    pred, cache = critic.forward(q_in)
    d = pred[:, 0] - y
    loss = 0.5 * float(np.mean(d**2))
    grad = critic.backward(cache, (d / B)[:, None])
    return loss, grad


def actor_loss_and_grad(policy: PolicyState, obs: np.ndarray,
                        noise: np.ndarray, alpha: float,
                        mu_reg: float = 0.0):
    """mean(alpha * log pi - min Q(o, a)) + mu_reg * mean(mu^2), actions
    reparameterized.

    The mu^2 term keeps the pre-squash mean away from tanh saturation,
    where gradients vanish identically. Returns (loss, actor parameter
    gradient, mean log pi); critics are treated as fixed so only their
    input gradients flow back.
    """
    dtype = policy.actor.dtype
    B = obs.shape[0]
    out, actor_cache = policy.actor.forward(obs)
    out64 = out.astype(np.float64)
    mu, raw, log_std, raw_tanh, std, u, t, logp = _policy_terms(out64, noise)
    q_in_pi = np.concatenate([obs, t.astype(dtype, copy=False)], axis=1).astype(
        dtype, copy=False
    )
    q1_pi, c1pi = policy.q1.forward(q_in_pi)
    q2_pi, c2pi = policy.q2.forward(q_in_pi)
    q_pi = np.minimum(q1_pi[:, 0], q2_pi[:, 0]).astype(np.float64)
    loss = float(np.mean(alpha * logp - q_pi)) + mu_reg * float(np.mean(mu**2))

    # d(loss)/d(normalized action): backprop through whichever critic is
    # the per-sample minimum, input-gradient only (critic weights frozen).
    pick1 = (q1_pi[:, 0] <= q2_pi[:, 0]).astype(dtype)[:, None]
    dq = np.full((B, 1), -1.0 / B, dtype=dtype)
    din1 = policy.q1.backward_input(c1pi, dq * pick1)
    din2 = policy.q2.backward_input(c2pi, dq * (1.0 - pick1))
    dact = (din1 + din2)[:, obs.shape[1]:].astype(np.float64)

    one_m_t2 = 1.0 - t**2
    dlogp_du = 2.0 * t * one_m_t2 / (one_m_t2 + TANH_EPS)  # from -log(1-t^2+eps)
    dl_du = (alpha / B) * dlogp_du + dact * one_m_t2
    dl_dmu = dl_du + (2.0 * mu_reg / mu.size) * mu
    dl_dls = dl_du * (std * noise) - (alpha / B)  # -1 from -log_std term
    dl_draw = dl_dls * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - raw_tanh**2)
    dout = np.concatenate([dl_dmu, dl_draw], axis=1).astype(dtype, copy=False)
    grad = policy.actor.backward(actor_cache, dout)
    return loss, grad, float(np.mean(logp))


def temperature_loss_and_grad(log_alpha: float, logp_mean: float,
                              target_entropy: float):
    """Dual objective -log_alpha * (mean log pi + target entropy)."""
    gap = logp_mean + target_entropy
    return -log_alpha * gap, -gap


def update_step(
    policy: PolicyState,
    batch,
    config: TrainerConfig,
    rng: np.random.Generator,
) -> LossReport:
    """One gradient step for critics, actor, and temperature, then a soft
    target update. Raises NumericalDivergence on non-finite losses."""
    obs, act_n, rew, next_obs, done = batch
    if policy.obs_scale is not None:
        scale = policy.obs_scale.astype(obs.dtype, copy=False)
        obs = obs * scale
        next_obs = next_obs * scale
    dtype = policy.actor.dtype
    B = obs.shape[0]
    A = policy.act_dim
    alpha = policy.temperature

    # Bellman targets from the target critics and a fresh next action.
    next_out, _ = policy.actor.forward(next_obs)
    noise_next = rng.standard_normal((B, A))
    _, _, _, _, _, _, t_next, logp_next = _policy_terms(
        next_out.astype(np.float64), noise_next
    )
    q_in_next = np.concatenate(
        [next_obs, t_next.astype(dtype, copy=False)], axis=1
    ).astype(dtype, copy=False)
    q1_next, _ = policy.q1_target.forward(q_in_next)
    q2_next, _ = policy.q2_target.forward(q_in_next)
    q_next = np.minimum(q1_next[:, 0], q2_next[:, 0]).astype(np.float64)
    y = rew + config.discount * (1.0 - done) * (q_next - alpha * logp_next)
    y = y.astype(dtype, copy=False)

    # Critic regression.
    q_in = np.concatenate([obs, act_n], axis=1).astype(dtype, copy=False)
    l1, g1 = critic_loss_and_grad(policy.q1, q_in, y)
    l2, g2 = critic_loss_and_grad(policy.q2, q_in, y)
    critic_loss = l1 + l2
    policy.q1_opt.step(policy.q1.theta, g1)
    policy.q2_opt.step(policy.q2.theta, g2)

    # Actor: maximize E[min Q(o, a) - alpha log pi] with reparameterized a.
    noise = rng.standard_normal((B, A))
    actor_loss, ga, logp_mean = actor_loss_and_grad(
        policy, obs, noise, alpha, mu_reg=config.mu_reg
    )
    policy.actor_opt.step(policy.actor.theta, ga)

    # Temperature: dual ascent toward the target entropy.
    temperature_loss, dla = temperature_loss_and_grad(
        policy.log_alpha, logp_mean, policy.target_entropy
    )
    la = np.array([policy.log_alpha], dtype=np.float64)
    policy.alpha_opt.step(la, np.array([dla]))
    policy.log_alpha = float(np.clip(la[0], LOG_ALPHA_MIN, LOG_ALPHA_MAX))

    # Soft target update.
    tau = config.tau
    policy.q1_target.theta += tau * (policy.q1.theta - policy.q1_target.theta)
    policy.q2_target.theta += tau * (policy.q2.theta - policy.q2_target.theta)
    policy.step += 1

    report = LossReport(
        critic_loss=critic_loss,
        actor_loss=actor_loss,
        temperature_loss=temperature_loss,
        entropy_estimate=-logp_mean,
        temperature=policy.temperature,
        q_mean=float(np.mean(policy.q1.forward(q_in)[0])),
    )
    for v in (report.critic_loss, report.actor_loss, report.temperature_loss):
        if not math.isfinite(v):
            raise NumericalDivergence(f"non-finite loss in update: {report}")
    return report
