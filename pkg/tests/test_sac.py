"""Actor-critic update tests: gradient oracles, replay, entropy control."""

import math

import numpy as np
import pytest

from mimiclab.errors import NumericalDivergence
from mimiclab.nets import grad_check
from mimiclab.sac import (
    PolicyState,
    ReplayBuffer,
    TrainerConfig,
    _policy_terms,
    act,
    actor_loss_and_grad,
    critic_loss_and_grad,
    init_policy,
    temperature_loss_and_grad,
    update_step,
)


def tiny_policy(seed=0, hidden=(4,), obs_dim=3, act_dim=2, dtype=np.float64,
                lr=3e-4):
    cfg = TrainerConfig(hidden=tuple(hidden), seed=seed, lr=lr, alpha_lr=lr,
                        batch_size=8)
    return init_policy(obs_dim, np.full(act_dim, 2.0), cfg, dtype=dtype), cfg


def random_batch(rng, obs_dim=3, act_dim=2, n=8):
    return (
        rng.standard_normal((n, obs_dim)),
        np.tanh(rng.standard_normal((n, act_dim))),
        rng.standard_normal(n),
        rng.standard_normal((n, obs_dim)),
        (rng.random(n) < 0.2).astype(float),
    )


class TestActionSampling:
    def test_zero_final_layer_deterministic_action_is_zero(self):
        policy, _ = tiny_policy()
        w, b = policy.actor.layer(policy.actor.n_layers - 1)
        w[:] = 0.0
        b[:] = 0.0
        a = act(policy, np.zeros(3), deterministic=True)
        assert np.array_equal(a, np.zeros(2))

    def test_stochastic_determinism_per_seed(self):
        policy, _ = tiny_policy()
        obs = np.ones(3)
        a1 = act(policy, obs, rng=42)
        a2 = act(policy, obs, rng=42)
        a3 = act(policy, obs, rng=43)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, a3)

    def test_actions_within_torque_limits(self):
        policy, _ = tiny_policy()
        rng = np.random.default_rng(0)
        for i in range(10_000):
            a = act(policy, rng.standard_normal(3), rng=i)
            assert np.all(np.abs(a) <= 2.0)

    def test_dimension_mismatch(self):
        policy, _ = tiny_policy()
        from mimiclab.errors import DimensionMismatch

        with pytest.raises(DimensionMismatch):
            act(policy, np.zeros(5))


class TestGradientOracles:
    """Central finite differences (eps=1e-5) vs the production gradients,
    on small float64 nets, 20 random seeds each."""

    def test_critic_gradient(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            policy, _ = tiny_policy(seed=seed, hidden=(4,))
            q_in = rng.standard_normal((6, 5))
            y = rng.standard_normal(6)

            def f(theta):
                policy.q1.set_theta(theta)
                return critic_loss_and_grad(policy.q1, q_in, y)

            rep = grad_check(f, policy.q1.theta.copy(), eps=1e-5, tolerance=1e-4)
            assert rep.passed, (seed, rep)

    def test_actor_gradient(self):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            policy, _ = tiny_policy(seed=seed, hidden=(4,))
            obs = rng.standard_normal((6, 3))
            noise = rng.standard_normal((6, 2))
            mu_reg = 1e-3 if seed % 2 else 0.0

            def f(theta):
                policy.actor.set_theta(theta)
                loss, grad, _ = actor_loss_and_grad(policy, obs, noise, 0.2,
                                                    mu_reg=mu_reg)
                return loss, grad

            rep = grad_check(f, policy.actor.theta.copy(), eps=1e-5,
                             tolerance=1e-4)
            assert rep.passed, (seed, rep)

    def test_temperature_gradient(self):
        for seed in range(20):
            rng = np.random.default_rng(200 + seed)
            logp_mean = float(rng.standard_normal())
            la0 = float(rng.standard_normal())

            def f(theta):
                loss, g = temperature_loss_and_grad(float(theta[0]), logp_mean,
                                                    -2.0)
                return loss, np.array([g])

            rep = grad_check(f, np.array([la0]), eps=1e-5, tolerance=1e-4)
            assert rep.passed, (seed, rep)


class TestUpdateStep:
    def test_zero_lr_leaves_parameters_bit_identical(self):
        policy, cfg = tiny_policy(lr=0.0)
        before = [policy.actor.theta.copy(), policy.q1.theta.copy(),
                  policy.q2.theta.copy(), policy.log_alpha]
        rng = np.random.default_rng(0)
        batch = random_batch(rng)
        update_step(policy, batch, cfg, rng)
        assert np.array_equal(policy.actor.theta, before[0])
        assert np.array_equal(policy.q1.theta, before[1])
        assert np.array_equal(policy.q2.theta, before[2])
        assert policy.log_alpha == before[3]

    def test_tau_one_copies_critics_to_targets(self):
        policy, _ = tiny_policy()
        cfg = TrainerConfig(hidden=(4,), tau=1.0, batch_size=8)
        rng = np.random.default_rng(1)
        update_step(policy, random_batch(rng), cfg, rng)
        assert np.array_equal(policy.q1_target.theta, policy.q1.theta)
        assert np.array_equal(policy.q2_target.theta, policy.q2.theta)

    def test_divergence_detected(self):
        policy, cfg = tiny_policy()
        policy.q1.theta[:] = 1e200
        rng = np.random.default_rng(2)
        with pytest.raises(NumericalDivergence):
            with np.errstate(all="ignore"):
                update_step(policy, random_batch(rng), cfg, rng)

    def test_update_changes_parameters(self):
        policy, cfg = tiny_policy(lr=1e-3)
        rng = np.random.default_rng(3)
        before = policy.actor.theta.copy()
        update_step(policy, random_batch(rng), cfg, rng)
        assert not np.array_equal(policy.actor.theta, before)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(4, 2, 1)
        for i in range(6):
            buf.add(np.full(2, i), [i], i, np.full(2, i + 1), 0.0)
        assert buf.size == 4
        # oldest two evicted; remaining rewards are 2..5
        assert set(buf.rew.tolist()) == {2.0, 3.0, 4.0, 5.0}

    def test_uniform_sampling_chi_square(self):
        from scipy.stats import chisquare

        n = 64
        buf = ReplayBuffer(n, 1, 1)
        for i in range(n):
            buf.add([i], [0], float(i), [i], 0.0)
        rng = np.random.default_rng(0)
        draws = 100_000
        _, _, rew, _, _ = buf.sample(rng, draws)
        counts = np.bincount(rew.astype(int), minlength=n)
        _, p = chisquare(counts)
        assert p > 0.01

    def test_sample_shapes(self):
        buf = ReplayBuffer(10, 3, 2)
        for i in range(5):
            buf.add(np.zeros(3), np.zeros(2), 0.0, np.zeros(3), 0.0)
        obs, act_, rew, nxt, done = buf.sample(np.random.default_rng(0), 4)
        assert obs.shape == (4, 3) and act_.shape == (4, 2)
        assert rew.shape == (4,) and done.shape == (4,)


class TestEntropyControl:
    def test_temperature_drives_entropy_to_target(self):
        # Stationary bandit: single observation, reward -a^2; the policy
        # entropy must converge to within 20% of the -dim(A) target.
        obs_dim, act_dim = 2, 1
        cfg = TrainerConfig(hidden=(32, 32), lr=3e-3, alpha_lr=3e-3,
                            batch_size=64, seed=7, tau=0.01)
        policy = init_policy(obs_dim, np.ones(act_dim), cfg, dtype=np.float64)
        rng = np.random.default_rng(7)
        buf = ReplayBuffer(4096, obs_dim, act_dim)
        o = np.zeros(obs_dim)
        for _ in range(2048):
            a = rng.uniform(-1, 1, act_dim)
            buf.add(o, a, -float(a @ a), o, 1.0)
        for _ in range(3000):
            update_step(policy, buf.sample(rng, cfg.batch_size), cfg, rng)
        # measure entropy by sampling the policy at the bandit state
        out, _ = policy.actor.forward(np.zeros((512, obs_dim)))
        noise = rng.standard_normal((512, act_dim))
        *_, logp = _policy_terms(out.astype(np.float64), noise)
        entropy = -float(np.mean(logp))
        target = policy.target_entropy
        assert abs(entropy - target) <= 0.2 * abs(target), entropy
