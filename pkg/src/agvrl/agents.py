"""DDPG, TD3 and SAC learners as scikit-learn style estimators.

Hyperparameters live in ``__init__`` (so ``get_params``/``set_params``/``clone``
work), learned state is created by :meth:`OffPolicyAgent.initialize` or
:meth:`OffPolicyAgent.fit` and carries a trailing underscore.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_observations
from .nn import AdamState, Mlp, adam_step, adam_update, init_mlp, mlp_backward, mlp_forward, soft_update
from .replay import Batch, ReplayBuffer

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
ALPHA_FLOOR = 1e-6


# ---------------------------------------------------------------- helpers

def critic_forward(critic: Mlp, s, a):
    q, cache = mlp_forward(critic, np.concatenate([s, a], axis=1))
    return q[:, 0], cache


def clip_noise(noise, clip: float) -> np.ndarray:
    return np.clip(noise, -clip, clip)


def log1m_tanh_sq(u):
    """Stable ``log(1 - tanh(u)^2)``."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squash(mean, log_std, xi):
    """Reparameterised tanh-Gaussian sample.

    Returns ``(a, u, logp)`` where ``u = mean + exp(log_std) * xi``,
    ``a = tanh(u)`` and ``logp`` is the log-density of ``a`` summed over
    action dimensions.
    """
    u = mean + np.exp(log_std) * xi
    a = np.tanh(u)
    logp = np.sum(-0.5 * xi * xi - log_std - HALF_LOG_2PI - log1m_tanh_sq(u), axis=-1)
    return a, u, logp


def sac_sample_action(actor: Mlp, s, rng: np.random.Generator):
    """Sample ``(a, log pi(a|s))`` from a squashed Gaussian actor for one state or a batch."""
    out, _ = mlp_forward(actor, s)
    k = actor.out_dim // 2
    mean, log_std = out[..., :k], out[..., k:]
    xi = rng.standard_normal(mean.shape)
    a, _, logp = squash(mean, log_std, xi)
    return a, logp


# ---------------------------------------------------------------- targets

def ddpg_target(rw, s_next, done, actor_target: Mlp, critic_target: Mlp, gamma: float):
    a_next, _ = mlp_forward(actor_target, s_next)
    q_next, _ = critic_forward(critic_target, s_next, a_next)
    return rw + gamma * (1.0 - done) * q_next


def td3_target(rw, s_next, done, actor_target: Mlp, critic_targets, gamma: float,
               noise_std: float, noise_clip: float, rng: np.random.Generator | None = None, noise=None):
    """Clipped double-Q target with smoothed target action.

    ``noise`` may be supplied directly; otherwise it is drawn from ``rng``.
    """
    a_next, _ = mlp_forward(actor_target, s_next)
    if noise is None:
        noise = rng.standard_normal(a_next.shape) * noise_std if noise_std > 0 else np.zeros_like(a_next)
    a_next = np.clip(a_next + clip_noise(noise, noise_clip), -1.0, 1.0)
    q_next = np.minimum.reduce([critic_forward(c, s_next, a_next)[0] for c in critic_targets])
    return rw + gamma * (1.0 - done) * q_next


def sac_target(rw, s_next, done, actor: Mlp, critic_targets, gamma: float, alpha: float, xi):
    out, _ = mlp_forward(actor, s_next)
    k = actor.out_dim // 2
    a_next, _, logp_next = squash(out[:, :k], out[:, k:], xi)
    q_next = np.minimum.reduce([critic_forward(c, s_next, a_next)[0] for c in critic_targets])
    return rw + gamma * (1.0 - done) * (q_next - alpha * logp_next)


def alpha_loss(alpha: float, logp, target_entropy: float) -> float:
    """Temperature objective ``mean(-alpha * logp - alpha * H)``."""
    return float(np.mean(-alpha * logp - alpha * target_entropy))


def alpha_gradient(logp, target_entropy: float) -> float:
    return float(np.mean(-logp - target_entropy))


def _critic_step(critic: Mlp, opt: AdamState, batch: Batch, y, lr: float) -> float:
    q, cache = critic_forward(critic, batch.s, batch.a)
    err = q - y
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        raise FloatingPointError("non-finite critic loss")
    grads, _ = mlp_backward(critic, cache, (2.0 / len(y)) * err[:, None])
    adam_step(critic, grads, opt, lr)
    return loss


def _min_critic_action_grad(critics, s, a, obs_dim: int):
    """Per-sample min over critics and d(mean min-Q)/da routed through the arg-min critic."""
    m = len(s)
    results = [critic_forward(c, s, a) for c in critics]
    qs = np.stack([q for q, _ in results])
    pick = np.argmin(qs, axis=0)  # ties go to the first critic
    grad_a = np.zeros_like(a)
    for k, (c, (_, cache)) in enumerate(zip(critics, results)):
        gq = np.where(pick == k, 1.0 / m, 0.0)[:, None]
        _, g_in = mlp_backward(c, cache, gq)
        grad_a = grad_a + g_in[:, obs_dim:]
    return qs[pick, np.arange(m)], grad_a


# ---------------------------------------------------------------- estimators

class OffPolicyAgent(BaseEstimator):
    """Shared machinery: networks, optimizers, replay buffer, RNG."""

    algorithm = "base"
    n_critics = 1
    actor_head = "tanh"

    def __init__(self, gamma=0.995, actor_lr=5e-5, critic_lr=5e-4, tau=0.001, batch_size=128,
                 buffer_size=1_000_000, hidden_sizes=(256, 256), warmup_steps=1000,
                 actor_final_scale=0.01, random_state=None):
        self.gamma = gamma
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.tau = tau
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.hidden_sizes = hidden_sizes
        self.warmup_steps = warmup_steps
        self.actor_final_scale = actor_final_scale
        self.random_state = random_state

    # -- construction

    def _check_params(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 1 <= self.batch_size <= self.buffer_size:
            raise ValueError("batch_size must be between 1 and buffer_size")

    def _actor_out(self, act_dim):
        return act_dim

    def initialize(self, obs_dim: int, act_dim: int = 2):
        """Build fresh networks, optimizers and buffer for the given dimensions."""
        self._check_params()
        rng = np.random.default_rng(self.random_state)
        hidden = [int(h) for h in self.hidden_sizes]
        self.obs_dim_ = int(obs_dim)
        self.act_dim_ = int(act_dim)
        self.actor_ = init_mlp([obs_dim, *hidden, self._actor_out(act_dim)], rng, self.actor_head,
                               final_scale=self.actor_final_scale)
        self.critics_ = [init_mlp([obs_dim + act_dim, *hidden, 1], rng) for _ in range(self.n_critics)]
        self.critic_targets_ = [c.copy() for c in self.critics_]
        self.actor_target_ = self.actor_.copy() if self.algorithm != "sac" else None
        self.actor_opt_ = AdamState.for_params(self.actor_)
        self.critic_opts_ = [AdamState.for_params(c) for c in self.critics_]
        self.buffer_ = ReplayBuffer(self.buffer_size, obs_dim, act_dim)
        self.rng_ = rng
        self.n_updates_ = 0
        self.total_steps_ = 0
        return self

    # -- acting

    def _policy(self, s):
        out, _ = mlp_forward(self.actor_, s)
        return out

    def select_action(self, s, mode: str = "explore", rng: np.random.Generator | None = None) -> np.ndarray:
        check_is_fitted(self, "actor_")
        if mode not in ("explore", "exploit"):
            raise ValueError("mode must be 'explore' or 'exploit'")
        return self._act(np.asarray(s, dtype=np.float64), mode, self.rng_ if rng is None else rng)

    def random_action(self) -> np.ndarray:
        return self.rng_.uniform(-1.0, 1.0, size=self.act_dim_)

    def predict(self, X) -> np.ndarray:
        """Noise-free actions for one observation or a batch of observations."""
        check_is_fitted(self, "actor_")
        X, single = check_observations(X, self.obs_dim_)
        a = self._act(X, "exploit", None)
        return a[0] if single else a

    # -- learning

    def observe(self, transition) -> None:
        self.buffer_.push(transition)

    def ready(self) -> bool:
        return self.buffer_.size >= max(self.batch_size, 1) and self.total_steps_ >= self.warmup_steps

    def update(self, batch: Batch | None = None) -> dict:
        """One gradient update on ``batch`` (sampled from the buffer when omitted)."""
        if batch is None:
            batch = self.buffer_.sample(self.batch_size, self.rng_)
        diag = self._update(batch)
        self.n_updates_ += 1
        return diag

    def fit(self, env, episodes: int = 100, **kwargs):
        """Train on ``env`` for ``episodes`` episodes with the standard episode loop."""
        from .training import run_episodes

        if not hasattr(self, "actor_"):
            self.initialize(env.obs_dim, env.act_dim)
        self.history_ = run_episodes(self, env, episodes, **kwargs)
        return self

    # -- persistence helpers

    def networks(self) -> dict[str, Mlp]:
        nets = {"actor": self.actor_}
        if self.actor_target_ is not None:
            nets["actor_target"] = self.actor_target_
        for i, (c, t) in enumerate(zip(self.critics_, self.critic_targets_)):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets

    def optimizers(self) -> dict[str, AdamState]:
        opts = {"actor": self.actor_opt_}
        for i, o in enumerate(self.critic_opts_):
            opts[f"critic{i}"] = o
        return opts


class DDPGAgent(OffPolicyAgent):
    algorithm = "ddpg"
    n_critics = 1

    def __init__(self, gamma=0.995, actor_lr=5e-5, critic_lr=5e-4, tau=0.001, batch_size=128,
                 buffer_size=1_000_000, hidden_sizes=(256, 256), warmup_steps=1000,
                 actor_final_scale=0.01, random_state=None, exploration_noise=0.1):
        super().__init__(gamma, actor_lr, critic_lr, tau, batch_size, buffer_size, hidden_sizes,
                         warmup_steps, actor_final_scale, random_state)
        self.exploration_noise = exploration_noise

    def _act(self, s, mode, rng):
        a = self._policy(s)
        if mode == "explore" and self.exploration_noise > 0:
            a = np.clip(a + self.exploration_noise * rng.standard_normal(a.shape), -1.0, 1.0)
        return a

    def target(self, batch: Batch) -> np.ndarray:
        return ddpg_target(batch.rw, batch.s_next, batch.done, self.actor_target_,
                           self.critic_targets_[0], self.gamma)

    def _actor_step(self, batch: Batch) -> float:
        s = batch.s
        a, actor_cache = mlp_forward(self.actor_, s)
        q, grad_a = _min_critic_action_grad(self.critics_, s, a, self.obs_dim_)
        # ascend mean Q: minimise -mean Q
        grads, _ = mlp_backward(self.actor_, actor_cache, -grad_a)
        adam_step(self.actor_, grads, self.actor_opt_, self.actor_lr)
        return float(np.mean(q))

    def _soft_update_targets(self):
        soft_update(self.actor_target_, self.actor_, self.tau)
        for t, c in zip(self.critic_targets_, self.critics_):
            soft_update(t, c, self.tau)

    def _update(self, batch: Batch) -> dict:
        y = self.target(batch)
        critic_loss = _critic_step(self.critics_[0], self.critic_opts_[0], batch, y, self.critic_lr)
        objective = self._actor_step(batch)
        self._soft_update_targets()
        return {"critic_loss": critic_loss, "actor_objective": objective}


def ddpg_update(agent: DDPGAgent, batch: Batch) -> dict:
    return agent.update(batch)


class TD3Agent(DDPGAgent):
    algorithm = "td3"
    n_critics = 2

    def __init__(self, gamma=0.995, actor_lr=5e-5, critic_lr=5e-4, tau=0.001, batch_size=128,
                 buffer_size=1_000_000, hidden_sizes=(256, 256), warmup_steps=1000,
                 actor_final_scale=0.01, random_state=None, exploration_noise=0.1,
                 target_noise=0.2, noise_clip=0.5, policy_delay=2):
        super().__init__(gamma, actor_lr, critic_lr, tau, batch_size, buffer_size, hidden_sizes,
                         warmup_steps, actor_final_scale, random_state, exploration_noise)
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.policy_delay = policy_delay

    def target(self, batch: Batch, noise=None) -> np.ndarray:
        return td3_target(batch.rw, batch.s_next, batch.done, self.actor_target_, self.critic_targets_,
                          self.gamma, self.target_noise, self.noise_clip, self.rng_, noise)

    def update(self, batch: Batch | None = None, step_index: int | None = None) -> dict:
        if batch is None:
            batch = self.buffer_.sample(self.batch_size, self.rng_)
        step = self.n_updates_ + 1 if step_index is None else step_index
        diag = self._update(batch, step)
        self.n_updates_ += 1
        return diag

    def _update(self, batch: Batch, step_index: int = 0) -> dict:
        y = self.target(batch)
        losses = [_critic_step(c, o, batch, y, self.critic_lr)
                  for c, o in zip(self.critics_, self.critic_opts_)]
        diag = {"critic_loss": float(np.mean(losses)), "critic_losses": losses,
                "actor_objective": float("nan"), "actor_updated": False}
        if step_index % self.policy_delay == 0:
            diag["actor_objective"] = self._actor_step(batch)
            diag["actor_updated"] = True
            self._soft_update_targets()
        return diag


def td3_update(agent: TD3Agent, batch: Batch, step_index: int) -> dict:
    return agent.update(batch, step_index)


class SACAgent(OffPolicyAgent):
    algorithm = "sac"
    n_critics = 2
    actor_head = "gaussian"

    def __init__(self, gamma=0.995, actor_lr=5e-5, critic_lr=5e-4, tau=0.001, batch_size=128,
                 buffer_size=1_000_000, hidden_sizes=(256, 256), warmup_steps=1000,
                 actor_final_scale=0.01, random_state=None, init_alpha=0.2, target_entropy=None,
                 alpha_lr=None, learn_alpha=True):
        super().__init__(gamma, actor_lr, critic_lr, tau, batch_size, buffer_size, hidden_sizes,
                         warmup_steps, actor_final_scale, random_state)
        self.init_alpha = init_alpha
        self.target_entropy = target_entropy
        self.alpha_lr = alpha_lr
        self.learn_alpha = learn_alpha

    def _actor_out(self, act_dim):
        return 2 * act_dim

    def initialize(self, obs_dim: int, act_dim: int = 2):
        super().initialize(obs_dim, act_dim)
        self.alpha_ = np.array([float(self.init_alpha)])
        self.alpha_opt_ = AdamState.for_arrays([self.alpha_])
        return self

    @property
    def entropy_target_(self) -> float:
        return float(-self.act_dim_ if self.target_entropy is None else self.target_entropy)

    def _heads(self, s):
        out, cache = mlp_forward(self.actor_, s)
        k = self.act_dim_
        return out[..., :k], out[..., k:], cache

    def _act(self, s, mode, rng):
        mean, log_std, _ = self._heads(s)
        if mode == "exploit":
            return np.tanh(mean)
        a, _, _ = squash(mean, log_std, rng.standard_normal(mean.shape))
        return a

    def sample_action(self, s, rng: np.random.Generator | None = None):
        return sac_sample_action(self.actor_, s, self.rng_ if rng is None else rng)

    def target(self, batch: Batch, xi) -> np.ndarray:
        return sac_target(batch.rw, batch.s_next, batch.done, self.actor_, self.critic_targets_,
                          self.gamma, float(self.alpha_[0]), xi)

    def _update(self, batch: Batch, xi_next=None, xi_now=None) -> dict:
        m = len(batch.rw)
        k = self.act_dim_
        if xi_next is None:
            xi_next = self.rng_.standard_normal((m, k))
        if xi_now is None:
            xi_now = self.rng_.standard_normal((m, k))
        alpha = float(self.alpha_[0])

        y = self.target(batch, xi_next)
        losses = [_critic_step(c, o, batch, y, self.critic_lr)
                  for c, o in zip(self.critics_, self.critic_opts_)]

        # actor: minimise mean(alpha * logp - min_k Q_k(s, a))
        mean, log_std, cache = self._heads(batch.s)
        a, u, logp = squash(mean, log_std, xi_now)
        q_min, grad_a = _min_critic_action_grad(self.critics_, batch.s, a, self.obs_dim_)
        actor_loss = float(np.mean(alpha * logp - q_min))
        if not math.isfinite(actor_loss):
            raise FloatingPointError("non-finite actor loss")
        std = np.exp(log_std)
        dlogp_du = 2.0 * np.tanh(u)
        g_u = (alpha / m) * dlogp_du - grad_a * (1.0 - a * a)
        g_mean = g_u
        g_log_std = g_u * std * xi_now - (alpha / m)
        grads, _ = mlp_backward(self.actor_, cache, np.concatenate([g_mean, g_log_std], axis=1))
        adam_step(self.actor_, grads, self.actor_opt_, self.actor_lr)

        # temperature: L = mean(-alpha * logp - alpha * H)
        temp_loss = alpha_loss(alpha, logp, self.entropy_target_)
        if self.learn_alpha:
            g_alpha = np.array([alpha_gradient(logp, self.entropy_target_)])
            lr = self.critic_lr if self.alpha_lr is None else self.alpha_lr
            adam_update([self.alpha_], [g_alpha], self.alpha_opt_, lr)
            self.alpha_[0] = max(self.alpha_[0], ALPHA_FLOOR)

        for t, c in zip(self.critic_targets_, self.critics_):
            soft_update(t, c, self.tau)
        return {"critic_loss": float(np.mean(losses)), "critic_losses": losses, "actor_loss": actor_loss,
                "alpha_loss": temp_loss, "alpha": float(self.alpha_[0]),
                "entropy_estimate": float(-np.mean(logp))}


def sac_update(agent: SACAgent, batch: Batch) -> dict:
    return agent.update(batch)


ALGORITHMS = {"ddpg": DDPGAgent, "td3": TD3Agent, "sac": SACAgent}


def make_agent(algorithm: str, **params) -> OffPolicyAgent:
    try:
        cls = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"algorithm must be one of {sorted(ALGORITHMS)}, got {algorithm!r}") from None
    return cls(**params)
