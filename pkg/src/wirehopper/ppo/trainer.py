"""Clipped-surrogate PPO with parallel rollout collection.

The update path is a pure function of the flat parameter vectors so the
whole loss gradient can be finite-difference checked. Training runs the
environments in lockstep in one process; determinism follows from the
seed tree alone.
"""

from dataclasses import dataclass, field
import csv
import os
import numpy as np

from .checkpoint import save_checkpoint
from .gae import compute_gae, normalize_advantages
from .nets import (
    MlpSpec,
    backward,
    clamped_log_std,
    forward,
    gaussian_entropy,
    gaussian_log_prob,
    init_params,
    log_std_grad_mask,
)

METRICS_COLUMNS = ("update", "env_steps", "mean_reward", "mean_ep_len",
                   "mean_apex", "policy_loss", "value_loss", "kl",
                   "clip_frac", "c")


class NonFiniteLoss(RuntimeError):
    """PPO loss became non-finite; the offending batch is attached."""

    def __init__(self, message, batch=None):
        super().__init__(message)
        self.batch = batch


@dataclass
class PpoConfig:
    total_steps: int = 10_000_000
    n_envs: int = 6
    rollout_steps: int = 2048
    batch_size: int = 1024
    epochs: int = 10
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    log_std_init: float = 0.0
    checkpoint_every: int = 10

    def __post_init__(self):
        if (self.n_envs * self.rollout_steps) % self.batch_size != 0:
            raise ValueError("batch_size must divide n_envs * rollout_steps")


def loss_and_grad(policy_params, value_params, policy_spec: MlpSpec,
                  value_spec: MlpSpec, batch, clip_eps, value_coef,
                  entropy_coef):
    """PPO loss and its gradients w.r.t. both flat parameter vectors.

    batch: dict with obs (B, D), actions (B, A), logp_old (B,),
    advantages (B,), returns (B,).
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["logp_old"]
    adv = batch["advantages"]
    returns = batch["returns"]
    B = obs.shape[0]

    mean, cache_p = forward(policy_params, policy_spec, obs)
    log_std = clamped_log_std(policy_params, policy_spec)
    std = np.exp(log_std)
    z = (actions - mean) / std
    logp = -0.5 * (z * z).sum(axis=1) - log_std.sum() \
        - 0.5 * actions.shape[1] * np.log(2.0 * np.pi)
    ratio = np.exp(logp - logp_old)

    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    entropy = gaussian_entropy(log_std)

    values, cache_v = forward(value_params, value_spec, obs)
    values = values[:, 0]
    value_loss = ((values - returns) ** 2).mean()

    total = policy_loss + value_coef * value_loss - entropy_coef * entropy

    # ---- backward ----
    unclipped = surr1 <= surr2  # min picks surr1 there (ties: surr1)
    dlogp = np.where(unclipped, -adv * ratio / B, 0.0)
    dmean = dlogp[:, None] * z / std
    dlogstd = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
    dlogstd -= entropy_coef * np.ones_like(log_std)
    dlogstd *= log_std_grad_mask(policy_params, policy_spec)

    g_policy = backward(policy_params, policy_spec, cache_p, dmean)
    g_policy[policy_spec.log_std_slice()] += dlogstd

    dvalues = (2.0 * (values - returns) / B * value_coef)[:, None]
    g_value = backward(value_params, value_spec, cache_v, dvalues)

    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        "kl": float(np.mean(logp_old - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    }
    return float(total), g_policy, g_value, stats


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_global_norm(grads, max_norm):
    total = np.sqrt(sum(float(g @ g) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        return [g * scale for g in grads], total
    return grads, total


@dataclass
class _EpisodeTracker:
    ret: float = 0.0
    length: int = 0
    apex: float = -np.inf
    finished: list = field(default_factory=list)

    def add(self, reward, height):
        self.ret += reward
        self.length += 1
        self.apex = max(self.apex, height)

    def finish(self):
        self.finished.append((self.ret, self.length, self.apex))
        self.ret = 0.0
        self.length = 0
        self.apex = -np.inf


class PpoTrainer:
    def __init__(self, cfg: PpoConfig, envs, seed, out_dir=None):
        self.cfg = cfg
        self.envs = envs
        self.out_dir = out_dir
        obs_dim = envs[0].obs_dim
        self.policy_spec = MlpSpec(obs_dim, 3, has_log_std=True)
        self.value_spec = MlpSpec(obs_dim, 1)

        ss = np.random.SeedSequence(seed)
        init_ss, sample_ss = ss.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(sample_ss)
        self.policy_params = init_params(self.policy_spec, init_rng,
                                         head_gain=0.01,
                                         log_std_init=cfg.log_std_init)
        self.value_params = init_params(self.value_spec, init_rng, head_gain=1.0)
        self.opt_policy = Adam(self.policy_params.size, cfg.learning_rate)
        self.opt_value = Adam(self.value_params.size, cfg.learning_rate)
        self.env_steps = 0
        self.metrics_rows = []
        self._trackers = [_EpisodeTracker() for _ in envs]
        self._last_ep_stats = (0.0, 0.0, 0.0)

    # -- acting ---------------------------------------------------------------
    def policy_act(self, obs_batch):
        mean, _ = forward(self.policy_params, self.policy_spec, obs_batch)
        log_std = clamped_log_std(self.policy_params, self.policy_spec)
        std = np.exp(log_std)
        noise = self.rng.standard_normal(mean.shape)
        actions = mean + std * noise
        logp = gaussian_log_prob(actions, mean, log_std)
        return actions, logp

    def collect(self):
        cfg = self.cfg
        T, N = cfg.rollout_steps, cfg.n_envs
        obs_dim = self.policy_spec.input_dim
        buf = {
            "obs": np.empty((T, N, obs_dim)),
            "actions": np.empty((T, N, 3)),
            "logp_old": np.empty((T, N)),
            "rewards": np.empty((T, N)),
            "dones": np.zeros((T, N)),
            "values": np.empty((T, N)),
        }
        obs_cur = np.stack([env.last_obs for env in self.envs])
        for t in range(T):
            actions, logp = self.policy_act(obs_cur)
            values, _ = forward(self.value_params, self.value_spec, obs_cur)
            buf["obs"][t] = obs_cur
            buf["actions"][t] = actions
            buf["logp_old"][t] = logp
            buf["values"][t] = values[:, 0]
            for i, env in enumerate(self.envs):
                obs, reward, done, info = env.step(actions[i])
                buf["rewards"][t, i] = reward
                self._trackers[i].add(reward, float(env.sim.state.p[2]))
                if done:
                    buf["dones"][t, i] = 1.0
                    self._trackers[i].finish()
                    obs = env.reset()
                env.last_obs = obs
                obs_cur[i] = obs
            self.env_steps += N
        last_values, _ = forward(self.value_params, self.value_spec, obs_cur)
        return buf, last_values[:, 0]

    # -- updating ---------------------------------------------------------------
    def update(self, buf, last_values):
        cfg = self.cfg
        adv, returns = compute_gae(buf["rewards"], buf["values"], buf["dones"],
                                   last_values, cfg.gamma, cfg.gae_lambda)
        adv = normalize_advantages(adv)
        T, N = adv.shape
        flat = {
            "obs": buf["obs"].reshape(T * N, -1),
            "actions": buf["actions"].reshape(T * N, 3),
            "logp_old": buf["logp_old"].reshape(T * N),
            "advantages": adv.reshape(T * N),
            "returns": returns.reshape(T * N),
        }
        n = T * N
        stats_acc = []
        for _ in range(cfg.epochs):
            perm = self.rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                batch = {k: v[idx] for k, v in flat.items()}
                loss, g_pol, g_val, stats = loss_and_grad(
                    self.policy_params, self.value_params,
                    self.policy_spec, self.value_spec, batch,
                    cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)
                if not np.isfinite(loss):
                    raise NonFiniteLoss("PPO loss is not finite", batch=batch)
                (g_pol, g_val), _ = clip_global_norm([g_pol, g_val],
                                                     cfg.max_grad_norm)
                self.policy_params = self.opt_policy.step(self.policy_params, g_pol)
                self.value_params = self.opt_value.step(self.value_params, g_val)
                stats_acc.append(stats)
        out = {k: float(np.mean([s[k] for s in stats_acc]))
               for k in stats_acc[0]}
        return out

    # -- driving ------------------------------------------------------------------
    def train(self):
        cfg = self.cfg
        for env in self.envs:
            env.last_obs = env.reset()
        n_updates = max(1, int(np.ceil(cfg.total_steps
                                       / (cfg.n_envs * cfg.rollout_steps))))
        metrics_path = None
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            metrics_path = os.path.join(self.out_dir, "metrics.csv")
            with open(metrics_path, "w", newline="") as fh:
                csv.writer(fh).writerow(METRICS_COLUMNS)

        for update in range(1, n_updates + 1):
            buf, last_values = self.collect()
            stats = self.update(buf, last_values)
            finished = [ep for tr in self._trackers for ep in tr.finished]
            if finished:
                arr = np.array(finished)
                self._last_ep_stats = (float(arr[:, 0].mean()),
                                       float(arr[:, 1].mean()),
                                       float(arr[:, 2].mean()))
                for tr in self._trackers:
                    tr.finished.clear()
            row = {
                "update": update,
                "env_steps": self.env_steps,
                "mean_reward": self._last_ep_stats[0],
                "mean_ep_len": self._last_ep_stats[1],
                "mean_apex": self._last_ep_stats[2],
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "kl": stats["kl"],
                "clip_frac": stats["clip_frac"],
                "c": float(self.envs[0].c),
            }
            self.metrics_rows.append(row)
            if metrics_path:
                with open(metrics_path, "a", newline="") as fh:
                    csv.writer(fh).writerow([row[k] for k in METRICS_COLUMNS])
            if self.out_dir and (update % cfg.checkpoint_every == 0
                                 or update == n_updates):
                path = os.path.join(self.out_dir, f"ckpt_{update:04d}.bin")
                save_checkpoint(path, self.policy_spec,
                                self.policy_params, self.value_params)
        if self.out_dir:
            save_checkpoint(os.path.join(self.out_dir, "ckpt_final.bin"),
                            self.policy_spec, self.policy_params,
                            self.value_params)
        return self.metrics_rows


def train(cfg: PpoConfig, env_factory, seed, out_dir=None):
    """Build envs from the factory and run the full training loop.

    env_factory(index, seed_int, curriculum) -> environment.
    """
    from ..env import Curriculum

    curriculum = Curriculum(total_steps=cfg.total_steps)
    ss = np.random.SeedSequence(seed)
    env_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(cfg.n_envs)]
    envs = [env_factory(i, env_seeds[i], curriculum) for i in range(cfg.n_envs)]
    trainer = PpoTrainer(cfg, envs, seed, out_dir)
    rows = trainer.train()
    return trainer, rows
