"""PPO with generalized advantage estimation and two-phase curriculum training.

The trainer collects fixed-length rollouts from a set of sequentially
stepped worker environments, runs clipped-surrogate updates with an
entropy bonus, and switches the environments from straight-line targets
to the varied phase once the windowed mean per-step reward crosses the
phase threshold.  Everything is deterministic for a fixed seed.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .policy import Adam, PolicyParams, backward, forward, init_params, log_softmax, sample_actions
from .seeding import derive_rng

CHECKPOINT_MAGIC = b"GCTK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.9
    gae_lambda: float = 0.95
    entropy_beta: float = 0.01
    clip_eps: float = 0.2
    rollout_steps: int = 1024
    minibatch: int = 256
    epochs: int = 4
    learning_rate: float = 3e-4
    workers: int = 8
    critic_coef: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if min(self.rollout_steps, self.minibatch, self.epochs, self.workers) < 1:
            raise ValueError("rollout_steps, minibatch, epochs, workers must be >= 1")


@dataclass(frozen=True)
class CurriculumConfig:
    eta: float = 0.6
    window: int = 10_000
    total_steps: int = 200_000

    def validate(self, alpha: float = 4.0) -> None:
        if not 0.0 < self.eta < math.tanh(alpha):
            raise ValueError(f"eta must lie in (0, tanh({alpha}))")
        if self.window < 1 or self.total_steps < 1:
            raise ValueError("window and total_steps must be positive")


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    log_prob: float
    reward: float
    value: float
    done: bool

    def __post_init__(self):
        if self.log_prob > 0.0:
            raise ValueError("log-probability must be <= 0")


def gae_advantages(rewards, values, dones, gamma: float, lam: float, bootstrap=0.0):
    """Exponentially weighted TD-error sums, reset across episode boundaries.

    Accepts (T,) or (T, workers) arrays; `bootstrap` is the value estimate
    of the state following the last row.  Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError("rewards, values, dones must share a shape")
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
    bootstrap = np.broadcast_to(np.asarray(bootstrap, dtype=float), rewards.shape[1:]).astype(float)

    adv = np.zeros_like(rewards)
    next_value = bootstrap
    carry = np.zeros(rewards.shape[1])
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
        next_value = values[t]
    returns = adv + values
    if squeeze:
        return adv[:, 0], returns[:, 0]
    return adv, returns


def ppo_loss(params: PolicyParams, batch: dict, cfg: PpoConfig):
    """Clipped-surrogate actor loss + entropy bonus + value regression.

    `batch` holds obs, actions, old_logp, advantages (normalized), returns.
    Returns (loss, flat gradient, stats).  Aborts on non-finite loss.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    old_logp = batch["old_logp"]
    adv = batch["advantages"]
    ret = batch["returns"]
    n = len(obs)
    if n == 0:
        raise ValueError("empty batch")

    logits, values, cache = forward(params, obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_logp)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
    take_unclipped = unclipped <= clipped
    surr = np.where(take_unclipped, unclipped, clipped)
    entropy = -(probs * logp_all).sum(axis=1)
    actor_loss = -surr.mean() - cfg.entropy_beta * entropy.mean()
    verr = values - ret
    critic_loss = float((verr * verr).mean())
    loss = float(actor_loss + cfg.critic_coef * critic_loss)
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite PPO loss (actor {actor_loss}, critic {critic_loss}, "
            f"ratio range [{ratio.min()}, {ratio.max()}])"
        )

    # d(-mean surr)/dlogp, flowing only through the branch the min selected
    dlp = -np.where(take_unclipped, unclipped, 0.0) / n
    onehot = np.zeros_like(probs)
    onehot[idx, actions] = 1.0
    dlogits = dlp[:, None] * (onehot - probs)
    # entropy bonus: dH/dz_j = -p_j (logp_j + H)
    dlogits += cfg.entropy_beta / n * probs * (logp_all + entropy[:, None])
    dvalues = cfg.critic_coef * 2.0 * verr / n
    grad = backward(params, cache, dlogits, dvalues)

    stats = {
        "actor_loss": float(actor_loss),
        "critic_loss": critic_loss,
        "entropy": float(entropy.mean()),
        "clip_frac": float((np.abs(ratio - 1.0) > cfg.clip_eps).mean()),
    }
    return loss, grad, stats


@dataclass
class Rollout:
    """Fixed-length on-policy batch, time-major over parallel workers."""

    obs: np.ndarray  # (T, W, D)
    actions: np.ndarray  # (T, W)
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap: np.ndarray  # (W,)

    def __len__(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]


def ppo_update(
    params: PolicyParams,
    rollout: Rollout,
    cfg: PpoConfig,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
):
    """Run `epochs` of minibatched gradient steps on one rollout.

    Returns (new params, optimizer, stats); the caller discards the
    rollout afterwards.  Advantages are normalized over the whole batch.
    """
    t, w = rollout.rewards.shape
    if t != cfg.rollout_steps or w != cfg.workers:
        raise ValueError(
            f"rollout is {t}x{w}, config expects {cfg.rollout_steps}x{cfg.workers}"
        )
    adv, ret = gae_advantages(
        rollout.rewards, rollout.values, rollout.dones, cfg.gamma, cfg.gae_lambda, rollout.bootstrap
    )
    adv = adv.reshape(-1)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    flat_batch = {
        "obs": rollout.obs.reshape(t * w, -1),
        "actions": rollout.actions.reshape(-1),
        "old_logp": rollout.log_probs.reshape(-1),
        "advantages": adv,
        "returns": ret.reshape(-1),
    }
    n = t * w
    optimizer = optimizer or Adam(params.size)
    new_flat = params.flat.copy()
    stats_acc: dict[str, list] = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            sel = order[lo : lo + cfg.minibatch]
            mb = {k: v[sel] for k, v in flat_batch.items()}
            cur = params.with_flat(new_flat)
            loss, grad, stats = ppo_loss(cur, mb, cfg)
            new_flat = optimizer.step(new_flat, grad, cfg.learning_rate)
            for k, v in stats.items():
                stats_acc.setdefault(k, []).append(v)
    new_params = params.with_flat(new_flat)
    # post-update divergence diagnostics on the full batch
    logits, _, _ = forward(new_params, flat_batch["obs"])
    new_lp = log_softmax(logits)[np.arange(n), flat_batch["actions"]]
    stats = {k: float(np.mean(v)) for k, v in stats_acc.items()}
    stats["mean_kl"] = float(np.mean(flat_batch["old_logp"] - new_lp))
    return new_params, optimizer, stats


def collect_rollout(envs, obs_list, params, cfg: PpoConfig, rng, reward_kind: str):
    """Step all workers in lockstep for `rollout_steps`, auto-resetting.

    Returns (Rollout, next obs list, per-step reward rows) where the rows
    carry (training reward, r_gc, r_dt) per worker for curriculum windows.
    """
    t, w = cfg.rollout_steps, cfg.workers
    dim = envs[0].observation_dim
    obs_buf = np.empty((t, w, dim))
    act_buf = np.empty((t, w), dtype=np.int64)
    logp_buf = np.empty((t, w))
    rew_buf = np.empty((t, w))
    val_buf = np.empty((t, w))
    done_buf = np.empty((t, w))
    reward_rows = np.empty((t, w, 2))  # (training reward, r_dt)

    obs = np.stack(obs_list)
    for i in range(t):
        actions, logps, values = sample_actions(params, obs, rng)
        obs_buf[i] = obs
        act_buf[i] = actions
        logp_buf[i] = logps
        val_buf[i] = values
        for j, env in enumerate(envs):
            _, r_gc, r_dt, done, info = env.step(int(actions[j]))
            r_train = r_gc if reward_kind == "goal_centered" else info["r_distance"]
            rew_buf[i, j] = r_train
            done_buf[i, j] = 1.0 if done else 0.0
            reward_rows[i, j] = (r_train, r_dt)
            if done:
                _, ob = env.reset()
            else:
                ob = env.observe()
            obs[j] = ob
    _, bootstrap, _ = forward(params, obs)
    rollout = Rollout(obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf, bootstrap)
    return rollout, list(obs), reward_rows


def curriculum_train(
    env_factory,
    ppo_cfg: PpoConfig,
    cur_cfg: CurriculumConfig,
    seed: int,
    reward_kind: str = "goal_centered",
    use_curriculum: bool = True,
    alpha: float = 4.0,
):
    """Two-phase PPO training; returns (params, log rows).

    `env_factory(phase, seed)` builds one worker environment.  The phase
    switches from 1 to 2 exactly once, when the sliding-window mean of the
    per-step training reward reaches the threshold; the reward windows are
    cleared at the switch (the rollout buffer was already consumed by the
    update).  Log rows hold (step, phase, mean_reward, tsr_estimate,
    actor_loss, critic_loss, entropy, clip_frac).
    """
    if reward_kind not in ("goal_centered", "distance"):
        raise ValueError(f"unknown reward kind {reward_kind!r}")
    cur_cfg.validate(alpha)
    phase = 1 if use_curriculum else 2
    envs = [env_factory(phase, derive_rng(seed, "worker-seed", i).integers(2**63)) for i in range(ppo_cfg.workers)]
    obs_list = [env.reset()[1] for env in envs]

    params = init_params(envs[0].observation_dim, 7, derive_rng(seed, "init"))
    action_rng = derive_rng(seed, "actions")
    update_rng = derive_rng(seed, "updates")
    optimizer: Adam | None = None

    reward_window: deque = deque(maxlen=cur_cfg.window)
    rdt_window: deque = deque(maxlen=cur_cfg.window)
    switched = not use_curriculum
    log_rows = []
    steps_done = 0
    while steps_done < cur_cfg.total_steps:
        rollout, obs_list, reward_rows = collect_rollout(
            envs, obs_list, params, ppo_cfg, action_rng, reward_kind
        )
        reward_window.extend(reward_rows[:, :, 0].ravel())
        rdt_window.extend(reward_rows[:, :, 1].ravel())
        params, optimizer, stats = ppo_update(params, rollout, ppo_cfg, update_rng, optimizer)
        steps_done += len(rollout)
        log_rows.append(
            (
                steps_done,
                phase,
                float(np.mean(reward_window)),
                float(np.mean(rdt_window)),
                stats["actor_loss"],
                stats["critic_loss"],
                stats["entropy"],
                stats["clip_frac"],
            )
        )
        if not switched and float(np.mean(reward_window)) >= cur_cfg.eta:
            phase = 2
            switched = True
            reward_window.clear()
            rdt_window.clear()
            for env in envs:
                env.set_phase(2)
    return params, log_rows


def write_training_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["step", "phase", "mean_reward", "tsr_estimate", "actor_loss", "critic_loss", "entropy", "clip_frac"]
        )
        w.writerows(rows)


def save_checkpoint(path, params: PolicyParams, meta: dict | None = None) -> None:
    """Little-endian binary: magic, version byte, JSON header, float64 data."""
    header = {
        "obs_dim": params.obs_dim,
        "n_actions": params.n_actions,
        "hidden": list(params.hidden),
        "count": params.size,
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (PolicyParams, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version = fh.read(1)[0]
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != header["count"]:
        raise ValueError(f"expected {header['count']} parameters, found {data.size}")
    params = PolicyParams(
        header["obs_dim"], header["n_actions"], data.astype(float), tuple(header["hidden"])
    )
    return params, header["meta"]
