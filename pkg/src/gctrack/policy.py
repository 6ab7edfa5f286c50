"""Actor-critic perceptron on a flat parameter vector, with manual backprop.

Two tanh hidden layers feed a categorical action head and a scalar value
head.  Parameters live in one contiguous float64 vector so optimizers,
finite-difference checks and checkpoints all operate on the same view.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN = (64, 64)


def _layout(obs_dim: int, n_actions: int, hidden=HIDDEN):
    h1, h2 = hidden
    shapes = [
        ("w1", (obs_dim, h1)),
        ("b1", (h1,)),
        ("w2", (h1, h2)),
        ("b2", (h2,)),
        ("wa", (h2, n_actions)),
        ("ba", (n_actions,)),
        ("wv", (h2, 1)),
        ("bv", (1,)),
    ]
    offsets = {}
    pos = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        offsets[name] = (pos, pos + size, shape)
        pos += size
    return offsets, pos


@dataclass
class PolicyParams:
    obs_dim: int
    n_actions: int
    flat: np.ndarray
    hidden: tuple = HIDDEN

    def __post_init__(self):
        self._offsets, n = _layout(self.obs_dim, self.n_actions, self.hidden)
        if self.flat.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {self.flat.shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        lo, hi, shape = self._offsets[name]
        return self.flat[lo:hi].reshape(shape)

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.n_actions, self.flat.copy(), self.hidden)

    def with_flat(self, flat: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.n_actions, flat, self.hidden)


def init_params(obs_dim: int, n_actions: int, rng: np.random.Generator, hidden=HIDDEN) -> PolicyParams:
    offsets, n = _layout(obs_dim, n_actions, hidden)
    flat = np.zeros(n)
    p = PolicyParams(obs_dim, n_actions, flat, hidden)
    for name, (lo, hi, shape) in offsets.items():
        if name.startswith("b"):
            continue
        fan_in = shape[0]
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
        if name == "wa":
            w *= 0.01  # near-uniform initial policy
        flat[lo:hi] = w.ravel()
    return p


def forward(params: PolicyParams, obs: np.ndarray):
    """Batch forward pass; returns (logits, values, cache for backward)."""
    obs = np.atleast_2d(obs)
    h1 = np.tanh(obs @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    logits = h2 @ params["wa"] + params["ba"]
    values = (h2 @ params["wv"])[:, 0] + params["bv"][0]
    return logits, values, (obs, h1, h2)


def backward(params: PolicyParams, cache, dlogits: np.ndarray, dvalues: np.ndarray) -> np.ndarray:
    """Accumulate gradients of a scalar loss through the forward cache."""
    obs, h1, h2 = cache
    grad = np.zeros_like(params.flat)
    g = params.with_flat(grad)  # same layout, gradient storage
    g["wa"][:] = h2.T @ dlogits
    g["ba"][:] = dlogits.sum(axis=0)
    g["wv"][:] = (h2.T @ dvalues)[:, None]
    g["bv"][:] = dvalues.sum()
    dh2 = dlogits @ params["wa"].T + dvalues[:, None] @ params["wv"].T
    dz2 = dh2 * (1.0 - h2 * h2)
    g["w2"][:] = h1.T @ dz2
    g["b2"][:] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["w2"].T) * (1.0 - h1 * h1)
    g["w1"][:] = obs.T @ dz1
    g["b1"][:] = dz1.sum(axis=0)
    return grad


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def action_distribution(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    logits, _, _ = forward(params, obs)
    return np.exp(log_softmax(logits))


def sample_actions(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator):
    """Sample actions for a batch; returns (actions, log-probs, values)."""
    logits, values, _ = forward(params, obs)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    cum = probs.cumsum(axis=1)
    draws = rng.random((len(probs), 1))
    actions = (draws >= cum).sum(axis=1)
    np.clip(actions, 0, probs.shape[1] - 1, out=actions)
    return actions, logp[np.arange(len(actions)), actions], values


def greedy_actions(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    logits, _, _ = forward(params, obs)
    return logits.argmax(axis=1)


class Adam:
    """Per-parameter first/second-moment adaptive steps, standard defaults."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, flat: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return flat - lr * mhat / (np.sqrt(vhat) + self.eps)
