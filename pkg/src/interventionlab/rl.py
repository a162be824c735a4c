"""Policies, rollout collection and a clipped-surrogate policy-gradient trainer.

Environments follow a small protocol: ``reset(seed)``, ``step(action) ->
(info, reward, done)``, ``observation()`` (policy input), ``features(action)``
(learner input), ``n_actions`` and ``obs_dim``.

Training rewards are attached to arrival steps: ``train_rewards[t]`` is
earned by the action taken at step ``t - 1``, and ``train_rewards[0] = 0``.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np

from .causal import Episode

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Policy optimization produced non-finite values."""


class Policy:
    tag = "policy"
    n_actions: int

    def probs(self, obs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        return policy_action(self, obs, rng)


def policy_action(policy: Policy, observation: np.ndarray, rng: np.random.Generator) -> int:
    """Sample one action from ``policy`` at ``observation``."""
    p = policy.probs(observation)
    a = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(a, len(p) - 1)


class UniformRandom(Policy):
    tag = "random"

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self._p = np.full(n_actions, 1.0 / n_actions)

    def probs(self, obs=None) -> np.ndarray:
        return self._p

    def act(self, obs, rng) -> int:
        return int(rng.integers(self.n_actions))


class TabularPolicy(Policy):
    """Action distribution looked up by the index of a one-hot observation."""

    def __init__(self, table: np.ndarray, tag: str = "tabular"):
        table = np.asarray(table, dtype=float)
        if np.any(table < 0) or not np.allclose(table.sum(1), 1.0):
            raise ValueError("every row of the policy table must be a distribution")
        self.table = table
        self.n_actions = table.shape[1]
        self.tag = tag

    def probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs)
        if obs.shape != (self.table.shape[0],):
            raise ValueError(f"expected a one-hot observation of length {self.table.shape[0]}")
        return self.table[int(np.argmax(obs))]


class ParametricP(TabularPolicy):
    """The one-parameter policy family of an MDP exposing ``parametric_table(p)``."""

    def __init__(self, p: float, env):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        super().__init__(env.parametric_table(p), tag=f"param-{p:g}")
        self.p = p


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LearnedSoftmax(Policy):
    """Softmax over a linear (or one tanh hidden layer) function of the observation."""

    tag = "learned"

    def __init__(self, obs_dim: int, n_actions: int, hidden: int = 0, seed: int = 0, init_scale: float = 0.0):
        self.obs_dim, self.n_actions, self.hidden = obs_dim, n_actions, hidden
        rng = np.random.default_rng(seed)
        if hidden:
            self.params = {
                "W1": rng.normal(0, 1 / np.sqrt(obs_dim), (obs_dim, hidden)),
                "b1": np.zeros(hidden),
                "W2": rng.normal(0, init_scale or 0.01, (hidden, n_actions)),
                "b2": np.zeros(n_actions),
            }
        else:
            self.params = {
                "W": rng.normal(0, init_scale, (obs_dim, n_actions)) if init_scale else np.zeros((obs_dim, n_actions)),
                "b": np.zeros(n_actions),
            }

    def logits(self, obs: np.ndarray) -> np.ndarray:
        p = self.params
        if self.hidden:
            return np.tanh(obs @ p["W1"] + p["b1"]) @ p["W2"] + p["b2"]
        return obs @ p["W"] + p["b"]

    def probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"expected observations of length {self.obs_dim}, got {obs.shape[-1]}")
        return _softmax(self.logits(obs))

    def backward(self, obs: np.ndarray, dlogits: np.ndarray) -> dict:
        """Gradient of ``sum(dlogits * logits(obs))`` with respect to the parameters."""
        p = self.params
        if not self.hidden:
            return {"W": obs.T @ dlogits, "b": dlogits.sum(0)}
        h = np.tanh(obs @ p["W1"] + p["b1"])
        dh = dlogits @ p["W2"].T * (1 - h**2)
        return {"W1": obs.T @ dh, "b1": dh.sum(0), "W2": h.T @ dlogits, "b2": dlogits.sum(0)}

    def to_dict(self) -> dict:
        return {
            "variant": "LearnedSoftmax",
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "hidden": self.hidden,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedSoftmax":
        pol = cls(d["obs_dim"], d["n_actions"], d["hidden"])
        pol.params = {k: np.array(v, dtype=float) for k, v in d["params"].items()}
        return pol


def _run_episode(env, policy: Policy, rng: np.random.Generator, record_obs: bool = False):
    env.reset(int(rng.integers(2**31)))
    feats, actions, rewards, obs_list = [], [], [0.0], []
    while True:
        if env.done:
            feats.append(env.features(None))
            actions.append(-1)
            break
        obs = env.observation()
        a = policy.act(obs, rng)
        if record_obs:
            obs_list.append(obs)
        feats.append(env.features(a))
        actions.append(a)
        _, r, _ = env.step(a)
        rewards.append(r)
    ep = Episode(np.array(feats), np.array(actions), np.array(rewards), policy.tag)
    return ep, obs_list


def collect_rollouts(env, policy: Policy, n_episodes: int, reward_override=None, seed: int = 0) -> list:
    """Run ``n_episodes`` episodes; deterministic given ``seed``.

    With ``reward_override`` (an intervention reward) each episode also
    stores the reward the agent would be trained on in ``train_rewards``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = np.random.default_rng(seed)
    episodes = []
    for _ in range(n_episodes):
        ep, _ = _run_episode(env, policy, rng)
        if reward_override is not None:
            ep.train_rewards = reward_override.episode_rewards(ep.features, ep.rewards)
        episodes.append(ep)
    return episodes


@dataclasses.dataclass
class TrainerConfig:
    episodes_per_update: int = 32
    updates: int = 50
    discount: float = 0.99
    clip_ratio: float = 0.2
    learning_rate: float = 3e-3
    entropy_bonus: float = 0.01
    epochs: int = 4
    hidden: int = 0
    value_ridge: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.episodes_per_update < 1 or self.updates < 1 or self.epochs < 1:
            raise ValueError("episodes_per_update, updates and epochs must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if self.clip_ratio <= 0 or self.learning_rate <= 0 or self.entropy_bonus < 0:
            raise ValueError("clip_ratio and learning_rate must be positive, entropy_bonus non-negative")


def surrogate(policy: LearnedSoftmax, obs, actions, logp_old, adv, clip_ratio: float,
              entropy_bonus: float) -> tuple:
    """Clipped surrogate objective (to maximize) and its parameter gradient."""
    pi = policy.probs(obs)
    n = len(actions)
    idx = np.arange(n)
    logp = np.log(pi[idx, actions] + 1e-300)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1 - clip_ratio, 1 + clip_ratio)
    unclipped_term = ratio * adv
    obj_terms = np.minimum(unclipped_term, clipped * adv)
    logpi = np.log(pi + 1e-300)
    entropy = -(pi * logpi).sum(1)
    value = obj_terms.mean() + entropy_bonus * entropy.mean()

    # the min picks the unclipped branch unless clipping binds
    active = unclipped_term <= clipped * adv
    onehot = np.zeros_like(pi)
    onehot[idx, actions] = 1.0
    dlogits = (active * ratio * adv)[:, None] * (onehot - pi)
    dlogits += entropy_bonus * (-pi * (logpi + entropy[:, None]))
    return value, policy.backward(obs, dlogits / n)


class Adam:
    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def ascend(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] += self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _discounted(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def _training_rewards(ep: Episode, reward) -> np.ndarray:
    if reward is None:
        return ep.rewards
    return reward.episode_rewards(ep.features, ep.rewards)


def train_policy(env, reward=None, config: Optional[TrainerConfig] = None,
                 policy: Optional[LearnedSoftmax] = None) -> tuple:
    """Optimize a :class:`LearnedSoftmax` policy for ``reward`` (``None``: environment reward).

    Returns ``(policy, curve)`` where ``curve[k]`` is the mean per-episode
    training return collected during update ``k``. Advantages are discounted
    returns minus a ridge-regression linear value baseline, normalized per
    batch. Raises :class:`TrainingError` on non-finite parameters.
    """
    cfg = config or TrainerConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if policy is None:
        policy = LearnedSoftmax(env.obs_dim, env.n_actions, cfg.hidden, seed=cfg.seed)
    opt = Adam(policy.params, cfg.learning_rate)
    value_w = np.zeros(env.obs_dim + 1)
    curve = []
    for update in range(cfg.updates):
        obs_b, act_b, ret_b, ep_returns = [], [], [], []
        for _ in range(cfg.episodes_per_update):
            ep, obs = _run_episode(env, policy, rng, record_obs=True)
            r = _training_rewards(ep, reward)
            ep_returns.append(float(r[1:].sum()))
            if not obs:
                continue
            obs_b.append(np.array(obs))
            act_b.append(ep.actions[: len(obs)])
            ret_b.append(_discounted(r[1 : len(obs) + 1], cfg.discount))
        curve.append(float(np.mean(ep_returns)))
        if not obs_b:
            continue
        obs = np.vstack(obs_b)
        actions = np.concatenate(act_b)
        returns = np.concatenate(ret_b)
        design = np.hstack([obs, np.ones((len(obs), 1))])
        adv = returns - design @ value_w
        if not np.all(np.isfinite(adv)):
            raise TrainingError(f"non-finite training returns at update {update}: mean return {curve[-1]:.4g}")
        std = adv.std()
        adv = (adv - adv.mean()) / std if std > 1e-8 else np.zeros_like(adv)
        logp_old = np.log(policy.probs(obs)[np.arange(len(actions)), actions] + 1e-300)
        for _ in range(cfg.epochs):
            _, grads = surrogate(policy, obs, actions, logp_old, adv, cfg.clip_ratio, cfg.entropy_bonus)
            opt.ascend(policy.params, grads)
        if not all(np.all(np.isfinite(v)) for v in policy.params.values()):
            raise TrainingError(
                f"non-finite policy parameters at update {update}: mean return {curve[-1]:.4g}, "
                f"advantage std {std:.4g}"
            )
        gram = design.T @ design + cfg.value_ridge * np.eye(design.shape[1])
        value_w = np.linalg.solve(gram, design.T @ returns)
    return policy, curve


def mean_return(env, policy: Policy, n_episodes: int = 100, reward=None, seed: int = 0) -> float:
    """Average undiscounted training return of ``policy`` (``reward=None``: environment reward)."""
    episodes = collect_rollouts(env, policy, n_episodes, reward_override=reward, seed=seed)
    if reward is None:
        return float(np.mean([ep.rewards.sum() for ep in episodes]))
    return float(np.mean([ep.train_rewards[1:].sum() for ep in episodes]))
