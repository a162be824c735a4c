"""Small tabular MDPs with closed-form causal-learning behaviour.

* :class:`AliasedMdp` -- five states, two of which share one observation, so
  the best first-order predictor depends on the data-collecting policy.
* :class:`TwoPathMdp` -- a noisy reliable feature versus a clean feature that
  only works on the easy path.
* :class:`DeterministicMdp` -- fully observable, deterministic, one-hot
  features; some linear model fits every policy exactly.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np

from .features import FeatureSpec


def _one_hot(i: Optional[int], n: int) -> np.ndarray:
    out = np.zeros(n)
    if i is not None:
        out[i] = 1.0
    return out


class AliasedMdp:
    """States s0..s4 observed as o0={s0}, o1={s1, s2}, o2={s3}, o3={s4}.

    From s0, action 0 (a1) leads to s1 and action 1 (a2) to s2; s1 always
    moves to s3 and s2 to s4, both terminal. Features are the one-hot
    observation followed by the one-hot action taken at that step (zero on
    terminal steps).
    """

    n_actions = 2
    n_obs = 4
    OBS_OF_STATE = (0, 1, 1, 2, 3)

    def __init__(self, seed: int = 0):
        self.state = 0
        self.done = False
        names = ("o0", "o1", "o2", "o3", "a1", "a2")
        self.feature_spec = FeatureSpec(names, np.zeros(6), np.ones(6))

    @property
    def obs_dim(self) -> int:
        return self.n_obs

    def reset(self, seed: Optional[int] = None) -> int:
        self.state = 0
        self.done = False
        return self.OBS_OF_STATE[0]

    def step(self, action: int) -> tuple:
        """Returns ``(observation_index, reward, done)``."""
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        if self.state == 0:
            self.state = 1 if action == 0 else 2
        else:
            self.state = 3 if self.state == 1 else 4
        self.done = self.state in (3, 4)
        return self.OBS_OF_STATE[self.state], 0.0, self.done

    def observation(self) -> np.ndarray:
        return _one_hot(self.OBS_OF_STATE[self.state], self.n_obs)

    def features(self, action: Optional[int] = None) -> np.ndarray:
        return np.concatenate([self.observation(), _one_hot(action, 2)])

    @staticmethod
    def parametric_table(p: float) -> np.ndarray:
        """Action probabilities of the policy taking a1 with probability p in o0."""
        table = np.full((4, 2), 0.5)
        table[0] = (p, 1 - p)
        return table


def aliased_mdp_step(state: int, action: int) -> tuple:
    """Pure transition of :class:`AliasedMdp`: ``(next_state, features, done)``."""
    env = AliasedMdp()
    env.state = state
    env.step(action)
    return env.state, env.features(), env.done


@dataclasses.dataclass
class TwoPathMdpConfig:
    n: int = 3
    p: float = 0.1
    max_steps: int = 10_000
    seed: int = 0


class TwoPathMdp:
    """States s_A, s_1..s_n, s_B, s_C, s_D (indices 0, 1..n, n+1, n+2, n+3).

    a1 (action 0) walks s_A -> s_1 -> ... -> s_n -> s_B; a2 (action 1) in
    s_A goes to s_C and in any s_i returns to s_A. s_B and s_C move to the
    terminal s_D with reward 1. The learner sees only (f1, f2, R): f1 = xi
    at s_B and s_C, f2 = 1 at s_C, zero elsewhere, where xi is 1 with
    probability 1 - p and is redrawn every time s_B or s_C is entered.
    """

    n_actions = 2

    def __init__(self, config: TwoPathMdpConfig):
        if config.n < 0 or not 0.0 <= config.p <= 1.0:
            raise ValueError("TwoPathMdp needs n >= 0 and p in [0, 1]")
        self.config = config
        n = config.n
        self.s_a, self.s_b, self.s_c, self.s_d = 0, n + 1, n + 2, n + 3
        self.n_states = n + 4
        self.feature_spec = FeatureSpec(("f1", "f2", "R"), np.zeros(3), np.ones(3))
        self._rng = np.random.default_rng(config.seed)
        self.reset()

    @property
    def obs_dim(self) -> int:
        return self.n_states

    def reset(self, seed: Optional[int] = None) -> int:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self.s_a
        self.xi = 0.0
        self.reward = 0.0
        self.steps = 0
        self.done = False
        return self.state

    def step(self, action: int) -> tuple:
        """Returns ``(state_index, reward, done)``."""
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        s, n = self.state, self.config.n
        reward = 0.0
        if s in (self.s_b, self.s_c):
            nxt = self.s_d
            reward = 1.0
        elif s == self.s_a:
            nxt = (1 if n > 0 else self.s_b) if action == 0 else self.s_c
        else:
            nxt = (s + 1 if s < n else self.s_b) if action == 0 else self.s_a
        if nxt in (self.s_b, self.s_c):
            self.xi = float(self._rng.random() >= self.config.p)
        self.state = nxt
        self.reward = reward
        self.steps += 1
        self.done = nxt == self.s_d or self.steps >= self.config.max_steps
        return nxt, reward, self.done

    def observation(self) -> np.ndarray:
        return _one_hot(self.state, self.n_states)

    def features(self, action: Optional[int] = None) -> np.ndarray:
        f1 = self.xi if self.state in (self.s_b, self.s_c) else 0.0
        f2 = 1.0 if self.state == self.s_c else 0.0
        return np.array([f1, f2, self.reward])

    def parametric_table(self, q: float) -> np.ndarray:
        """Take a1 with probability ``q`` in s_A, then always a1 along the chain.

        Such a policy ends in s_B with probability exactly ``q``.
        """
        table = np.full((self.n_states, 2), 0.5)
        table[self.s_a] = (q, 1 - q)
        table[1 : self.config.n + 1] = (1.0, 0.0)
        return table

    def uniform_arrival_probability(self) -> float:
        """P(reach s_B before s_C) under the uniform random policy."""
        half_n = 0.5 ** self.config.n
        return half_n / (1.0 + half_n)


def twopath_mdp_step(state: int, action: int, config: TwoPathMdpConfig, rng=None) -> tuple:
    """Pure transition of :class:`TwoPathMdp`: ``(next_state, (f1, f2, R), done)``."""
    env = TwoPathMdp(config)
    if rng is not None:
        env._rng = rng
    env.state = state
    env.step(action)
    return env.state, env.features(), env.done


class DeterministicMdp:
    """Deterministic, fully observable tabular MDP.

    Features are ``one_hot(state)`` followed by ``one_hot((state, action))``;
    the state block is a linear function of the previous step's
    state-action block, so the state rows are realizable for every policy.
    """

    def __init__(self, transitions: Sequence[Sequence[int]], terminal=(), start: int = 0, horizon: int = 20):
        self.transitions = np.asarray(transitions, dtype=int)
        self.n_states, self.n_actions = self.transitions.shape
        self.terminal = frozenset(terminal)
        self.start = start
        self.horizon = horizon
        s_names = [f"s{i}" for i in range(self.n_states)]
        sa_names = [f"s{i}a{j}" for i in range(self.n_states) for j in range(self.n_actions)]
        f = self.n_states * (1 + self.n_actions)
        self.feature_spec = FeatureSpec(tuple(s_names + sa_names), np.zeros(f), np.ones(f))
        self.reset()

    @classmethod
    def chain(cls, n_states: int, horizon: int = 20) -> "DeterministicMdp":
        """a1 moves right, a2 resets to s0; the last state is terminal."""
        table = [[min(s + 1, n_states - 1), 0] for s in range(n_states)]
        return cls(table, terminal={n_states - 1}, horizon=horizon)

    @property
    def obs_dim(self) -> int:
        return self.n_states

    @property
    def state_rows(self) -> list:
        return list(range(self.n_states))

    def reset(self, seed: Optional[int] = None) -> int:
        self.state = self.start
        self.steps = 0
        self.done = self.state in self.terminal
        return self.state

    def step(self, action: int) -> tuple:
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        self.state = int(self.transitions[self.state, action])
        self.steps += 1
        self.done = self.state in self.terminal or self.steps >= self.horizon
        return self.state, 0.0, self.done

    def observation(self) -> np.ndarray:
        return _one_hot(self.state, self.n_states)

    def features(self, action: Optional[int] = None) -> np.ndarray:
        sa = None if action is None else self.state * self.n_actions + action
        return np.concatenate([
            _one_hot(self.state, self.n_states),
            _one_hot(sa, self.n_states * self.n_actions),
        ])

    def true_weights(self) -> tuple:
        """(W, b) reproducing the state block exactly, including the initial step."""
        f = self.feature_spec.n_features
        W = np.zeros((f, f))
        b = np.zeros(f)
        b[self.start] = 1.0
        for s in range(self.n_states):
            for a in range(self.n_actions):
                col = self.n_states + s * self.n_actions + a
                W[self.transitions[s, a], col] += 1.0
                W[self.start, col] -= 1.0
        return W, b
