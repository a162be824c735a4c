"""Sparse linear (Granger-style) causal models over step features.

Each feature at step ``t`` is regressed on all features at step ``t - 1``:
``f_t = W f_{t-1} + b`` with an l1 penalty on ``W``. Thresholding the
weight magnitudes gives the causal graph; ``W[i, j]`` is the effect of
parent ``j`` on child ``i``.
"""

from __future__ import annotations

import collections
import dataclasses
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclasses.dataclass
class Episode:
    """One rollout: ``features[t]`` observed at step ``t``, ``actions[t]`` taken after it.

    ``rewards`` holds the environment reward received with each step and
    ``train_rewards`` the reward the agent was optimizing (an intervention
    reward, or ``None`` when that is the environment reward).
    """

    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    policy_tag: str = ""
    train_rewards: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.actions = np.asarray(self.actions, dtype=int)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if self.train_rewards is not None:
            self.train_rewards = np.asarray(self.train_rewards, dtype=float)
        if len(self.features) < 1:
            raise ValueError("an episode needs at least one step")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Episode):
            return NotImplemented
        same_train = (self.train_rewards is None) == (other.train_rewards is None) and (
            self.train_rewards is None or np.array_equal(self.train_rewards, other.train_rewards)
        )
        return (
            self.policy_tag == other.policy_tag
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and same_train
        )


class HistoryBuffer:
    """FIFO of episodes holding at most ``capacity`` of them (oldest evicted first)."""

    def __init__(self, capacity: int = 5000, episodes: Iterable[Episode] = ()):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes = collections.deque(maxlen=capacity)
        self.extend(episodes)

    def add(self, episode: Episode) -> None:
        if self._episodes and episode.n_features != self._episodes[0].n_features:
            raise ValueError(
                f"episode has {episode.n_features} features, buffer holds {self._episodes[0].n_features}"
            )
        self._episodes.append(episode)

    def extend(self, episodes: Iterable[Episode]) -> None:
        for ep in episodes:
            self.add(ep)

    @property
    def episodes(self) -> list:
        return list(self._episodes)

    @property
    def n_steps(self) -> int:
        return sum(len(ep) for ep in self._episodes)

    def __len__(self) -> int:
        return len(self._episodes)

    def __iter__(self):
        return iter(self._episodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HistoryBuffer):
            return NotImplemented
        return self.capacity == other.capacity and self.episodes == other.episodes


@dataclasses.dataclass
class LinearCausalModel:
    W: np.ndarray
    b: np.ndarray
    lam: float = 0.0
    feature_names: tuple = ()

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1] or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"W must be FxF and b length F, got {self.W.shape} and {self.b.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("model parameters must be finite")
        self.feature_names = tuple(self.feature_names)

    @property
    def n_features(self) -> int:
        return len(self.b)

    def copy(self) -> "LinearCausalModel":
        return LinearCausalModel(self.W.copy(), self.b.copy(), self.lam, self.feature_names)

    def to_dict(self, tau: Optional[float] = None) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "lambda": self.lam,
            "tau": tau,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearCausalModel":
        return cls(np.array(d["W"], dtype=float), np.array(d["b"], dtype=float), d["lambda"], d["feature_names"])


@dataclasses.dataclass
class CausalGraph:
    """Thresholded model: ``adjacency[i, j]`` means ``j -> i``."""

    adjacency: np.ndarray
    sign: np.ndarray
    weights: np.ndarray
    tau: float
    feature_names: tuple = ()

    @property
    def n_features(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list:
        """``(child, parent)`` index pairs of present edges, in row-major order."""
        return [tuple(int(k) for k in e) for e in np.argwhere(self.adjacency)]

    def has_edge(self, parent, child) -> bool:
        if isinstance(parent, str):
            parent = self.feature_names.index(parent)
        if isinstance(child, str):
            child = self.feature_names.index(child)
        return bool(self.adjacency[child, parent])

    def parents(self, child) -> list:
        if isinstance(child, str):
            child = self.feature_names.index(child)
        idx = np.flatnonzero(self.adjacency[child])
        return [self.feature_names[j] for j in idx] if self.feature_names else list(idx)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency) and np.array_equal(self.sign, other.sign)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "adjacency": self.adjacency.astype(int).tolist(),
            "sign": self.sign.astype(int).tolist(),
            "weights": self.weights.tolist(),
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        return cls(
            np.array(d["adjacency"], dtype=bool),
            np.array(d["sign"], dtype=int),
            np.array(d["weights"], dtype=float),
            d["tau"],
            tuple(d["feature_names"]),
        )


@dataclasses.dataclass
class EdgeUncertainty:
    variance: np.ndarray
    ensemble_size: int


@dataclasses.dataclass
class SolverConfig:
    """Coordinate-descent settings.

    ``include_initial`` adds the first step of every episode as a target
    predicted from an all-zero predecessor, so that ``b`` is also fit as the
    constant prediction for step 0.
    """

    standardize: bool = True
    fit_intercept: bool = True
    include_initial: bool = False
    tol: float = 1e-8
    max_sweeps: int = 10_000


@dataclasses.dataclass
class _Moments:
    """Sufficient statistics of the (previous, next) step pairs."""

    n: float
    sx: np.ndarray
    sy: np.ndarray
    sxx: np.ndarray
    sxy: np.ndarray

    def __add__(self, other: "_Moments") -> "_Moments":
        return _Moments(
            self.n + other.n,
            self.sx + other.sx,
            self.sy + other.sy,
            self.sxx + other.sxx,
            self.sxy + other.sxy,
        )


def _pairs(ep: Episode, include_initial: bool) -> tuple:
    x, y = ep.features[:-1], ep.features[1:]
    if include_initial:
        x = np.vstack([np.zeros((1, ep.n_features)), x])
        y = ep.features
    return x, y


def _episode_moments(ep: Episode, include_initial: bool) -> _Moments:
    x, y = _pairs(ep, include_initial)
    return _Moments(len(x), x.sum(0), y.sum(0), x.T @ x, x.T @ y)


def _episode_list(data) -> list:
    episodes = data.episodes if isinstance(data, HistoryBuffer) else list(data)
    if not episodes:
        raise ValueError("no episodes to fit on")
    f = episodes[0].n_features
    if any(ep.n_features != f for ep in episodes):
        raise ValueError("episodes have mismatched feature dimensions")
    return episodes


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_cd(gram: np.ndarray, cross: np.ndarray, lam: float, tol: float = 1e-8, max_sweeps: int = 10_000,
             w0: Optional[np.ndarray] = None) -> np.ndarray:
    """Cyclic coordinate descent for ``w'Gw - 2 c'w + lam * |w|_1``, all rows at once.

    ``gram`` is ``X'X / n`` (F x F) and ``cross`` is ``Y'X / n`` (rows x F);
    the objective equals ``mean ||y - Xw||^2 + lam |w|_1`` up to a constant.
    Columns with zero variance keep a zero coefficient.
    """
    rows, f = cross.shape
    W = np.zeros((rows, f)) if w0 is None else w0.copy()
    diag = np.diag(gram).copy()
    active = diag > 1e-14
    for _ in range(max_sweeps):
        delta = 0.0
        for j in np.flatnonzero(active):
            old = W[:, j].copy()
            rho = cross[:, j] - W @ gram[:, j] + old * diag[j]
            W[:, j] = _soft_threshold(rho, lam / 2.0) / diag[j]
            delta = max(delta, float(np.max(np.abs(W[:, j] - old))))
        if delta < tol:
            break
    return W


def _fit_moments(m: _Moments, lam: float, cfg: SolverConfig, names=()) -> LinearCausalModel:
    if m.n < 1:
        raise ValueError("need at least one step pair to fit")
    n = m.n
    mx, my = m.sx / n, m.sy / n
    if cfg.fit_intercept:
        cxx = m.sxx / n - np.outer(mx, mx)
        cxy = m.sxy / n - np.outer(mx, my)
    else:
        cxx = m.sxx / n
        cxy = m.sxy / n
    diag = np.clip(np.diag(cxx), 0.0, None)
    scale = np.sqrt(diag) if cfg.standardize else np.ones_like(diag)
    scale[scale < 1e-12] = 1.0
    gram = cxx / np.outer(scale, scale)
    cross = (cxy / scale[:, None]).T
    W_std = lasso_cd(gram, cross, lam, cfg.tol, cfg.max_sweeps)
    W = W_std / scale[None, :]
    b = my - W @ mx if cfg.fit_intercept else np.zeros_like(my)
    return LinearCausalModel(W, b, lam, names)


def fit_causal_model(data, lam: float = 0.01, solver_config: Optional[SolverConfig] = None,
                     feature_names: Sequence[str] = ()) -> LinearCausalModel:
    """Minimize ``mean_t ||f_t - (W f_{t-1} + b)||^2 + lam * |W|_1`` over the data.

    ``data`` is a :class:`HistoryBuffer` or a list of episodes; pairs never
    cross episode boundaries and ``b`` is not penalized. With
    ``standardize`` the penalty applies to coefficients of unit-variance
    predictors; the returned ``W`` is always in the original units.
    """
    cfg = solver_config or SolverConfig()
    if lam < 0:
        raise ValueError("lam must be non-negative")
    episodes = _episode_list(data)
    f = episodes[0].n_features
    m = _Moments(0, np.zeros(f), np.zeros(f), np.zeros((f, f)), np.zeros((f, f)))
    for ep in episodes:
        m = m + _episode_moments(ep, cfg.include_initial)
    if m.n < 1:
        raise ValueError("need at least two steps in total")
    return _fit_moments(m, lam, cfg, feature_names)


def predict(model: LinearCausalModel, f_prev: np.ndarray) -> np.ndarray:
    """``W f_prev + b``; ``f_prev`` may be one vector or a (T, F) batch."""
    f_prev = np.asarray(f_prev, dtype=float)
    if f_prev.shape[-1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {f_prev.shape[-1]}")
    return f_prev @ model.W.T + model.b


def step_errors(model: LinearCausalModel, ep: Episode, include_initial: bool = True) -> np.ndarray:
    """Squared prediction error per step and feature, shape (T, F) or (T-1, F)."""
    pred = predict(model, ep.features[:-1])
    if include_initial:
        pred = np.vstack([model.b, pred])
        target = ep.features
    else:
        target = ep.features[1:]
    return (target - pred) ** 2


def evaluate_loss(model: LinearCausalModel, episodes: Sequence[Episode], rows=None,
                  include_initial: bool = True) -> float:
    """Average over episodes of the summed squared prediction error.

    The step-0 prediction is the constant ``b``. ``rows`` restricts the sum
    to a subset of target features.
    """
    episodes = list(episodes)
    if not episodes:
        raise ValueError("evaluate_loss needs at least one episode")
    total = 0.0
    for ep in episodes:
        if ep.n_features != model.n_features:
            raise ValueError("episode and model feature dimensions differ")
        err = step_errors(model, ep, include_initial)
        total += float(err.sum() if rows is None else err[:, rows].sum())
    return total / len(episodes)


def threshold_graph(model: LinearCausalModel, tau: float) -> CausalGraph:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    W = model.W
    adj = np.abs(W) > tau
    sign = np.where(adj, np.sign(W), 0).astype(int)
    return CausalGraph(adj, sign, W.copy(), tau, model.feature_names)


def ensemble_fit(data, S: int, subset_fraction: float, lam: float = 0.01, seed: int = 0,
                 solver_config: Optional[SolverConfig] = None, feature_names: Sequence[str] = ()) -> list:
    """Fit ``S`` models, each on a uniform subsample of whole episodes."""
    if S < 2:
        raise ValueError("an ensemble needs S >= 2")
    if not 0.0 < subset_fraction <= 1.0:
        raise ValueError("subset_fraction must be in (0, 1]")
    cfg = solver_config or SolverConfig()
    episodes = _episode_list(data)
    moments = [_episode_moments(ep, cfg.include_initial) for ep in episodes]
    k = max(1, int(round(subset_fraction * len(episodes))))
    rng = np.random.default_rng(seed)
    models = []
    for _ in range(S):
        idx = np.sort(rng.choice(len(episodes), size=k, replace=False))
        m = moments[idx[0]]
        for i in idx[1:]:
            m = m + moments[i]
        models.append(_fit_moments(m, lam, cfg, feature_names))
    return models


def edge_uncertainty(models: Sequence[LinearCausalModel]) -> EdgeUncertainty:
    """Entrywise sample variance (ddof=1) of ``W`` across the ensemble."""
    if len(models) < 2:
        raise ValueError("edge uncertainty needs at least two models")
    stack = np.stack([m.W for m in models])
    return EdgeUncertainty(stack.var(axis=0, ddof=1), len(models))


def cosine_similarity(G: CausalGraph, G_star: CausalGraph, rows=None) -> float:
    """Cosine between the flattened 0/1 adjacency matrices, optionally on some rows.

    Returns 0 when either (restricted) graph has no edges.
    """
    if G.adjacency.shape != G_star.adjacency.shape:
        raise ValueError("graphs have different numbers of features")
    a = G.adjacency.astype(float)
    b = G_star.adjacency.astype(float)
    if rows is not None:
        a, b = a[rows], b[rows]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.sum(a * b) / (na * nb), 0.0, 1.0))
