"""Intervention rewards built from the current causal model, and target selection.

Three reward designs drive an agent to produce data that can contradict the
current model:

* :class:`EdgeReward` pushes a parent to one extreme and its child to the
  other, against the sign of the learned edge.
* :class:`NodeReward` drives one feature to a target value while staying
  close to previously seen feature statistics, or while keeping part of the
  old reward.
* :class:`LossReward` pays the prediction error of a frozen model snapshot.

Every reward maps a step (and its predecessor) to a scalar; ``episode_rewards``
evaluates a whole episode with the convention that ``out[t]`` is earned by the
transition into step ``t`` and ``out[0] = 0``.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Optional, Sequence

import numpy as np

from .causal import CausalGraph, EdgeUncertainty, Episode, LinearCausalModel, predict


class NodeMode(str, enum.Enum):
    STAT_PENALTY = "StatPenalty"
    DISCOUNTED_OLD = "DiscountedOld"


class Strategy(str, enum.Enum):
    RANDOM = "Random"
    WEIGHTED = "Weighted"
    CONSTANT = "Constant"


class NoEdgesError(ValueError):
    """The graph has no selectable edge."""


@dataclasses.dataclass
class FeatureStats:
    mean: np.ndarray
    variance: np.ndarray
    episode_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.variance = np.asarray(self.variance, dtype=float)
        if np.any(self.variance < 0):
            raise ValueError("variances must be non-negative")

    def distance(self, other: "FeatureStats") -> float:
        """L1 distance between the two mean vectors plus between the variance vectors."""
        return float(np.abs(self.mean - other.mean).sum() + np.abs(self.variance - other.variance).sum())

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "variance": self.variance.tolist(), "episode_count": self.episode_count}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(d["mean"], d["variance"], d["episode_count"])


def compute_feature_stats(episodes: Sequence[Episode]) -> FeatureStats:
    """Per-feature mean and population variance over all steps of all episodes."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("compute_feature_stats needs at least one episode")
    x = np.vstack([ep.features for ep in episodes])
    return FeatureStats(x.mean(0), x.var(0), len(episodes))


class InterventionReward:
    kind = ""

    def __call__(self, *args, **kwargs) -> float:
        raise NotImplementedError

    def episode_rewards(self, features: np.ndarray, env_rewards: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class EdgeReward(InterventionReward):
    """``f_i - f_j`` for a positive edge ``i -> j``; ``f_i + f_j`` for a negative one."""

    kind = "Edge"

    def __init__(self, i: int, j: int, sign: int):
        if i == j:
            raise ValueError("an edge intervention needs two distinct features")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.i, self.j, self.sign = int(i), int(j), int(sign)

    def __call__(self, f_t) -> float:
        return float(f_t[self.i] - self.sign * f_t[self.j])

    def episode_rewards(self, features, env_rewards=None) -> np.ndarray:
        out = features[:, self.i] - self.sign * features[:, self.j]
        out[0] = 0.0
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "i": self.i, "j": self.j, "sign": self.sign}


class NodeReward(InterventionReward):
    """Drive feature ``i`` toward ``x``.

    ``StatPenalty``: ``-|f_i - x| - d`` with ``d`` the distance between the
    current feature statistics and ``baseline_stats``. When no current
    statistics are passed, those of the episode being scored are used.
    ``DiscountedOld``: ``-|f_i - x| + gamma * r_old`` where ``r_old`` is the
    environment reward of the same step.
    """

    kind = "Node"

    def __init__(self, i: int, x: float, mode=NodeMode.STAT_PENALTY, gamma: float = 0.5,
                 baseline_stats: Optional[FeatureStats] = None, bounds: Optional[tuple] = None):
        self.mode = NodeMode(mode)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if bounds is not None and not bounds[0] <= x <= bounds[1]:
            raise ValueError(f"target {x} outside the feature range {bounds}")
        if self.mode is NodeMode.STAT_PENALTY and baseline_stats is None:
            raise ValueError("StatPenalty mode needs baseline_stats")
        self.i, self.x, self.gamma = int(i), float(x), float(gamma)
        self.baseline_stats = baseline_stats

    def _d(self, current_stats: Optional[FeatureStats]) -> float:
        if self.mode is not NodeMode.STAT_PENALTY:
            return 0.0
        if current_stats is None:
            raise ValueError("StatPenalty mode needs the current feature statistics")
        return self.baseline_stats.distance(current_stats)

    def __call__(self, f_t, env_reward_old: float = 0.0, current_stats: Optional[FeatureStats] = None) -> float:
        r = -abs(float(f_t[self.i]) - self.x)
        if self.mode is NodeMode.STAT_PENALTY:
            return r - self._d(current_stats)
        return r + self.gamma * env_reward_old

    def episode_rewards(self, features, env_rewards) -> np.ndarray:
        out = -np.abs(features[:, self.i] - self.x)
        if self.mode is NodeMode.STAT_PENALTY:
            out = out - self._d(FeatureStats(features.mean(0), features.var(0), 1))
        else:
            out = out + self.gamma * np.asarray(env_rewards, dtype=float)
        out[0] = 0.0
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "i": self.i,
            "x": self.x,
            "mode": self.mode.value,
            "gamma": self.gamma,
            "baseline_stats": None if self.baseline_stats is None else self.baseline_stats.to_dict(),
        }


class LossReward(InterventionReward):
    """Squared one-step prediction error of a frozen copy of the model."""

    kind = "Loss"

    def __init__(self, model: LinearCausalModel):
        self._model = model.copy()
        self._model.W.setflags(write=False)
        self._model.b.setflags(write=False)

    @property
    def model(self) -> LinearCausalModel:
        return self._model

    def __call__(self, f_prev, f_t) -> float:
        f_t = np.asarray(f_t, dtype=float)
        if f_t.shape != (self._model.n_features,):
            raise ValueError(f"expected {self._model.n_features} features, got shape {f_t.shape}")
        return float(np.sum((f_t - predict(self._model, f_prev)) ** 2))

    def episode_rewards(self, features, env_rewards=None) -> np.ndarray:
        out = np.zeros(len(features))
        if len(features) > 1:
            out[1:] = np.sum((features[1:] - predict(self._model, features[:-1])) ** 2, axis=1)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self._model.to_dict()}


def reward_from_dict(d: dict) -> InterventionReward:
    kind = d.get("kind")
    if kind == "Edge":
        return EdgeReward(d["i"], d["j"], d["sign"])
    if kind == "Node":
        stats = d.get("baseline_stats")
        return NodeReward(d["i"], d["x"], d["mode"], d["gamma"], None if stats is None else FeatureStats.from_dict(stats))
    if kind == "Loss":
        return LossReward(LinearCausalModel.from_dict(d["model"]))
    raise ValueError(f"unknown intervention reward kind {kind!r}")


@dataclasses.dataclass
class SelectionState:
    """How targets are picked, plus the memory needed for sampling without replacement.

    ``node_visits`` counts selections per node so that target values can
    alternate between the feature's maximum and minimum.
    """

    strategy: Strategy = Strategy.WEIGHTED
    with_replacement: bool = False
    already_selected: set = dataclasses.field(default_factory=set)
    node_visits: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "with_replacement": self.with_replacement,
            "already_selected": sorted((list(t) if isinstance(t, tuple) else t for t in self.already_selected), key=repr),
            "node_visits": {str(k): v for k, v in sorted(self.node_visits.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionState":
        selected = {tuple(t) if isinstance(t, list) else t for t in d["already_selected"]}
        visits = {int(k): v for k, v in d["node_visits"].items()}
        return cls(d["strategy"], d["with_replacement"], selected, visits)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _pick(candidates: list, scores: np.ndarray, sel: SelectionState, rng: np.random.Generator):
    """Choose among ``candidates`` (already in tie-break order) per the strategy."""
    if not sel.with_replacement:
        fresh = [k for k, c in enumerate(candidates) if c not in sel.already_selected]
        if not fresh:
            sel.already_selected.clear()
            fresh = list(range(len(candidates)))
        candidates = [candidates[k] for k in fresh]
        scores = scores[fresh]
    if sel.strategy is Strategy.CONSTANT:
        k = int(np.argmax(scores))
    elif sel.strategy is Strategy.WEIGHTED and scores.sum() > 0:
        k = int(rng.choice(len(candidates), p=scores / scores.sum()))
    else:
        k = int(rng.integers(len(candidates)))
    choice = candidates[k]
    if not sel.with_replacement:
        sel.already_selected.add(choice)
    return choice


def select_edge(graph: CausalGraph, unc: EdgeUncertainty, sel: SelectionState, rng_seed=None,
                rows: Optional[Sequence[int]] = None) -> tuple:
    """Pick a present edge and return ``(parent, child, sign)``.

    Self-loops cannot be intervened on and are skipped. ``rows`` restricts
    the candidate children. Ties go to the lowest (child, parent) index.
    """
    candidates = [
        (parent, child) for child, parent in graph.edges()
        if parent != child and (rows is None or child in rows)
    ]
    if not candidates:
        raise NoEdgesError("the graph has no edge between distinct features")
    scores = np.array([max(float(unc.variance[c, p]), 0.0) for p, c in candidates])
    parent, child = _pick(candidates, scores, sel, _rng(rng_seed))
    return parent, child, int(graph.sign[child, parent])


def node_scores(graph: CausalGraph, unc: EdgeUncertainty) -> np.ndarray:
    """Total variance of the present edges entering or leaving each node (self-loops once)."""
    v = np.where(graph.adjacency, np.clip(unc.variance, 0.0, None), 0.0)
    return v.sum(0) + v.sum(1) - np.diag(v)


def select_node(graph: CausalGraph, unc: EdgeUncertainty, sel: SelectionState, rng_seed=None,
                min_val=None, max_val=None) -> tuple:
    """Pick a node and a target value ``x``.

    Successive selections of the same node alternate the target between
    ``max_val[i]`` (first) and ``min_val[i]``; bounds default to 0 and 1.
    """
    f = graph.n_features
    if f < 1:
        raise ValueError("the graph has no features")
    lo = np.zeros(f) if min_val is None else np.asarray(min_val, dtype=float)
    hi = np.ones(f) if max_val is None else np.asarray(max_val, dtype=float)
    i = _pick(list(range(f)), node_scores(graph, unc), sel, _rng(rng_seed))
    visits = sel.node_visits.get(i, 0)
    sel.node_visits[i] = visits + 1
    return i, float(hi[i] if visits % 2 == 0 else lo[i])
