"""Ground-truth causal graphs of the simulated environments."""

from __future__ import annotations

import numpy as np

from ..causal import CausalGraph
from .keychest import BASE_FEATURES, CONJUNCTIONS

KEYCHEST_NAMES = BASE_FEATURES + tuple(f"{a}*{b}" for a, b in CONJUNCTIONS)

# (parent, child, sign)
KEYCHEST_EDGES = (
    ("health", "health", +1),
    ("food_collected", "health", +1),
    ("keys", "keys", +1),
    ("key_collected", "keys", +1),
    ("chest_opened", "keys", -1),
    ("lamp", "lamp", +1),
    ("button_pressed", "lamp", +1),
    ("lamp*button_pressed", "lamp", -1),
    ("chest_opened", "reward", +1),
)

# rows scored by the convergence metric
EVAL_ROWS = {
    "A": ("health", "keys", "lamp", "reward"),
    "B": ("health",),
    "C": ("health", "reward", "keys", "lamp"),
    "Fig3": ("o1", "o2", "o3"),
    "Fig5": ("R",),
}

_MDP_EDGES = {
    "Fig3": (("o0", "o1", 1), ("o1", "o2", 1), ("o1", "o3", 1)),
    "Fig5": (("f1", "R", 1),),
}
_MDP_NAMES = {"Fig3": ("o0", "o1", "o2", "o3", "a1", "a2"), "Fig5": ("f1", "f2", "R")}


def _graph(names, edges) -> CausalGraph:
    f = len(names)
    sign = np.zeros((f, f), dtype=int)
    for parent, child, s in edges:
        sign[names.index(child), names.index(parent)] = s
    return CausalGraph(sign != 0, sign, sign.astype(float), 0.0, tuple(names))


def ground_truth_graph(env_id: str) -> CausalGraph:
    """Signed adjacency of the true dynamics (``Fig3``/``Fig5``: the minimax graph)."""
    if env_id in ("A", "B", "C"):
        return _graph(KEYCHEST_NAMES, KEYCHEST_EDGES)
    if env_id in _MDP_EDGES:
        return _graph(_MDP_NAMES[env_id], _MDP_EDGES[env_id])
    raise ValueError(f"unknown environment {env_id!r}")


def eval_rows(env_id: str, names=None) -> list:
    """Indices of the rows the convergence metric compares for ``env_id``."""
    if env_id not in EVAL_ROWS:
        raise ValueError(f"unknown environment {env_id!r}")
    names = names or ground_truth_graph(env_id).feature_names
    return [names.index(r) for r in EVAL_ROWS[env_id]]
