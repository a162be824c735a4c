"""Closed-form and brute-force reference values.

Used to check the learner and the simulators independently of the
coordinate-descent solver: optimal and minimax weights of the aliased and
two-path MDPs, an exhaustive lasso solver for tiny problems, and the
realizable-case property check.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
from typing import Iterable, Optional, Sequence

import numpy as np

from .causal import LinearCausalModel, evaluate_loss


@dataclasses.dataclass(frozen=True)
class Fig3Solution:
    """Weights on the o2 / o3 one-hot components when predicting from o1."""

    w2: float
    w3: float
    loss_per_visit: float


class MinimaxChoice(str, enum.Enum):
    RELY_ON_F1 = "RelyOnF1"
    RELY_ON_F2 = "RelyOnF2"


@dataclasses.dataclass(frozen=True)
class Fig5Solution:
    w1: float
    w2: float
    loss: float
    minimax_choice: MinimaxChoice


def fig3_loss(w2, w3, p):
    """Expected o1-visit loss of weights (w2, w3) when o2 follows with probability p."""
    return p * ((1 - w2) ** 2 + w3**2) + (1 - p) * (w2**2 + (1 - w3) ** 2)


def fig3_optimal(p: float) -> Fig3Solution:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    return Fig3Solution(p, 1.0 - p, 2 * p - 2 * p * p)


def fig3_minimax() -> Fig3Solution:
    return Fig3Solution(0.5, 0.5, 0.5)


def fig3_minimax_grid(step: float = 0.01) -> Fig3Solution:
    """Numerical ``min_{w2, w3} max_p`` of :func:`fig3_loss` on a regular grid."""
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    w2, w3 = np.meshgrid(grid, grid, indexing="ij")
    worst = np.full(w2.shape, -np.inf)
    for p in grid:
        worst = np.maximum(worst, fig3_loss(w2, w3, p))
    i, j = np.unravel_index(np.argmin(worst), worst.shape)
    return Fig3Solution(float(grid[i]), float(grid[j]), float(worst[i, j]))


def fig5_loss(w1, w2, p, q):
    """Expected reward-prediction loss; s_B is reached with probability q."""
    at_b = p + (1 - p) * (1 - w1) ** 2
    at_c = (1 - p) * (1 - w1 - w2) ** 2 + p * (1 - w2) ** 2
    return q * at_b + (1 - q) * at_c


def fig5_optimal(p: float, q: float) -> Fig5Solution:
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("p and q must lie in [0, 1]")
    denom = p + q - p * q
    if denom <= 0:
        raise ValueError("p = q = 0 leaves the f1 weight undetermined")
    w1 = q / denom
    # stationarity in w2: (1-p)(1-w1-w2) + p(1-w2) = 0
    w2 = 1.0 - (1.0 - p) * w1
    choice = MinimaxChoice.RELY_ON_F1 if p < 1 else MinimaxChoice.RELY_ON_F2
    return Fig5Solution(w1, w2, float(fig5_loss(w1, w2, p, q)), choice)


def fig5_minimax(p: float) -> Fig5Solution:
    """Relying on f1 alone costs at most p (at q = 0); relying on f2 up to 1."""
    if p < 1:
        return Fig5Solution(1.0, 0.0, p, MinimaxChoice.RELY_ON_F1)
    return Fig5Solution(0.0, 1.0, 1.0, MinimaxChoice.RELY_ON_F2)


def _lasso_objective(points: np.ndarray, gram, cross, yy, n, lam) -> np.ndarray:
    quad = np.einsum("pi,ij,pj->p", points, gram, points)
    return (yy - 2 * points @ cross + quad) / n + lam * np.abs(points).sum(1)


def brute_force_lasso(X: np.ndarray, y: np.ndarray, lam: float, grid_step: Optional[float] = None,
                      bound: float = 3.0, tol: float = 1e-7) -> np.ndarray:
    """Grid-search minimizer of ``mean (y - Xw)^2 + lam * |w|_1`` over ``[-bound, bound]^F``.

    An exhaustive grid with spacing ``grid_step`` is followed by repeated
    exhaustive searches of a shrinking window around the incumbent, until the
    spacing falls below ``tol``. No intercept: center the data first if one
    is wanted.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, f = X.shape
    if f > 4:
        raise ValueError("brute_force_lasso is limited to at most 4 features")
    gram, cross, yy = X.T @ X, X.T @ y, float(y @ y)
    if grid_step is None:
        # about 4e5 grid points whatever F is
        grid_step = 2 * bound / (int((4e5) ** (1 / f)) - 1)

    axis = np.arange(-bound, bound + grid_step / 2, grid_step)
    points = np.array(list(itertools.product(axis, repeat=f)))
    best = points[np.argmin(_lasso_objective(points, gram, cross, yy, n, lam))]

    step = grid_step
    offsets = np.arange(-4, 5)
    while step > tol:
        step /= 4.0
        local = best + step * np.array(list(itertools.product(offsets, repeat=f)))
        local = np.clip(local, -bound, bound)
        # keep exact zeros reachable: the l1 kink is where the optimum often sits
        local = np.vstack([local, np.where(np.abs(best) < 4 * step, 0.0, best)])
        best = local[np.argmin(_lasso_objective(local, gram, cross, yy, n, lam))]
    return best


def realizable_check(env, model: LinearCausalModel, policies: Iterable, episodes_per_policy: int = 1,
                     rows: Optional[Sequence[int]] = None, tol: float = 1e-6, seed: int = 0) -> bool:
    """True iff ``model`` has loss below ``tol`` on rollouts of every policy.

    ``rows`` restricts the loss to the environment-driven features (e.g.
    the state block of a :class:`~interventionlab.envs.DeterministicMdp`);
    by default all features count.
    """
    from .rl import collect_rollouts

    for k, policy in enumerate(policies):
        episodes = collect_rollouts(env, policy, episodes_per_policy, seed=seed + k)
        if evaluate_loss(model, episodes, rows=rows) >= tol:
            return False
    return True


def deterministic_policies(n_obs: int, n_actions: int):
    """Every deterministic tabular policy, as :class:`~interventionlab.rl.TabularPolicy`."""
    from .rl import TabularPolicy

    for choice in itertools.product(range(n_actions), repeat=n_obs):
        table = np.zeros((n_obs, n_actions))
        table[np.arange(n_obs), choice] = 1.0
        yield TabularPolicy(table, tag="det-" + "".join(map(str, choice)))
