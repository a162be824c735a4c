"""Fits on the tabular MDPs compared against their closed-form solutions.

The learner runs without intercept or standardization here: the one-hot
features already span the constant, and the closed forms are stated for
raw weights.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import oracle
from .causal import SolverConfig, evaluate_loss, fit_causal_model
from .envs import AliasedMdp, DeterministicMdp, TwoPathMdp, TwoPathMdpConfig
from .rl import ParametricP, UniformRandom, collect_rollouts

TABULAR_SOLVER = SolverConfig(standardize=False, fit_intercept=False, tol=1e-12)
TABULAR_LAMBDA = 1e-4


@dataclasses.dataclass(frozen=True)
class AliasedFit:
    w2: float
    w3: float
    loss_per_visit: float


def fit_aliased(p: float, n_episodes: int = 10_000, seed: int = 0, lam: float = TABULAR_LAMBDA) -> AliasedFit:
    """Fit on episodes of the policy taking a1 with probability ``p`` at o0.

    The per-visit loss is the summed o2/o3 prediction error per episode
    divided by the mean number of o1 visits per episode (exactly one).
    """
    env = AliasedMdp()
    episodes = collect_rollouts(env, ParametricP(p, env), n_episodes, seed=seed)
    model = fit_causal_model(episodes, lam, TABULAR_SOLVER)
    o1, o2, o3 = 1, 2, 3
    visits = np.mean([ep.features[:, o1].sum() for ep in episodes])
    loss = evaluate_loss(model, episodes, rows=[o2, o3]) / visits
    return AliasedFit(float(model.W[o2, o1]), float(model.W[o3, o1]), float(loss))


def fit_two_path(p: float, q=None, n: int = 3, n_episodes: int = 10_000, seed: int = 0,
                 lam: float = TABULAR_LAMBDA) -> tuple:
    """``(w1, w2)`` predicting R from (f1, f2); ``q=None`` uses the uniform random policy."""
    env = TwoPathMdp(TwoPathMdpConfig(n=n, p=p, seed=seed))
    policy = UniformRandom(2) if q is None else ParametricP(q, env)
    episodes = collect_rollouts(env, policy, n_episodes, seed=seed)
    model = fit_causal_model(episodes, lam, TABULAR_SOLVER)
    return float(model.W[2, 0]), float(model.W[2, 1])


def realizable_chain(n_states: int = 6, n_episodes: int = 10_000, seed: int = 0, horizon: int = 20) -> tuple:
    """Fit a random-policy model on a deterministic chain and test it on every deterministic policy.

    Returns ``(all_below_tolerance, worst_loss, n_policies)``.
    """
    env = DeterministicMdp.chain(n_states, horizon)
    episodes = collect_rollouts(env, UniformRandom(env.n_actions), n_episodes, seed=seed)
    cfg = SolverConfig(standardize=False, fit_intercept=True, include_initial=True, tol=1e-13)
    model = fit_causal_model(episodes, 1e-9, cfg)
    worst = 0.0
    policies = list(oracle.deterministic_policies(env.n_states, env.n_actions))
    for k, pol in enumerate(policies):
        eps = collect_rollouts(env, pol, 1, seed=k)
        worst = max(worst, evaluate_loss(model, eps, rows=env.state_rows))
    ok = oracle.realizable_check(env, model, policies, rows=env.state_rows)
    return ok, worst, len(policies)


def oracle_table(n_episodes: int = 10_000, seed: int = 0) -> list:
    """Rows ``(quantity, formula, simulated, tolerance, passed)``."""
    rows = []

    def add(name, formula, simulated, tol):
        rows.append((name, float(formula), float(simulated), tol, abs(formula - simulated) <= tol))

    for p in (0.0, 0.3, 0.5, 1.0):
        fit = fit_aliased(p, n_episodes, seed)
        ref = oracle.fig3_optimal(p)
        add(f"aliased w2 p={p}", ref.w2, fit.w2, 0.05)
        add(f"aliased w3 p={p}", ref.w3, fit.w3, 0.05)
        add(f"aliased loss p={p}", ref.loss_per_visit, fit.loss_per_visit, 0.02)
    grid = oracle.fig3_minimax_grid(0.01)
    add("aliased minimax w2", 0.5, grid.w2, 0.01)
    add("aliased minimax w3", 0.5, grid.w3, 0.01)
    add("aliased minimax loss", 0.5, grid.loss_per_visit, 0.01)
    for p, q in ((0.1, 0.0), (0.1, 1.0), (0.001, 0.1)):
        w1, _ = fit_two_path(p, q, n_episodes=n_episodes, seed=seed)
        add(f"two-path w1 p={p} q={q}", oracle.fig5_optimal(p, q).w1, w1, 0.05)
    for n, p in ((3, 0.001), (10, 0.1)):
        env = TwoPathMdp(TwoPathMdpConfig(n=n, p=p))
        w1, _ = fit_two_path(p, None, n=n, n_episodes=n_episodes, seed=seed)
        add(f"two-path w1 uniform n={n} p={p}", oracle.fig5_optimal(p, env.uniform_arrival_probability()).w1, w1, 0.1)
    ok, worst, _ = realizable_chain(6, n_episodes, seed)
    add("realizable worst-policy loss", 0.0, worst, 1e-6)
    return rows
