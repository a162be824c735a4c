"""The three intervention rewards designed from one fitted model.

Collects random episodes in environment B, fits the model and an ensemble,
then shows which edge / node would be targeted and what each reward pays
on a few random steps.

    python demos/intervention_rewards.py
"""

import numpy as np

from interventionlab import interventions as iv
from interventionlab.causal import edge_uncertainty, ensemble_fit, fit_causal_model, threshold_graph
from interventionlab.envs import KEYCHEST_NAMES, make_env
from interventionlab.rl import UniformRandom, collect_rollouts

env = make_env("B")
episodes = collect_rollouts(env, UniformRandom(env.n_actions), 500, seed=0)
model = fit_causal_model(episodes, 0.01, feature_names=KEYCHEST_NAMES)
graph = threshold_graph(model, 0.5)
unc = edge_uncertainty(ensemble_fit(episodes, 5, 0.5, 0.01, seed=1, feature_names=KEYCHEST_NAMES))
print("edges (child <- parent):", [(KEYCHEST_NAMES[c], KEYCHEST_NAMES[p]) for c, p in graph.edges()])

sel = iv.SelectionState(iv.Strategy.WEIGHTED)
parent, child, sign = iv.select_edge(graph, unc, sel, rng_seed=2)
print(f"edge target: {KEYCHEST_NAMES[parent]} -> {KEYCHEST_NAMES[child]} (sign {sign:+d})")

spec = env.feature_spec
i, x = iv.select_node(graph, unc, sel, 3, spec.min_val, spec.max_val)
print(f"node target: drive {KEYCHEST_NAMES[i]} to {x}")

rewards = {
    "edge": iv.EdgeReward(parent, child, sign),
    "node": iv.NodeReward(i, x, baseline_stats=iv.compute_feature_stats(episodes)),
    "loss": iv.LossReward(model),
}
ep = episodes[np.argmax([len(e) for e in episodes])]
for name, reward in rewards.items():
    print(f"{name:5s}", np.round(reward.episode_rewards(ep.features, ep.rewards)[:8], 3))
