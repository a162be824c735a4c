"""A spurious keys -> health edge, and how loss-driven interventions remove it.

In the Fixed B layout an agent trained on the game reward always picks up
the key before eating, so the learner attributes health to the key. Agents
rewarded for the current model's prediction error eventually eat without
the key and the edge disappears.

    python demos/spurious_key_health.py [n_seeds]
"""

import sys
from pathlib import Path

from interventionlab import harness

configs = Path(__file__).parent / "configs"
n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3

for name in ("b_none_0", "b_loss_5", "b_loss_20"):
    cfg = harness.ExperimentConfig.from_json_file(configs / f"{name}.json")
    reports = harness.run_sweep([cfg], range(n_seeds))
    spurious = sum(harness.key_health_edge(r.final_graph) for r in reports)
    eps = ["inf" if r.episodes_to_true_graph is None else r.episodes_to_true_graph for r in reports]
    print(f"{name:10s} episodes to true graph {eps}  keys->health kept in {spurious}/{n_seeds}")

last = reports[-1]
print("\nhealth parents after the last loss-driven run:", last.final_graph.parents("health"))
