"""How the best predictor on an aliased observation depends on the policy.

From o1 the agent lands in o2 or o3 depending on what it did at o0, which
the learner cannot see. Fitting on data from different policies gives
different weights; the closed form is printed next to each fit.

    python demos/aliased_policy_dependence.py
"""

from interventionlab import oracle
from interventionlab.checks import fit_aliased

print(f"{'p':>5} {'w2':>7} {'w3':>7} {'loss':>7}   closed form")
for p in (0.0, 0.1, 0.3, 0.5, 0.7, 1.0):
    fit = fit_aliased(p, n_episodes=5000)
    ref = oracle.fig3_optimal(p)
    print(f"{p:5.1f} {fit.w2:7.3f} {fit.w3:7.3f} {fit.loss_per_visit:7.3f}   "
          f"({ref.w2:.2f}, {ref.w3:.2f}, {ref.loss_per_visit:.2f})")

mm = oracle.fig3_minimax_grid()
print(f"\nweights that are safest over every policy: w2={mm.w2:.2f} w3={mm.w3:.2f}, worst loss {mm.loss_per_visit:.2f}")
