"""Two coupled units: BO and BP both land on the exact marginals.

    python3 demos/two_node.py
"""
import numpy as np

from beliefopt import Model, bp_solve, brute_force, solve_gradient

model = Model(2, [(0, 1, 1.0)], [0.0, 0.0])
exact = brute_force(model)
print(f"exact   q={exact.q.round(7)} xi={exact.xi.round(7)} -lnZ={-exact.log_z:.9f}")
for name, solve in (("bo-grad", solve_gradient), ("bp", bp_solve)):
    b, r = solve(model)
    print(f"{name:<7} q={b.q.round(7)} xi={b.xi.round(7)} F={r.final_free_energy:.9f} "
          f"iters={r.iterations} converged={r.converged}")
print("closed form q =", round((1 + np.e) / (3 + np.e), 7))
