"""Exact W_p on small point clouds, and why the line is special.

On the real line the optimal coupling is the monotone rearrangement, so W_p
has a closed form through quantile functions.  In higher dimension we solve
the transportation LP and keep the dual potentials as an optimality
certificate.
"""

import numpy as np

from teleport import DiscreteMeasure, wasserstein_1d, wasserstein_p

rng = np.random.default_rng(0)

# two random measures on the line: LP and quantile formula must agree
a = DiscreteMeasure(rng.random((40, 1)), rng.random(40) + 0.1)
b = DiscreteMeasure(rng.random((55, 1)) + 0.3, rng.random(55) + 0.1)
b = b.scale(a.mass / b.mass)
lp = wasserstein_p(a, b, 2.0)
print(f"line: LP {lp.value:.15f}  quantile {wasserstein_1d(a, b, 2.0):.15f}")
print(f"      plan uses {len(lp.plan)} of {len(a) * len(b)} pairs, duality gap {lp.gap:.1e}")

# in the plane the duals certify the plan: phi_i - psi_j <= |x_i - y_j|^p everywhere,
# with equality wherever the plan moves mass
x = DiscreteMeasure(rng.random((300, 2)), np.ones(300))
y = DiscreteMeasure(rng.random((250, 2)) * [2, 1], np.full(250, 300 / 250))
res = wasserstein_p(x, y, 3.0)
print(f"plane: W_3 = {res.value:.6f}")
print(f"       worst dual violation {res.duals.max_violation(x, res.plan.target):.1e}, "
      f"slackness {res.duals.slackness_error(res.plan):.1e}")

# adding a common measure never increases the distance
lam = DiscreteMeasure(rng.random((100, 2)), np.full(100, 5.0))
print(f"with a common background: {wasserstein_p(x + lam, y + lam, 3.0).value:.6f} <= {res.value:.6f}")
