"""How fast does W_p(mu + eps nu_+, mu + eps nu_-) vanish?

For a d-connected mu the distance decays like eps^q with q = min(1, 1/d + 1/p).
The profile s^(d-1) (1-s)^(d-1) on [0, 1] is d-connected although it lives on
the line, so the exact quantile formula lets us run at very fine resolution.
At p = d/(d-1) the rate picks up a logarithm; the critical ratio
w / (eps ln^(1/p)(1/eps + 1)) stays flat while w / eps keeps drifting up.
"""

import numpy as np

from teleport import (DensitySpec, DiscreteMeasure, EpsilonGrid, SignedMeasure, critical_ratio_check,
                      discretize, predicted_exponent, scaling_experiment)

grid = EpsilonGrid.geometric(0.1, 1e-3, 0.6)

for d, p in [(1, 2.0), (1, 3.0), (3, 2.0), (2, 2.0)]:
    mu = discretize(DensitySpec("beta-profile", {"d": float(d)}), 200_000)
    nu = SignedMeasure(DiscreteMeasure.dirac(mu.points[0]), DiscreteMeasure.dirac(mu.points[-1]))
    r = scaling_experiment(mu, nu, p, grid, d=d)
    q, critical = predicted_exponent(d, p)
    line = f"d={d} p={p:g}: fitted {r.q_hat:.4f} +- {r.stderr:.4f}, predicted {q:.4f}"
    if critical:
        c = critical_ratio_check(r)
        line += f"  [critical: ratio spread {c.spread:.2f}, w/eps grows x{c.linear_growth:.2f}]"
    print(line)

print("\neps        w          eps^-q w")
for e, w, s in zip(np.asarray(r.eps), r.w, r.scaled):
    print(f"{e:.3e}  {w:.4e}  {s:.4f}")
