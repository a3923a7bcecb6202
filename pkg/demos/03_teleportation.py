"""Disconnected supports: mass has to jump between components.

When supp(mu) splits into pieces, moving eps of mass from one piece to another
costs about eps * (distance)^p, so W_p ~ eps^(1/p) and the rescaled distance
eps^(-1/p) W_p tends to ||nu||_mu^(1/p), the cost of routing the net
component charges over the graph of components.  Routes may pass through
intermediate components when that is cheaper than the direct jump.
"""

import numpy as np

from teleport import (DensitySpec, DiscreteMeasure, EpsilonGrid, SignedMeasure, build_graph,
                      build_teleport_plan, component_charges, discretize, label_components,
                      teleport_limit_check, teleport_norm, wasserstein_p)

# three segments in the plane; the outer ones are 2 apart, each 1 from the middle one
segments = [((-1.0, 0.0), (0.0, 0.0)), ((1.0, -0.5), (1.0, 0.5)), ((2.0, 0.0), (3.0, 0.0))]
mu = DiscreteMeasure.empty(2)
for lo, hi in segments:
    mu = mu + discretize(DensitySpec("uniform-box", {"lo": lo, "hi": hi, "mass": 1 / 3}), 300)
nu = SignedMeasure(DiscreteMeasure.dirac(mu.points[mu.nearest_atom([-0.5, 0])]),
                   DiscreteMeasure.dirac(mu.points[mu.nearest_atom([2.5, 0])]))

labels = label_components(mu, 0.1)
g = build_graph(mu, labels, 2.0)
r = teleport_norm(g, component_charges(nu, labels))
print(f"{labels.m} components")
print("edge lengths |E|:\n", np.round(g.edge_len, 4))
print("geodesic lengths:\n", np.round(g.geo_len, 4))
print(f"||nu||_mu = {r.value:.4f}, fluxes {r.edge_flux}, dual potentials {np.round(r.dual_z, 4)}")

rep = teleport_limit_check(mu, nu, 2.0, EpsilonGrid.geometric(0.1, 0.01), 0.1)
print("\neps      eps^-1/2 W_2   target", f"{rep.target:.4f}")
for e, est in zip(np.asarray(rep.eps), rep.estimates):
    print(f"{e:.4f}   {est:.4f}")

# an explicit plan: drop eps*flux next to each neighbour and pull it from a small ball
for eps in (0.05, 0.01):
    target, plan = build_teleport_plan(mu, labels, g, r, eps)
    print(f"eps={eps}: plan cost/eps {plan.cost / eps:.4f}, optimal {wasserstein_p(target, mu, 2.0).plan.cost / eps:.4f}")
