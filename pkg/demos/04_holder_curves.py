"""Curves of measures: trading mass between two points.

t -> m(t) delta_0 + (1 - m(t)) delta_1 is only 1/p-Holder in W_p: a small
change of m forces a jump of length 1.  Adding a uniform background on [0, 1]
connects the two points, and the same curve becomes Lipschitz.
"""

import numpy as np

from teleport import CurveExperiment, DensitySpec, curve_holder_experiment, discretize
from teleport.asymptotics import LinearMass

t = np.linspace(0, 0.5, 6)
m = LinearMass(0.3, 0.4)
for p in (2.0, 3.0):
    bare = curve_holder_experiment(CurveExperiment(t, m, 0.0, 1.0), p)
    print(f"p={p:g} two Diracs only: exponent {bare.exponent:.4f} (1/p = {1 / p:.4f})")

background = discretize(DensitySpec("uniform-interval"), 100_000)
r = curve_holder_experiment(CurveExperiment(t, m, 0.0, 1.0, background), 2.0)
print(f"p=2 with uniform background: exponent {r.exponent:.4f}")
for h, w in zip(r.gaps, r.distances):
    print(f"  gap {h:.5f}  W_2 {w:.3e}")
