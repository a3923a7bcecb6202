"""Exact discrete optimal transport, component graphs and small-perturbation scaling."""

from .measures import (DensitySpec, DiscreteMeasure, SignedMeasure, check_ahlfors, discretize,
                       is_balanced, jordan_decompose, perturb, restrict, total_mass)
from .ot_exact import (DualPotentials, OTResult, SolverError, TransportPlan, solve_log, wasserstein,
                       wasserstein_1d, wasserstein_p)
from .component_graph import (ComponentGraph, ComponentLabeling, GraphCharges, GraphTransportResult,
                              build_graph, build_teleport_plan, component_charges, label_components,
                              teleport_norm)
from .asymptotics import (CurveExperiment, EpsilonGrid, ScalingResult, critical_ratio_check,
                          curve_holder_experiment, predicted_exponent, scaling_experiment,
                          teleport_limit_check)

__version__ = "0.1.0"
