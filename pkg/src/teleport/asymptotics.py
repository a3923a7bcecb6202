"""Small-perturbation scaling experiments for Wasserstein distances.

All experiments evaluate ``W_p(mu + eps*nu_plus, mu + eps*nu_minus)`` on a
geometric grid of ``eps`` and summarise the decay by a log-log fit.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from scipy.stats import linregress

from .component_graph import (build_graph, component_charges, label_components,
                              teleport_norm, GraphTransportResult)
from .measures import DiscreteMeasure, SignedMeasure, is_balanced, perturb
from .ot_exact import wasserstein

WORKERS_ENV = "TELEPORT_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _pmap(fn, items) -> list:
    # results come back in input order, so reductions stay deterministic
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class EpsilonGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) < 5:
            raise ValueError("an epsilon grid needs at least 5 points")
        if np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("epsilon values must be positive and strictly decreasing")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def geometric(cls, eps_max: float = 0.1, eps_min: float = 1e-3, ratio: float = 0.6) -> "EpsilonGrid":
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if not 0 < eps_min < eps_max:
            raise ValueError("need 0 < eps_min < eps_max")
        n = int(np.floor(np.log(eps_min / eps_max) / np.log(ratio) + 1e-9)) + 1
        return cls(tuple(eps_max * ratio ** np.arange(n)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return len(self.values)


def predicted_exponent(d: float, p: float) -> tuple[float, bool]:
    """Decay exponent ``min(1, 1/d + 1/p)`` and whether ``p`` sits at the critical value ``d/(d-1)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    q = min(1.0, 1.0 / d + 1.0 / p)
    critical = d > 1 and abs(p - d / (d - 1)) < 1e-12
    return q, bool(critical)


def log_log_fit(x, y, drop_largest: bool = True) -> tuple[float, float]:
    """OLS slope of ``log y`` against ``log x`` and its standard error.

    The point with the largest ``x`` is dropped by default (pre-asymptotic).
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if drop_largest and len(x) > 3:
        keep = np.arange(len(x)) != int(np.argmax(x))
        x, y = x[keep], y[keep]
    if np.any(y <= 0):
        return float("nan"), float("nan")
    fit = linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


def critical_profile(eps, p: float) -> np.ndarray:
    eps = np.asarray(eps, float)
    return eps * np.log(1.0 / eps + 1.0) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class ScalingResult:
    eps: EpsilonGrid
    w: np.ndarray
    q_hat: float
    q_pred: float
    stderr: float
    critical_ratio: np.ndarray
    critical: bool
    p: float
    degenerate: bool = False

    @property
    def scaled(self) -> np.ndarray:
        """``eps^-q * w`` with the predicted exponent."""
        return np.asarray(self.eps) ** (-self.q_pred) * self.w


def _distance_at(eps: float, mu, nu, p, method) -> float:
    a, b = perturb(mu, eps, nu)
    return wasserstein(a, b, p, method)


def scaling_experiment(mu: DiscreteMeasure, nu: SignedMeasure, p: float, grid: EpsilonGrid,
                       d: float | None = None, method: str = "auto",
                       noise_floor: float = 10.0) -> ScalingResult:
    """Evaluate ``W_p(mu + eps nu_+, mu + eps nu_-)`` over the grid and fit its exponent.

    ``d`` is only used for the predicted exponent (defaults to the ambient
    dimension).  The smallest ``eps`` must exceed ``noise_floor`` times the
    heaviest atom of ``mu``.
    """
    if not is_balanced(nu, 1e-10):
        raise ValueError(f"perturbation is not balanced (imbalance {nu.balance:.3e})")
    eps = np.asarray(grid)
    floor = noise_floor * float(mu.weights.max()) if len(mu) else 0.0
    if nu.plus.mass > 0 and eps.min() * nu.plus.mass < floor:
        raise ValueError(
            f"smallest eps {eps.min():.3g} is below the discretization floor {floor:.3g}; "
            "refine the measure or raise eps_min")
    d = float(mu.dim if d is None else d)
    q_pred, critical = predicted_exponent(d, p)
    w = np.array(_pmap(partial(_distance_at, mu=mu, nu=nu, p=p, method=method), eps))
    ratio = w / critical_profile(eps, p)
    if not np.any(w > 0):
        return ScalingResult(grid, w, float("nan"), q_pred, float("nan"), ratio, critical, p, True)
    q_hat, se = log_log_fit(eps, w)
    return ScalingResult(grid, w, q_hat, q_pred, se, ratio, critical, p, False)


@dataclass(frozen=True)
class CriticalReport:
    max_ratio: float
    min_ratio: float
    spread: float
    linear_growth: float  # last / first of w/eps, i.e. drift of the uncorrected ratio


def critical_ratio_check(result: ScalingResult) -> CriticalReport:
    r = np.asarray(result.critical_ratio, float)
    lin = result.w / np.asarray(result.eps)
    hi, lo = float(r.max()), float(r.min())
    spread = hi / lo if lo > 0 else float("inf")
    growth = float(lin[-1] / lin[0]) if lin[0] > 0 else float("nan")
    return CriticalReport(hi, lo, spread, growth)


@dataclass(frozen=True, eq=False)
class TeleportLimitReport:
    eps: EpsilonGrid
    w: np.ndarray
    estimates: np.ndarray
    target: float
    rel_deviation: float
    richardson: float
    richardson_deviation: float
    lower_bounds: np.ndarray
    norm: GraphTransportResult
    m: int


def richardson(e1: float, e2: float, f1: float, f2: float, a: float) -> float:
    """Eliminate the ``c * eps^a`` term from two samples of ``f(eps) = L + c eps^a``."""
    s1, s2 = e1 ** a, e2 ** a
    return (f2 * s1 - f1 * s2) / (s1 - s2)


def teleport_limit_check(mu: DiscreteMeasure, nu: SignedMeasure, p: float, grid: EpsilonGrid,
                         threshold: float, d_within: float = 1.0,
                         method: str = "auto") -> TeleportLimitReport:
    """Compare ``eps^(-1/p) W_p`` against ``||nu||_mu^(1/p)`` on a multi-component measure.

    Richardson extrapolation assumes the error decays like ``eps^(q - 1/p)``
    with ``q`` the exponent inside a single component of dimension ``d_within``.
    """
    labels = label_components(mu, threshold)
    if labels.m < 2:
        raise ValueError("the support is connected at this threshold; use scaling_experiment")
    g = build_graph(mu, labels, p)
    r = teleport_norm(g, component_charges(nu, labels))
    target = r.value ** (1.0 / p)

    eps = np.asarray(grid)
    w = np.array(_pmap(partial(_distance_at, mu=mu, nu=nu, p=p, method=method), eps))
    est = eps ** (-1.0 / p) * w
    # z is constant on components and z_i - z_j <= dist^p, so it is a feasible potential
    lower = np.full(len(eps), max(r.dual_value, 0.0) ** (1.0 / p))

    rel = abs(est[-1] - target) / target if target > 0 else float(est[-1])
    a = predicted_exponent(d_within, p)[0] - 1.0 / p
    if a > 0:
        rich = richardson(eps[-2], eps[-1], est[-2], est[-1], a)
    else:
        rich = float(est[-1])
    rich_dev = abs(rich - target) / target if target > 0 else abs(rich)
    return TeleportLimitReport(grid, w, est, target, float(rel), float(rich), float(rich_dev),
                               lower, r, labels.m)


@dataclass(frozen=True)
class LinearMass:
    """``m(t) = m0 + slope * t``; a plain class so curves can be sent to worker processes."""

    m0: float
    slope: float

    def __call__(self, t: float) -> float:
        return self.m0 + self.slope * t


@dataclass(frozen=True, eq=False)
class CurveExperiment:
    """Curve ``t -> m(t) delta_x0 + (1 - m(t)) delta_x1 + background`` on a t-grid.

    Distances are taken between ``t`` and ``t + h`` for dyadic gaps ``h``; the
    largest distance over base points is kept for each gap.
    """

    t_grid: np.ndarray
    m: Callable[[float], float]
    x0: float
    x1: float
    background: DiscreteMeasure | None = None
    gaps: tuple[float, ...] = tuple(2.0 ** -k for k in range(2, 11))

    def at(self, t: float) -> DiscreteMeasure:
        mt = float(self.m(t))
        if not 0 < mt < 1:
            raise ValueError(f"m({t}) = {mt} leaves (0, 1)")
        pts = DiscreteMeasure(np.array([[self.x0], [self.x1]]), [mt, 1.0 - mt])
        return pts if self.background is None else pts + self.background


@dataclass(frozen=True, eq=False)
class CurveResult:
    gaps: np.ndarray
    distances: np.ndarray
    exponent: float
    stderr: float
    degenerate: bool


def _curve_gap(h: float, spec: CurveExperiment, p: float) -> float:
    best = 0.0
    for t in spec.t_grid:
        if t + h > spec.t_grid[-1] + 1e-12:
            break
        best = max(best, wasserstein(spec.at(t), spec.at(t + h), p))
    return best


def curve_holder_experiment(spec: CurveExperiment, p: float) -> CurveResult:
    gaps = np.asarray(spec.gaps, float)
    dist = np.array(_pmap(partial(_curve_gap, spec=spec, p=p), gaps))
    if not np.any(dist > 0):
        return CurveResult(gaps, dist, float("nan"), float("nan"), True)
    expo, se = log_log_fit(gaps, dist)
    return CurveResult(gaps, dist, expo, se, False)
