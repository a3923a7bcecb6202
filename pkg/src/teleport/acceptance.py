"""Reproducible acceptance suite.

Each ``criterion_k(seed)`` returns a :class:`Verdict`.  LP solves made by any
criterion are collected in :data:`SOLVE_RECORDS` so that the duality check
(criterion 2) can certify every solve of the suite, not just its own.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .asymptotics import (CurveExperiment, EpsilonGrid, LinearMass, critical_ratio_check,
                          curve_holder_experiment, predicted_exponent, scaling_experiment,
                          teleport_limit_check)
from .component_graph import (build_graph, build_teleport_plan, component_charges,
                              label_components, teleport_norm, GraphCharges)
from .measures import DensitySpec, DiscreteMeasure, SignedMeasure, discretize
from .ot_exact import (GAP_RTOL, solve_log, wasserstein, wasserstein_1d, wasserstein_p)

DEFAULT_SEED = 42
SOLVE_RECORDS: list[dict] = []


@dataclass(frozen=True)
class Verdict:
    criterion: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.criterion:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(criterion: int, name: str):
    def wrap(fn):
        def run(seed: int = DEFAULT_SEED) -> Verdict:
            t0 = time.perf_counter()
            with solve_log() as log:
                passed, detail = fn(np.random.default_rng(seed))
            SOLVE_RECORDS.extend(log)
            return Verdict(criterion, name, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def random_measure(rng, n: int, dim: int = 1, mass: float = 1.0, spread: float = 1.0) -> DiscreteMeasure:
    w = rng.random(n) + 0.05
    return DiscreteMeasure(rng.random((n, dim)) * spread, mass * w / w.sum())


def dipole_on(mu: DiscreteMeasure, x_plus, x_minus, mass: float = 1.0) -> SignedMeasure:
    """Dipole whose poles are the atoms of ``mu`` nearest the requested points."""
    return SignedMeasure(DiscreteMeasure.dirac(mu.points[mu.nearest_atom(x_plus)], mass),
                         DiscreteMeasure.dirac(mu.points[mu.nearest_atom(x_minus)], mass))


def endpoint_dipole(mu: DiscreteMeasure) -> SignedMeasure:
    return SignedMeasure(DiscreteMeasure.dirac(mu.points[0]), DiscreteMeasure.dirac(mu.points[-1]))


def two_component(resolution: int) -> DiscreteMeasure:
    """Half the uniform law on [0, 1] plus half on [2, 3]."""
    return discretize(DensitySpec("two-component"), resolution)


def three_component(resolution: int) -> DiscreteMeasure:
    """Segments [-1,0]x{0}, {1}x[-1/2,1/2], [2,3]x{0}, each of mass 1/3.

    The outer segments are 2 apart but each is 1 from the middle one, so for
    p = 2 the geodesic between them (1 + 1) beats the direct edge (4).
    """
    parts = [((-1.0, 0.0), (0.0, 0.0)), ((1.0, -0.5), (1.0, 0.5)), ((2.0, 0.0), (3.0, 0.0))]
    out = DiscreteMeasure.empty(2)
    for lo, hi in parts:
        out = out + discretize(DensitySpec("uniform-box", {"lo": lo, "hi": hi, "mass": 1 / 3}), resolution)
    return out


# --------------------------------------------------------------------------- criteria


@_timed(1, "1D oracle equivalence")
def criterion_1(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p = float(rng.choice([1.5, 2.0, 3.0]))
        a = random_measure(rng, int(rng.integers(1, 201)))
        b = random_measure(rng, int(rng.integers(1, 201)))
        worst = max(worst, abs(wasserstein_p(a, b, p).value - wasserstein_1d(a, b, p)))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-9 and elapsed < 60, f"max |LP - quantile| = {worst:.2e}, {elapsed:.1f}s for 200 instances"


@_timed(3, "monotone additivity")
def criterion_3(rng):
    worst = -np.inf
    for _ in range(50):
        dim = int(rng.integers(1, 3))
        mass = float(rng.uniform(0.5, 2.0))
        a = random_measure(rng, int(rng.integers(2, 60)), dim, mass)
        b = random_measure(rng, int(rng.integers(2, 60)), dim, mass)
        lam = random_measure(rng, int(rng.integers(1, 60)), dim, float(rng.uniform(0.1, 3.0)))
        p = float(rng.choice([1.5, 2.0, 3.0]))
        lhs = wasserstein(a, b, p, "lp")
        rhs = wasserstein(a + lam, b + lam, p, "lp")
        worst = max(worst, rhs - lhs)
    return worst <= 1e-9, f"max W(a+l,b+l) - W(a,b) = {worst:.2e} over 50 triples"


@_timed(4, "homogeneity")
def criterion_4(rng):
    worst = 0.0
    for _ in range(10):
        dim = int(rng.integers(1, 3))
        a = random_measure(rng, int(rng.integers(2, 80)), dim)
        b = random_measure(rng, int(rng.integers(2, 80)), dim)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        base = wasserstein(a, b, p, "lp")
        for alpha in (0.5, 2.0, 10.0):
            scaled = wasserstein(a.scale(alpha), b.scale(alpha), p, "lp")
            worst = max(worst, abs(scaled - alpha ** (1 / p) * base) / (alpha ** (1 / p) * base))
    return worst <= 1e-8, f"max relative error {worst:.2e} for alpha in {{0.5, 2, 10}}"


EXPONENT_CASES = ((1, 2.0), (1, 3.0), (3, 2.0))


def exponent_case(d: int, p: float, resolution: int = 200_000):
    """Scaling run on the 1D profile ``s^(d-1) (1-s)^(d-1)``, a d-connected measure."""
    mu = discretize(DensitySpec("beta-profile", {"d": float(d)}), resolution)
    return scaling_experiment(mu, endpoint_dipole(mu), p, EpsilonGrid.geometric(), d=d)


@_timed(5, "exponent recovery")
def criterion_5(rng):
    ok, parts = True, []
    for d, p in EXPONENT_CASES:
        t0 = time.perf_counter()
        r = exponent_case(d, p)
        q, _ = predicted_exponent(d, p)
        good = abs(r.q_hat - q) <= 0.05 and time.perf_counter() - t0 < 600
        ok &= good
        parts.append(f"(d={d}, p={p:g}) q_hat={r.q_hat:.4f} vs {q:.4f}")
    return ok, "; ".join(parts)


@_timed(6, "critical regime")
def criterion_6(rng):
    r = exponent_case(2, 2.0)
    rep = critical_ratio_check(r)
    ok = r.critical and rep.spread < 3 and rep.linear_growth > 1.3
    return ok, f"spread {rep.spread:.3f} (< 3), w/eps grows x{rep.linear_growth:.3f} (> 1.3)"


@_timed(7, "teleportation limit")
def criterion_7(rng):
    mu = two_component(20_000)
    rep2 = teleport_limit_check(mu, dipole_on(mu, [0.5], [2.5]), 2.0, EpsilonGrid.geometric(), 0.1)
    mu3 = three_component(400)
    nu3 = dipole_on(mu3, [-0.5, 0.0], [2.5, 0.0])
    rep3 = teleport_limit_check(mu3, nu3, 2.0, EpsilonGrid.geometric(0.1, 0.01), 0.1)
    geo = rep3.norm.value
    ok = (rep2.rel_deviation <= 0.05 and rep2.richardson_deviation <= 0.02
          and abs(geo - 2.0) < 0.05 and abs(rep3.estimates[-1] - np.sqrt(2.0)) / np.sqrt(2.0) <= 0.05
          and np.all(rep2.estimates >= rep2.lower_bounds - 1e-9)
          and np.all(rep3.estimates >= rep3.lower_bounds - 1e-9))
    return ok, (f"two-component dev {rep2.rel_deviation:.2%}, Richardson {rep2.richardson_deviation:.2%}; "
                f"three-component norm {geo:.4f} (direct edge {rep3_direct(mu3):.4f}), "
                f"estimate {rep3.estimates[-1]:.4f} vs sqrt(2)")


def rep3_direct(mu3: DiscreteMeasure) -> float:
    lab = label_components(mu3, 0.1)
    return float(build_graph(mu3, lab, 2.0).edge_len[0, 2])


def random_graph_instance(rng):
    m = int(rng.integers(2, 13))
    dim = int(rng.integers(1, 4))
    pts = rng.random((m, dim)) * 10
    mu = DiscreteMeasure(pts, np.full(m, 1.0 / m))
    p = float(rng.choice([1.5, 2.0, 3.0]))
    g = build_graph(mu, label_components(mu, 1e-9), p)
    nz = rng.random(m) < 0.7
    nz[rng.choice(m, 2, replace=False)] = True
    charges = np.where(nz, rng.normal(size=m), 0.0)
    charges[nz] -= charges[nz].mean()
    return g, GraphCharges(charges)


@_timed(8, "graph LP exactness")
def criterion_8(rng):
    worst_gap = worst_kirch = worst_marg = 0.0
    for _ in range(100):
        g, c = random_graph_instance(rng)
        r = teleport_norm(g, c)
        worst_gap = max(worst_gap, r.gap)
        worst_kirch = max(worst_kirch, float(np.abs(r.kirchhoff_residual()).max()))
        lam = r.lambda_star
        marg = max(float(np.abs(lam.sum(1) - c.nu_bar[r.V_plus]).max(initial=0)),
                   float(np.abs(lam.sum(0) + c.nu_bar[r.V_minus]).max(initial=0)))
        worst_marg = max(worst_marg, marg)
    ok = worst_gap <= 1e-9 and worst_kirch <= 1e-10 and worst_marg <= 1e-10
    return ok, f"max |primal - dual| {worst_gap:.1e}, Kirchhoff {worst_kirch:.1e}, marginals {worst_marg:.1e}"


@_timed(9, "explicit plan")
def criterion_9(rng):
    mu = two_component(1000)
    lab = label_components(mu, 0.1)
    g = build_graph(mu, lab, 2.0)
    r = teleport_norm(g, component_charges(dipole_on(mu, [0.5], [2.5]), lab))
    eps_list = EpsilonGrid.geometric(0.1, 0.01).values
    upper_ok = True
    for eps in eps_list:
        target, plan = build_teleport_plan(mu, lab, g, r, eps)
        lp = wasserstein_p(target, mu, 2.0).plan.cost
        upper_ok &= lp <= plan.cost + 1e-12 * (1 + plan.cost)
    ratio = plan.cost / eps_list[-1] / r.value
    ok = abs(ratio - 1) <= 0.10 and upper_ok
    return ok, f"plan cost/eps = {ratio:.4f} x norm at eps={eps_list[-1]:.3g}; LP <= plan at all eps: {upper_ok}"


@_timed(10, "curve exponents")
def criterion_10(rng):
    t_grid = np.linspace(0.0, 0.5, 6)
    m = LinearMass(0.3, 0.4)
    pure = curve_holder_experiment(CurveExperiment(t_grid, m, 0.0, 1.0), 2.0)
    bg = discretize(DensitySpec("uniform-interval"), 100_000)
    back = curve_holder_experiment(CurveExperiment(t_grid, m, 0.0, 1.0, bg), 2.0)
    ok = abs(pure.exponent - 0.5) <= 0.05 and abs(back.exponent - 1.0) <= 0.05
    return ok, f"two-Dirac exponent {pure.exponent:.4f} (1/p = 0.5), with background {back.exponent:.4f} (1)"


@_timed(2, "duality certification")
def criterion_2(rng):
    # a batch of multi-dimensional solves, part of them forced onto the column-generation path
    for k in range(20):
        dim = int(rng.integers(1, 4))
        a = random_measure(rng, int(rng.integers(5, 150)), dim)
        b = random_measure(rng, int(rng.integers(5, 150)), dim)
        wasserstein_p(a, b, float(rng.choice([1.5, 2.0, 3.0])), dense_limit=0 if k % 2 else 10**9)
    return True, ""


def check_records(records) -> tuple[bool, str]:
    if not records:
        return False, "no LP solves recorded"
    worst = max(r["gap"] / (1 + r["cost"]) for r in records)
    viol = max(r["violation"] / (1 + r["cost"]) for r in records)
    ok = worst <= GAP_RTOL and viol <= 1e-9
    return ok, f"{len(records)} LP solves, max gap/(1+cost) {worst:.1e}, max dual violation {viol:.1e}"


def run_criterion_2(seed: int = DEFAULT_SEED) -> Verdict:
    own = criterion_2(seed)
    ok, detail = check_records(SOLVE_RECORDS)
    return Verdict(2, own.name, ok, detail, own.seconds)


ORDER = (1, 3, 4, 5, 6, 7, 8, 9, 10, 2)
CRITERIA = {1: criterion_1, 2: run_criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_suite(seed: int = DEFAULT_SEED, only=None) -> list[Verdict]:
    """Run the criteria (duality last, so it sees every solve) and return verdicts in numeric order."""
    SOLVE_RECORDS.clear()
    out = [CRITERIA[k](seed) for k in ORDER if only is None or k in only]
    return sorted(out, key=lambda v: v.criterion)
