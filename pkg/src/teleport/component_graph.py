"""Metric graph of the connected components of a discrete support.

Vertices are components of ``supp(mu)``; the edge between two components
has length ``dist(A_i, A_j)^p``.  Transport of the per-component charges of
a signed measure over the geodesic closure of this graph gives the
teleportation cost ``||nu||_mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .measures import DiscreteMeasure, SignedMeasure
from .ot_exact import SolverError, TransportPlan

CHARGE_TOL = 1e-12
_TIE_RTOL = 1e-12
_LP_OPTIONS = dict(primal_feasibility_tolerance=1e-10, dual_feasibility_tolerance=1e-10)


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    """Single-linkage labels of the atoms of ``measure`` at linkage distance ``threshold``."""

    label: np.ndarray
    m: int
    threshold: float
    measure: DiscreteMeasure

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.label == j)

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Component of each point, by its nearest labeled atom within ``threshold``."""
        dist, idx = cKDTree(self.measure.points).query(np.atleast_2d(points))
        if np.any(dist > self.threshold):
            bad = int(np.argmax(dist))
            raise ValueError(
                f"point {np.atleast_2d(points)[bad].tolist()} is {dist[bad]:.3g} from the support, "
                f"beyond threshold {self.threshold}")
        return self.label[idx]


def label_components(m: DiscreteMeasure, threshold: float) -> ComponentLabeling:
    """Connected components of the graph joining atoms at distance <= threshold.

    Labels are numbered in order of each component's smallest atom index.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    n = len(m)
    pairs = cKDTree(m.points).query_pairs(threshold, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else
                       (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))), shape=(n, n))
    count, raw = connected_components(graph, directed=False)
    first = np.full(count, n)
    np.minimum.at(first, raw, np.arange(n))
    relabel = np.empty(count, dtype=int)
    relabel[np.argsort(first)] = np.arange(count)
    return ComponentLabeling(relabel[raw], int(count), float(threshold), m)


@dataclass(frozen=True, eq=False)
class ComponentGraph:
    """Complete graph on the components with raw and geodesic edge lengths.

    ``closest[i, j]`` is the index (into the measure) of the atom of ``A_i``
    nearest to ``A_j``.  ``pred[i, j]`` is the vertex preceding ``j`` on the
    chosen shortest path from ``i``.
    """

    m: int
    p: float
    edge_len: np.ndarray
    geo_len: np.ndarray
    closest: np.ndarray
    pred: np.ndarray
    labels: ComponentLabeling

    def path(self, i: int, j: int) -> list[int]:
        """Vertex sequence of the chosen geodesic from i to j."""
        seq = [j]
        while seq[-1] != i:
            seq.append(int(self.pred[i, seq[-1]]))
        return seq[::-1]


def _closest_pair(xa: np.ndarray, xb: np.ndarray) -> tuple[int, int, float]:
    best = (0, 0, np.inf)
    step = max(1, (1 << 22) // max(len(xb), 1))
    for s in range(0, len(xa), step):
        d = cdist(xa[s:s + step], xb)
        k = int(np.argmin(d))
        r, c = divmod(k, d.shape[1])
        if d[r, c] < best[2]:
            best = (s + r, c, float(d[r, c]))
    return best


def geodesic_closure(edge_len: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs shortest paths with a deterministic predecessor choice.

    Among vertices ``k`` with ``geo[i, k] + edge[k, j] == geo[i, j]`` the
    smallest index is kept as ``pred[i, j]`` (``k = i`` meaning the direct edge).
    """
    geo = np.array(edge_len, dtype=float)
    m = len(geo)
    for k in range(m):
        geo = np.minimum(geo, geo[:, k:k + 1] + geo[k:k + 1, :])
    pred = np.full((m, m), -1, dtype=int)
    for i in range(m):
        for j in range(m):
            if i == j:
                pred[i, j] = i
                continue
            via = geo[i, :] + edge_len[:, j]
            # only genuine predecessors: strictly closer to i than j is
            ok = (np.abs(via - geo[i, j]) <= _TIE_RTOL * max(geo[i, j], 1e-300)) & (geo[i, :] < geo[i, j])
            ok[j] = False
            pred[i, j] = int(np.flatnonzero(ok)[0])
    return geo, pred


def build_graph(m: DiscreteMeasure, labels: ComponentLabeling, p: float) -> ComponentGraph:
    if len(labels.label) != len(m):
        raise ValueError("labeling does not match the measure")
    k = labels.m
    edge = np.zeros((k, k))
    closest = np.tile(np.arange(k)[:, None], (1, k))
    members = [labels.members(j) for j in range(k)]
    for i in range(k):
        closest[i, i] = members[i][0]
        for j in range(i + 1, k):
            a, b, d = _closest_pair(m.points[members[i]], m.points[members[j]])
            edge[i, j] = edge[j, i] = d ** p
            closest[i, j] = members[i][a]
            closest[j, i] = members[j][b]
    geo, pred = geodesic_closure(edge)
    return ComponentGraph(k, float(p), edge, geo, closest, pred, labels)


@dataclass(frozen=True, eq=False)
class GraphCharges:
    nu_bar: np.ndarray

    @property
    def V_plus(self) -> np.ndarray:
        return np.flatnonzero(self.nu_bar > CHARGE_TOL)

    @property
    def V_minus(self) -> np.ndarray:
        return np.flatnonzero(self.nu_bar < -CHARGE_TOL)

    def is_balanced(self, tol: float = CHARGE_TOL) -> bool:
        return abs(float(self.nu_bar.sum())) <= tol * max(1.0, float(np.abs(self.nu_bar).sum()))


def component_charges(nu: SignedMeasure, labels: ComponentLabeling) -> GraphCharges:
    """Net signed mass of ``nu`` in each component."""
    nu_bar = np.zeros(labels.m)
    for part, sign in ((nu.plus, 1.0), (nu.minus, -1.0)):
        if len(part):
            np.add.at(nu_bar, labels.assign(part.points), sign * part.weights)
    # exact cancellation inside a component should read as zero charge
    scale = max(nu.total_variation, 1e-300)
    nu_bar[np.abs(nu_bar) <= CHARGE_TOL * scale] = 0.0
    return GraphCharges(nu_bar)


@dataclass(frozen=True, eq=False)
class GraphTransportResult:
    """Optimal routing of component charges over the geodesic graph.

    ``lambda_star[a, b]`` is the mass sent from ``V_plus[a]`` to
    ``V_minus[b]``.  ``edge_flux`` maps a directed edge ``(k, l)`` to the
    total mass traversing it once each route is expanded into its geodesic.
    ``dual_z`` is a Kantorovich-Rubinstein potential on every vertex.
    """

    lambda_star: np.ndarray
    value: float
    dual_value: float
    edge_flux: dict[tuple[int, int], float]
    dual_z: np.ndarray
    V_plus: np.ndarray
    V_minus: np.ndarray
    charges: GraphCharges = field(repr=False)

    @property
    def gap(self) -> float:
        return abs(self.value - self.dual_value)

    def kirchhoff_residual(self) -> np.ndarray:
        """Outflow minus inflow minus charge, per vertex (zero for a valid flux)."""
        r = -self.charges.nu_bar.copy()
        for (k, l), f in self.edge_flux.items():
            r[k] += f
            r[l] -= f
        return r

    def throughflow(self) -> np.ndarray:
        """Total mass entering each vertex along graph edges."""
        t = np.zeros(len(self.charges.nu_bar))
        for (_, l), f in self.edge_flux.items():
            t[l] += f
        return t


def teleport_norm(g: ComponentGraph, c: GraphCharges) -> GraphTransportResult:
    """Solve the charge transportation problem and its discrete KR dual.

    The primal is the transportation LP between positive and negative
    charges with costs ``geo_len``; the dual ``max sum z_i nu_i`` subject to
    ``z_i - z_j <= geo_len[i, j]`` is solved as a separate LP and the two
    optimal values are required to agree.
    """
    if len(c.nu_bar) != g.m:
        raise ValueError("charges do not match the graph")
    if not c.is_balanced():
        raise ValueError(f"charges are unbalanced (sum {c.nu_bar.sum():.3e})")
    vp, vm = c.V_plus, c.V_minus
    if len(vp) == 0 or len(vm) == 0:
        return GraphTransportResult(np.zeros((len(vp), len(vm))), 0.0, 0.0, {}, np.zeros(g.m),
                                    vp, vm, c)
    supply = c.nu_bar[vp]
    demand = -c.nu_bar[vm]
    demand = demand * (supply.sum() / demand.sum())
    lam = _transport_lp(g.geo_len[np.ix_(vp, vm)], supply, demand)
    value = float(np.sum(lam * g.geo_len[np.ix_(vp, vm)]))
    z, dual_value = _kr_dual(g.geo_len, c.nu_bar)
    if abs(value - dual_value) > 1e-9 * (1.0 + value):
        raise SolverError(f"teleport primal {value!r} and dual {dual_value!r} disagree")

    flux: dict[tuple[int, int], float] = {}
    for a, i in enumerate(vp):
        for b, j in enumerate(vm):
            if lam[a, b] <= 0:
                continue
            route = g.path(int(i), int(j))
            for k, l in zip(route[:-1], route[1:]):
                flux[(k, l)] = flux.get((k, l), 0.0) + float(lam[a, b])
    return GraphTransportResult(lam, value, dual_value, flux, z, vp, vm, c)


def _transport_lp(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> np.ndarray:
    r, s = cost.shape
    rows = np.repeat(np.arange(r), s)
    cols = np.tile(np.arange(s), r)
    A = np.zeros((r + s, r * s))
    A[rows, np.arange(r * s)] = 1.0
    A[r + cols, np.arange(r * s)] = 1.0
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([supply, demand]),
                  bounds=(0, None), method="highs-ds", options=_LP_OPTIONS)
    if res.status != 0:
        raise SolverError(f"teleport transport LP failed: {res.message}")
    return np.maximum(res.x, 0.0).reshape(r, s)


def _kr_dual(geo: np.ndarray, nu_bar: np.ndarray) -> tuple[np.ndarray, float]:
    m = len(nu_bar)
    ii, jj = np.nonzero(~np.eye(m, dtype=bool))
    A = np.zeros((len(ii), m))
    A[np.arange(len(ii)), ii] = 1.0
    A[np.arange(len(ii)), jj] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (m - 1)  # potentials are defined up to a constant
    res = linprog(-nu_bar, A_ub=A, b_ub=geo[ii, jj], bounds=bounds,
                  method="highs-ds", options=_LP_OPTIONS)
    if res.status != 0:
        raise SolverError(f"KR dual LP failed: {res.message}")
    return res.x, float(nu_bar @ res.x)


# --------------------------------------------------------------------------- explicit plan


def _ball_take(points: np.ndarray, avail: np.ndarray, idx: np.ndarray, center: np.ndarray,
               amount: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedily take ``amount`` of mass from atoms ``idx`` nearest ``center``.

    The last atom reached is split so the total matches exactly.
    """
    d = np.linalg.norm(points[idx] - center, axis=1)
    order = idx[np.lexsort((idx, d))]
    cum = np.cumsum(avail[order])
    stop = int(np.searchsorted(cum, amount))
    if stop >= len(order):
        raise ValueError("component too light for the requested ball")
    take = avail[order[:stop + 1]].copy()
    take[-1] = amount - (cum[stop - 1] if stop else 0.0)
    return order[:stop + 1], take


def build_teleport_plan(mu: DiscreteMeasure, labels: ComponentLabeling, g: ComponentGraph,
                        r: GraphTransportResult, eps: float):
    """Explicit coupling between ``mu + eps*nu_hat_plus - nu_hat_minus(eps)`` and ``mu``.

    For every directed edge ``(l, k)`` carrying flux ``f``, mass ``eps*f`` is
    added at the atom of ``A_l`` closest to ``A_k`` and the same mass is
    removed from the atoms of ``A_k`` nearest that point; the plan moves the
    added mass onto the removed atoms and keeps everything else in place.
    Returns ``(target, plan)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    comp_mass = np.bincount(labels.label, weights=mu.weights, minlength=labels.m)
    through = r.throughflow()
    if np.any(eps * through >= 0.5 * comp_mass.min()):
        raise ValueError(f"eps={eps} too large: ball restrictions do not fit in the components")

    n = len(mu)
    avail = mu.weights.copy()
    added = np.zeros(n)
    removed = np.zeros(n)
    moves_r, moves_c, moves_m = [], [], []
    for (l, k), f in sorted(r.edge_flux.items()):
        if f <= 0:
            continue
        z = int(g.closest[l, k])
        amount = eps * f
        atoms, take = _ball_take(mu.points, avail, labels.members(k), mu.points[z], amount)
        avail[atoms] -= take
        removed[atoms] += take
        added[z] += amount
        moves_r.append(np.full(len(atoms), z))
        moves_c.append(atoms)
        moves_m.append(take)

    target_w = mu.weights + added - removed
    balance = np.bincount(labels.label, weights=added - removed, minlength=labels.m)
    if np.abs(balance - eps * r.charges.nu_bar).max() > 1e-12 * max(1.0, eps * np.abs(r.charges.nu_bar).sum()):
        raise AssertionError("per-component balance of the plan failed")

    diag = mu.weights - removed
    rows = [np.flatnonzero(diag > 0)]
    cols = [rows[0]]
    mass = [diag[rows[0]]]
    rows += moves_r
    cols += moves_c
    mass += moves_m
    rows, cols, mass = (np.concatenate(v) for v in (rows, cols, mass))

    keep = target_w > 0
    target = DiscreteMeasure(mu.points[keep], target_w[keep])
    if len(target) != int(keep.sum()):
        raise AssertionError("target atoms merged unexpectedly")
    remap = np.full(n, -1)
    remap[np.flatnonzero(keep)] = np.arange(int(keep.sum()))
    plan = TransportPlan.from_entries(remap[rows], cols, mass, target, mu, g.p)
    if plan.marginal_error() > 1e-12 * max(1.0, mu.mass):
        raise AssertionError("plan marginals do not match")
    return target, plan
