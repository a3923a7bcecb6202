"""Exact p-Wasserstein distances between discrete measures of equal mass.

``wasserstein_p`` solves the transportation LP with cost ``|x - y|^p`` and
returns the primal plan together with Kantorovich potentials that certify
optimality.  ``wasserstein_1d`` is the closed-form quantile formula for
measures on the line; it shares no code with the LP path and is used as an
oracle for it.
"""

from __future__ import annotations

import contextlib
import contextvars
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .measures import DiscreteMeasure, total_mass

MASS_RTOL = 1e-9
FEAS_TOL = 1e-9
GAP_RTOL = 1e-7

# problems with at most this many pairs are solved on the full bipartite graph
DENSE_LIMIT = 25_000_000
_CHUNK = 1 << 22  # cost-matrix entries evaluated per pricing block

_HIGHS = dict(primal_feasibility_tolerance=1e-10, dual_feasibility_tolerance=1e-10)


class SolverError(RuntimeError):
    """The LP backend failed or returned an uncertified solution."""


_solve_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("solve_log", default=None)


@contextlib.contextmanager
def solve_log():
    """Collect a record of every LP solve made inside the block.

    >>> with solve_log() as log:
    ...     _ = wasserstein_p(a, b, 2.0)          # doctest: +SKIP
    >>> log[0]["gap"]                             # doctest: +SKIP
    """
    records: list[dict] = []
    token = _solve_log.set(records)
    try:
        yield records
    finally:
        _solve_log.reset(token)


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    return cdist(x, y) ** p


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling between ``source`` and ``target``.

    Entry ``k`` moves ``mass[k]`` from source atom ``rows[k]`` to target atom
    ``cols[k]``.  ``cost`` is ``sum mass * |x - y|^p``.
    """

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    p: float
    cost: float

    @classmethod
    def from_entries(cls, rows, cols, mass, source, target, p) -> "TransportPlan":
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        mass = np.asarray(mass, dtype=float)
        keep = mass > 0
        rows, cols, mass = rows[keep], cols[keep], mass[keep]
        cost = float(np.sum(mass * _pair_costs(source.points, target.points, rows, cols, p)))
        return cls(rows, cols, mass, source, target, p, cost)

    def __len__(self) -> int:
        return len(self.mass)

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.bincount(self.rows, weights=self.mass, minlength=len(self.source))
        c = np.bincount(self.cols, weights=self.mass, minlength=len(self.target))
        return r, c

    def marginal_error(self) -> float:
        r, c = self.marginals()
        return float(max(np.abs(r - self.source.weights).max(initial=0.0),
                         np.abs(c - self.target.weights).max(initial=0.0)))

    def entry_costs(self) -> np.ndarray:
        return _pair_costs(self.source.points, self.target.points, self.rows, self.cols, self.p)

    def recompute_cost(self) -> float:
        return float(np.sum(self.mass * self.entry_costs()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((len(self.source), len(self.target)))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out


def _pair_costs(x, y, rows, cols, p) -> np.ndarray:
    return np.linalg.norm(x[rows] - y[cols], axis=1) ** p


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """Kantorovich pair with ``phi_i - psi_j <= |x_i - y_j|^p``."""

    phi: np.ndarray
    psi: np.ndarray
    p: float

    def objective(self, source: DiscreteMeasure, target: DiscreteMeasure) -> float:
        return float(source.weights @ self.phi - target.weights @ self.psi)

    def max_violation(self, source: DiscreteMeasure, target: DiscreteMeasure) -> float:
        """Largest ``phi_i - psi_j - |x_i - y_j|^p`` over all pairs (<= 0 when feasible)."""
        worst = -np.inf
        for s, e in _row_blocks(len(source), len(target)):
            viol = self.phi[s:e, None] - self.psi[None, :] - cost_matrix(
                source.points[s:e], target.points, self.p)
            worst = max(worst, float(viol.max()))
        return worst

    def slackness_error(self, plan: TransportPlan) -> float:
        """Largest ``|phi_i - psi_j - c_ij|`` over the support of ``plan``."""
        if len(plan) == 0:
            return 0.0
        r = self.phi[plan.rows] - self.psi[plan.cols] - plan.entry_costs()
        return float(np.abs(r).max())


class OTResult(NamedTuple):
    value: float
    plan: TransportPlan
    duals: DualPotentials

    @property
    def gap(self) -> float:
        """``|primal cost - dual objective|``."""
        return abs(self.plan.cost - self.duals.objective(self.plan.source, self.plan.target))


def _row_blocks(n: int, m: int):
    step = max(1, _CHUNK // max(m, 1))
    for s in range(0, n, step):
        yield s, min(n, s + step)


def _check_pair(a: DiscreteMeasure, b: DiscreteMeasure) -> None:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both measures must be nonempty")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ma, mb = total_mass(a), total_mass(b)
    if abs(ma - mb) > MASS_RTOL * max(ma, mb):
        raise ValueError(f"unequal masses {ma!r} and {mb!r}; W_p needs a balanced pair")


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
    """Arcs of a feasible basic plan, so every restricted problem is feasible."""
    i = j = 0
    ra, rb = a.copy(), b.copy()
    arcs = []
    while i < len(a) and j < len(b):
        arcs.append((i, j))
        t = min(ra[i], rb[j])
        ra[i] -= t
        rb[j] -= t
        if i == len(a) - 1:
            j += 1
        elif j == len(b) - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return arcs


def _solve_arcs(rows, cols, costs, a, b):
    n, m, k = len(a), len(b), len(rows)
    ar = np.arange(k)
    A = sp.vstack([
        sp.csr_matrix((np.ones(k), (rows, ar)), shape=(n, k)),
        sp.csr_matrix((np.ones(k), (cols, ar)), shape=(m, k)),
    ]).tocsc()
    res = linprog(costs, A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs-ds", options=_HIGHS)
    if res.status != 0:
        raise SolverError(f"transport LP failed: {res.message}")
    duals = res.eqlin.marginals
    return np.maximum(res.x, 0.0), duals[:n], duals[n:]


def _network_simplex(x, y, wa, wb, p):
    """Dense exact solve with POT's network simplex; returns plan arcs and potentials."""
    for backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
    import ot

    plan, log = ot.emd(wa, wb, cost_matrix(x, y, p), numItermax=10**9, log=True)
    if log.get("warning"):
        return None
    rows, cols = np.nonzero(plan)
    return rows, cols, plan[rows, cols], np.asarray(log["u"]), np.asarray(log["v"])


def wasserstein_p(a: DiscreteMeasure, b: DiscreteMeasure, p: float, *,
                  dense_limit: int = DENSE_LIMIT, neighbours: int = 8,
                  max_rounds: int = 500) -> OTResult:
    """Exact ``W_p(a, b)`` for p > 1 with an optimal plan and certifying potentials.

    Up to ``dense_limit`` pairs the complete transportation problem goes to a
    network simplex.  Larger ones use column generation: a restricted LP on
    nearest-neighbour arcs is solved, every pair is priced with the current
    potentials, and violated arcs are added.  Potentials are then checked
    against every pair; if any reduced cost is negative beyond round-off the
    basis is polished by transportation-simplex pivots with exact tree
    potentials.
    """
    if not p > 1:
        raise ValueError("wasserstein_p requires p > 1 (use wasserstein_1d for p = 1)")
    _check_pair(a, b)
    x, y = a.points, b.points
    wa = a.weights
    wb = b.weights * (total_mass(a) / total_mass(b))
    n, m = len(wa), len(wb)

    solved = _network_simplex(x, y, wa, wb, p) if n * m <= dense_limit else None
    rounds = 0
    if solved is None:
        rows, cols, flows, rounds = _column_generation(x, y, wa, wb, p, neighbours, max_rounds)
        u = v = None
    else:
        rows, cols, flows, u, v = solved

    target = DiscreteMeasure(y, wb) if wb is not b.weights else b
    pivots = 0
    if u is None or _needs_polish(x, y, wa, wb, p, rows, cols, flows, u, v):
        simplex = _TreeSimplex(x, y, wa, wb, p)
        simplex.load(rows, cols, flows)
        pivots = simplex.optimize()
        rows, cols, flows = simplex.arcs()
        u, v = simplex.potentials()

    plan = TransportPlan.from_entries(rows, cols, flows, a, target, p)
    duals = DualPotentials(u, -v, p)
    result = OTResult(plan.cost ** (1.0 / p), plan, duals)
    violation = _certify(result)
    records = _solve_log.get()
    if records is not None:
        records.append(dict(n=n, m=m, p=p, cost=plan.cost, gap=result.gap, violation=violation,
                            rounds=rounds, pivots=pivots))
    return result


def _needs_polish(x, y, wa, wb, p, rows, cols, flows, u, v) -> bool:
    cmax = 0.0
    worst = 0.0
    for s, e in _row_blocks(len(wa), len(wb)):
        c = cost_matrix(x[s:e], y, p)
        cmax = max(cmax, float(c.max()))
        worst = min(worst, float((c - u[s:e, None] - v[None, :]).min()))
    if worst < -1e-12 * max(1.0, cmax):
        return True
    slack = np.abs(_pair_costs(x, y, rows, cols, p) - u[rows] - v[cols])
    marg = max(np.abs(np.bincount(rows, flows, len(wa)) - wa).max(),
               np.abs(np.bincount(cols, flows, len(wb)) - wb).max())
    return bool(slack.max(initial=0.0) > 1e-10 * max(1.0, cmax) or marg > 1e-11 * wa.sum())


def _column_generation(x, y, wa, wb, p, neighbours, max_rounds):
    n, m = len(wa), len(wb)
    k = min(neighbours, m)
    _, nn = cKDTree(y).query(x, k=k)
    nn = np.asarray(nn).reshape(n, k)
    arcs = set(zip(np.repeat(np.arange(n), k).tolist(), nn.ravel().tolist()))
    arcs.update(_northwest_corner(wa, wb))
    rows = np.array(sorted(arcs))
    rows, cols = rows[:, 0], rows[:, 1]
    per_row = 32
    for rounds in range(1, max_rounds + 1):
        costs = _pair_costs(x, y, rows, cols, p)
        flows, u, v = _solve_arcs(rows, cols, costs, wa, wb)
        tol = 1e-10 * max(1.0, float(costs.max()))
        add_r, add_c = [], []
        for s, e in _row_blocks(n, m):
            red = cost_matrix(x[s:e], y, p) - u[s:e, None] - v[None, :]
            bad_rows = np.nonzero((red < -tol).any(axis=1))[0]
            for r in bad_rows:
                line = red[r]
                cand = np.nonzero(line < -tol)[0]
                if len(cand) > per_row:
                    cand = cand[np.argpartition(line[cand], per_row)[:per_row]]
                add_r.append(np.full(len(cand), s + r))
                add_c.append(cand)
        if not add_r:
            return rows, cols, flows, rounds
        rows = np.concatenate([rows, *add_r])
        cols = np.concatenate([cols, *add_c])
    raise SolverError(f"column generation did not converge in {max_rounds} rounds")


class _TreeSimplex:
    """Transportation simplex on a spanning tree of the bipartite graph.

    Nodes ``0..n-1`` are sources and ``n..n+m-1`` targets.  Potentials are
    recomputed exactly from the tree, flows by leaf elimination.
    """

    def __init__(self, x, y, a, b, p):
        self.x, self.y, self.a, self.b, self.p = x, y, a, b, p
        self.n, self.m = len(a), len(b)
        self.N = self.n + self.m
        self.adj: list[dict[int, int]] = [dict() for _ in range(self.N)]  # node -> {nbr: arc id}
        self.arc_i: list[int] = []
        self.arc_j: list[int] = []
        self.flow: list[float] = []
        self.alive: list[bool] = []

    def _cost(self, i, j):
        return float(np.linalg.norm(self.x[i] - self.y[j]) ** self.p)

    def _add(self, i, j, f):
        k = len(self.arc_i)
        self.arc_i.append(i)
        self.arc_j.append(j)
        self.flow.append(f)
        self.alive.append(True)
        self.adj[i][self.n + j] = k
        self.adj[self.n + j][i] = k
        return k

    def _remove(self, k):
        i, j = self.arc_i[k], self.arc_j[k]
        del self.adj[i][self.n + j]
        del self.adj[self.n + j][i]
        self.alive[k] = False

    def _path(self, s, t):
        """Arc ids on the tree path from node s to node t, in order."""
        parent = {s: (-1, -1)}
        queue = [s]
        for u in queue:
            if u == t:
                break
            for w, k in self.adj[u].items():
                if w not in parent:
                    parent[w] = (u, k)
                    queue.append(w)
        if t not in parent:
            return None
        path = []
        u = t
        while u != s:
            u, k = parent[u]
            path.append(k)
        return path[::-1]

    def _cycle(self, i, j):
        """Tree path closing a cycle with arc (i, j), signed for a unit push along (i, j).

        The path runs from target j back to source i; its arcs alternate
        -1, +1, -1, ... so every node stays balanced.
        """
        path = self._path(self.n + j, i)
        return path, [-1.0 if t % 2 == 0 else 1.0 for t in range(len(path))]

    def load(self, rows, cols, flows):
        """Build a spanning tree from a feasible plan, cancelling any support cycles."""
        for k in np.argsort(-np.asarray(flows), kind="stable"):
            f = float(flows[k])
            if f <= 0:
                break
            i, j = int(rows[k]), int(cols[k])
            path = self._path(self.n + j, i)
            if path is None:
                self._add(i, j, f)
                continue
            path, signs = self._cycle(i, j)
            delta = self._cost(i, j) + sum(
                sg * self._cost(self.arc_i[q], self.arc_j[q]) for q, sg in zip(path, signs))
            # push along (i, j) if that does not raise the cost, otherwise against it
            d = 1.0 if delta <= 0 else -1.0
            shrinking = [q for q, sg in zip(path, signs) if d * sg < 0]
            theta, leave = min([(self.flow[q], q) for q in shrinking] or [(np.inf, -1)])
            if d < 0 and f <= theta:
                theta, leave = f, None
            for q, sg in zip(path, signs):
                self.flow[q] += d * sg * theta
            if leave is None:
                continue
            self.flow[leave] = 0.0
            self._remove(leave)
            self._add(i, j, f + d * theta)

        comp = self._components()
        base = comp[0]
        col0 = next(u for u in range(self.n, self.N) if comp[u] == base)
        seen = {base}
        for u in range(self.N):
            if comp[u] in seen:
                continue
            seen.add(comp[u])
            if u < self.n:
                self._add(u, col0 - self.n, 0.0)
            else:
                self._add(0, u - self.n, 0.0)
        self._recompute_flows()

    def _components(self):
        comp = [-1] * self.N
        c = 0
        for s in range(self.N):
            if comp[s] >= 0:
                continue
            comp[s] = c
            stack = [s]
            while stack:
                u = stack.pop()
                for w in self.adj[u]:
                    if comp[w] < 0:
                        comp[w] = c
                        stack.append(w)
            c += 1
        return comp

    def _recompute_flows(self):
        supply = np.concatenate([self.a, -self.b])
        deg = np.array([len(d) for d in self.adj])
        done = [False] * len(self.arc_i)
        leaves = [u for u in range(self.N) if deg[u] == 1]
        while leaves:
            u = leaves.pop()
            if deg[u] != 1:
                continue
            w, k = next((w, k) for w, k in self.adj[u].items() if not done[k])
            # flow runs source -> target along arc k
            f = supply[u] if u < self.n else -supply[u]
            self.flow[k] = max(f, 0.0)
            supply[w] += f if u < self.n else -f
            supply[u] = 0.0
            done[k] = True
            deg[u] -= 1
            deg[w] -= 1
            if deg[w] == 1:
                leaves.append(w)

    def potentials(self):
        pot = np.full(self.N, np.nan)
        pot[0] = 0.0
        stack = [0]
        while stack:
            u = stack.pop()
            for w, k in self.adj[u].items():
                if np.isnan(pot[w]):
                    c = self._cost(self.arc_i[k], self.arc_j[k])
                    pot[w] = c - pot[u]  # u_i + v_j = c_ij
                    stack.append(w)
        return pot[: self.n].copy(), pot[self.n:].copy()

    def optimize(self, max_pivots: int = 100_000) -> int:
        cmax = 0.0
        for pivots in range(max_pivots + 1):
            u, v = self.potentials()
            best, enter = 0.0, None
            for s, e in _row_blocks(self.n, self.m):
                c = cost_matrix(self.x[s:e], self.y, self.p)
                cmax = max(cmax, float(c.max()))
                red = c - u[s:e, None] - v[None, :]
                flat = int(np.argmin(red))  # lowest index among ties
                val = float(red.flat[flat])
                if val < best:
                    best, enter = val, (s + flat // self.m, flat % self.m)
            if enter is None or best >= -1e-13 * max(1.0, cmax):
                return pivots
            self._pivot(*enter)
        raise SolverError("transportation simplex exceeded its pivot budget")

    def _pivot(self, i, j):
        path, signs = self._cycle(i, j)
        dec = [(self.flow[q], q) for q, sg in zip(path, signs) if sg < 0]
        theta = min(f for f, _ in dec)
        leave = min(q for f, q in dec if f == theta)
        for q, sg in zip(path, signs):
            self.flow[q] += sg * theta
        self._remove(leave)
        self._add(i, j, theta)
        self._recompute_flows()

    def arcs(self):
        ks = [k for k, live in enumerate(self.alive) if live]
        return (np.array([self.arc_i[k] for k in ks], dtype=int),
                np.array([self.arc_j[k] for k in ks], dtype=int),
                np.array([self.flow[k] for k in ks], dtype=float))


def _certify(res: OTResult) -> float:
    """Check marginals, dual feasibility and the duality gap; return the worst dual violation."""
    plan, duals = res.plan, res.duals
    total = total_mass(plan.source)
    err = plan.marginal_error()
    if err > MASS_RTOL * total:
        raise SolverError(f"plan violates marginals by {err:.3e}")
    violation = max(duals.max_violation(plan.source, plan.target), 0.0)
    if violation > FEAS_TOL * (1.0 + plan.cost):
        raise SolverError(f"dual potentials infeasible by {violation:.3e}")
    if res.gap > GAP_RTOL * (1.0 + plan.cost):
        raise SolverError(f"duality gap {res.gap:.3e} exceeds tolerance")
    return violation


# --------------------------------------------------------------------------- 1D oracle


def generalized_inverse(m: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the quantile function of a measure on the line.

    Returns ``(cum, x)``: ``S(t) = x[i]`` for ``cum[i-1] < t <= cum[i]``.
    """
    order = np.argsort(m.points[:, 0], kind="stable")
    return np.cumsum(m.weights[order]), m.points[order, 0]


def wasserstein_1d(a: DiscreteMeasure, b: DiscreteMeasure, p: float) -> float:
    """Closed-form ``W_p`` on the line: integrate ``|S_a - S_b|^p`` over mass.

    Both quantile functions are piecewise constant, so the integral is an
    exact finite sum over the merged breakpoints of ``[0, mass]``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if a.dim != 1 or b.dim != 1:
        raise ValueError("wasserstein_1d needs measures on the line (k = 1)")
    _check_pair(a, b)
    ca, xa = generalized_inverse(a)
    cb, xb = generalized_inverse(b)
    top = max(ca[-1], cb[-1])
    ca[-1] = cb[-1] = top
    breaks = np.union1d(ca, cb)
    lower = np.concatenate([[0.0], breaks[:-1]])
    width = breaks - lower
    keep = width > 0
    mid = (lower + 0.5 * width)[keep]
    sa = xa[np.minimum(np.searchsorted(ca, mid), len(xa) - 1)]
    sb = xb[np.minimum(np.searchsorted(cb, mid), len(xb) - 1)]
    return float(np.sum(width[keep] * np.abs(sa - sb) ** p) ** (1.0 / p))


def wasserstein(a: DiscreteMeasure, b: DiscreteMeasure, p: float, method: str = "auto") -> float:
    """``W_p`` value only.  ``auto`` uses the quantile formula on the line and the LP otherwise."""
    if method == "auto":
        method = "quantile" if a.dim == 1 and b.dim == 1 else "lp"
    if method == "quantile":
        return wasserstein_1d(a, b, p)
    if method == "lp":
        return wasserstein_p(a, b, p).value
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------- structural checks


def verify_monotone_additivity(a: DiscreteMeasure, b: DiscreteMeasure, lam: DiscreteMeasure,
                               p: float, method: str = "lp"):
    """Compare ``W_p(a, b)`` with ``W_p(a + lam, b + lam)``; the second can only be smaller."""
    lhs = wasserstein(a, b, p, method)
    rhs = wasserstein(a + lam, b + lam, p, method)
    return lhs, rhs, bool(rhs <= lhs + 1e-9 * (1.0 + lhs))


def homogeneity_check(a: DiscreteMeasure, b: DiscreteMeasure, alpha: float, p: float,
                      method: str = "lp", rtol: float = 1e-8) -> bool:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    base = wasserstein(a, b, p, method)
    scaled = wasserstein(a.scale(alpha), b.scale(alpha), p, method)
    expect = alpha ** (1.0 / p) * base
    return bool(abs(scaled - expect) <= rtol * max(abs(expect), 1e-300) or scaled == expect)


def bounding_diameter(*measures: DiscreteMeasure) -> float:
    """Diagonal of the bounding box of the union of supports (an upper bound on its diameter)."""
    pts = np.vstack([m.points for m in measures if len(m)])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
