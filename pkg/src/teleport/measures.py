"""Discrete and signed measures, test-measure families and regularity checks.

A measure is a finite set of atoms in R^k with strictly positive weights.
Atoms closer than ``MERGE_TOL`` are identified and their weights added.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

MERGE_TOL = 1e-12


def _as_points(points, dim=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # a flat list is read as a list of 1D points unless a dimension says otherwise
        pts = pts.reshape(-1, 1) if dim in (None, 1) else pts.reshape(-1, dim)
    if pts.ndim != 2:
        raise ValueError(f"points must be an (n, k) array, got shape {pts.shape}")
    if pts.size and not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    return pts


def _merge_atoms(points: np.ndarray, weights: np.ndarray):
    """Sum the weights of atoms within MERGE_TOL of each other, keeping first-occurrence order."""
    n = len(weights)
    if n < 2:
        return points, weights
    pairs = cKDTree(points).query_pairs(MERGE_TOL, output_type="ndarray")
    if len(pairs) == 0:
        return points, weights
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, group = connected_components(graph, directed=False)
    first = np.full(group.max() + 1, n)
    np.minimum.at(first, group, np.arange(n))
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    merged = np.zeros(len(order))
    np.add.at(merged, rank[group], weights)
    return points[first[order]], merged


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite nonnegative measure ``sum_i w_i delta_{x_i}`` on R^k.

    Zero weights are dropped and coincident atoms merged at construction,
    so every stored weight is strictly positive and atoms are distinct.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights, dim: int | None = None):
        w = np.asarray(weights, dtype=float).reshape(-1)
        pts = _as_points(points, dim)
        if len(pts) != len(w):
            raise ValueError(f"{len(pts)} points but {len(w)} weights")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        keep = w > 0
        pts, w = _merge_atoms(pts[keep], w[keep])
        pts = np.ascontiguousarray(pts)
        w = np.ascontiguousarray(w)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, dim: int = 1) -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "DiscreteMeasure":
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(pt.reshape(1, -1), [mass])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.weights)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return DiscreteMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    def scale(self, alpha: float) -> "DiscreteMeasure":
        if alpha < 0:
            raise ValueError("scale factor must be nonnegative")
        return DiscreteMeasure(self.points, alpha * self.weights)

    __rmul__ = scale

    def subset(self, mask) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points[mask], self.weights[mask], dim=self.dim)

    def nearest_atom(self, point) -> int:
        """Index of the atom closest to ``point`` (lowest index on ties)."""
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        d = np.linalg.norm(self.points - pt, axis=1)
        return int(np.argmin(d))

    def same_as(self, other: "DiscreteMeasure", tol: float = 1e-12) -> bool:
        """Equality of measures up to atom ordering."""
        if len(self) != len(other) or (len(self) and self.dim != other.dim):
            return False
        if len(self) == 0:
            return True
        dist, idx = cKDTree(other.points).query(self.points)
        if np.any(dist > MERGE_TOL) or len(set(idx.tolist())) != len(idx):
            return False
        return bool(np.all(np.abs(self.weights - other.weights[idx]) <= tol))


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Jordan pair ``nu = plus - minus`` with disjoint supports."""

    plus: DiscreteMeasure
    minus: DiscreteMeasure

    def __post_init__(self):
        if len(self.plus) and len(self.minus):
            if self.plus.dim != self.minus.dim:
                raise ValueError("plus and minus parts live in different dimensions")
            dist, _ = cKDTree(self.minus.points).query(self.plus.points)
            if np.any(dist <= MERGE_TOL):
                raise ValueError(
                    "plus and minus parts share atoms; use jordan_decompose to cancel them"
                )

    @property
    def dim(self) -> int:
        return self.plus.dim if len(self.plus) else self.minus.dim

    @property
    def total_variation(self) -> float:
        return self.plus.mass + self.minus.mass

    @property
    def balance(self) -> float:
        return self.plus.mass - self.minus.mass

    def to_atoms(self) -> list[tuple[np.ndarray, float]]:
        atoms = [(x.copy(), float(w)) for x, w in zip(self.plus.points, self.plus.weights)]
        atoms += [(x.copy(), -float(w)) for x, w in zip(self.minus.points, self.minus.weights)]
        return atoms

    def scale(self, alpha: float) -> "SignedMeasure":
        return SignedMeasure(self.plus.scale(alpha), self.minus.scale(alpha))

    @classmethod
    def dipole(cls, x_plus, x_minus, mass: float = 1.0) -> "SignedMeasure":
        """``mass * (delta_{x_plus} - delta_{x_minus})``."""
        return jordan_decompose([(x_plus, mass), (x_minus, -mass)])


def total_mass(m: DiscreteMeasure) -> float:
    return m.mass if len(m) else 0.0


def jordan_decompose(atoms: Sequence[tuple[object, float]], dim: int | None = None) -> SignedMeasure:
    """Split a list of signed atoms into mutually singular positive and negative parts.

    Coincident atoms are net-summed first, so exact cancellations vanish.
    """
    if len(atoms) == 0:
        empty = DiscreteMeasure.empty(dim or 1)
        return SignedMeasure(empty, empty)
    pts = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in atoms])
    pts = _as_points(pts, dim)
    w = np.array([float(v) for _, v in atoms])
    n = len(w)
    pairs = cKDTree(pts).query_pairs(MERGE_TOL, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else
                       (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))), shape=(n, n))
    _, group = connected_components(graph, directed=False)
    net = np.zeros(group.max() + 1)
    np.add.at(net, group, w)
    # round-off residue of an exact cancellation is not an atom
    net[np.abs(net) <= 8 * np.finfo(float).eps * np.abs(w).max()] = 0.0
    first = np.full(len(net), n)
    np.minimum.at(first, group, np.arange(n))
    rep = pts[first]
    k = pts.shape[1]
    plus = DiscreteMeasure(rep[net > 0], net[net > 0], dim=k)
    minus = DiscreteMeasure(rep[net < 0], -net[net < 0], dim=k)
    return SignedMeasure(plus, minus)


def is_balanced(nu: SignedMeasure, tol: float = 1e-12) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return abs(total_mass(nu.plus) - total_mass(nu.minus)) <= tol


def perturb(mu: DiscreteMeasure, eps: float, nu: SignedMeasure):
    """Return the pair ``(mu + eps*nu_plus, mu + eps*nu_minus)``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return mu + nu.plus.scale(eps), mu + nu.minus.scale(eps)


def _label_array(labels) -> np.ndarray:
    arr = getattr(labels, "label", labels)
    return np.asarray(arr, dtype=int).reshape(-1)


def restrict(m: DiscreteMeasure, labels, j: int) -> DiscreteMeasure:
    """Atoms of ``m`` carrying component label ``j``.

    ``labels`` is a per-atom integer array or any object with a ``label`` attribute.
    """
    lab = _label_array(labels)
    if len(lab) != len(m):
        raise ValueError(f"labeling has {len(lab)} entries for {len(m)} atoms")
    if j < 0 or not np.any(lab == j):
        raise ValueError(f"unknown component label {j}")
    return m.subset(lab == j)


# --------------------------------------------------------------------------- families

FAMILIES = (
    "uniform-interval",
    "uniform-box",
    "wedge",
    "polynomial-1d",
    "two-component",
    "beta-profile",
)

_DEFAULTS: dict[str, dict] = {
    "uniform-interval": {"lo": 0.0, "hi": 1.0, "mass": 1.0},
    "uniform-box": {"lo": (0.0, 0.0), "hi": (1.0, 1.0), "mass": 1.0},
    "wedge": {"beta": 1.0, "k": 2, "mass": 1.0},
    # density proportional to x (x-1)^2 (x-2)^2 on [0, 3]
    "polynomial-1d": {"lo": 0.0, "hi": 3.0, "coeffs": tuple(np.poly([0, 1, 1, 2, 2])), "mass": 1.0},
    "two-component": {"first": (0.0, 1.0), "second": (2.0, 3.0), "split": 0.5, "mass": 1.0},
    "beta-profile": {"d": 2.0, "lo": 0.0, "hi": 1.0, "mass": 1.0},
}


@dataclass(frozen=True)
class DensitySpec:
    """A named density family with its parameters (missing ones take defaults)."""

    family: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        unknown = set(self.params) - set(_DEFAULTS[self.family])
        if unknown:
            raise ValueError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        merged = dict(_DEFAULTS[self.family])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        self._validate()

    def _validate(self):
        p = self.params
        if float(p["mass"]) <= 0:
            raise ValueError("mass must be positive")
        if self.family == "wedge":
            if float(p["beta"]) < 0:
                raise ValueError("wedge requires beta >= 0")
            if int(p["k"]) not in (2, 3):
                raise ValueError("wedge generator supports k in {2, 3}")
        elif self.family == "beta-profile":
            if float(p["d"]) < 1:
                raise ValueError("beta-profile requires d >= 1")
        elif self.family == "two-component":
            (a0, b0), (a1, b1) = p["first"], p["second"]
            if not (a0 < b0 and a1 < b1) or not (b0 < a1 or b1 < a0):
                raise ValueError("two-component needs two disjoint nondegenerate intervals")
            if not 0 < float(p["split"]) < 1:
                raise ValueError("split must lie in (0, 1)")
        elif self.family == "uniform-box":
            lo, hi = np.atleast_1d(p["lo"]), np.atleast_1d(p["hi"])
            if lo.shape != hi.shape or np.any(hi < lo) or np.all(hi == lo):
                raise ValueError("uniform-box needs lo <= hi with at least one open axis")
            if len(lo) > 3:
                raise ValueError("box generator supports k <= 3")
        if self.family in ("uniform-interval", "polynomial-1d", "beta-profile"):
            if not float(p["lo"]) < float(p["hi"]):
                raise ValueError("interval requires lo < hi")

    @property
    def dim(self) -> int:
        if self.family == "wedge":
            return int(self.params["k"])
        if self.family == "uniform-box":
            return len(np.atleast_1d(self.params["lo"]))
        return 1


def _midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * h, h


def _normalized(points, density, mass) -> DiscreteMeasure:
    density = np.asarray(density, dtype=float)
    keep = density > 0
    if keep.sum() == 0:
        raise ValueError("density vanishes on every grid cell")
    w = density[keep]
    return DiscreteMeasure(points[keep], mass * w / w.sum())


def discretize(spec: DensitySpec, resolution: int) -> DiscreteMeasure:
    """Midpoint-rule discretization on a regular grid with ``resolution`` cells per axis.

    Each kept cell carries density(center) * cell volume, rescaled so the
    total equals the family's mass parameter.
    """
    n = int(resolution)
    if n < 2:
        raise ValueError(f"resolution {resolution} too small: need at least 2 cells per axis")
    p = spec.params
    mass = float(p["mass"])
    fam = spec.family

    if fam == "uniform-interval":
        x, _ = _midpoints(float(p["lo"]), float(p["hi"]), n)
        return _normalized(x[:, None], np.ones(n), mass)

    if fam == "beta-profile":
        lo, hi, d = float(p["lo"]), float(p["hi"]), float(p["d"])
        x, _ = _midpoints(lo, hi, n)
        s = (x - lo) / (hi - lo)
        return _normalized(x[:, None], s ** (d - 1) * (1 - s) ** (d - 1), mass)

    if fam == "polynomial-1d":
        x, _ = _midpoints(float(p["lo"]), float(p["hi"]), n)
        return _normalized(x[:, None], np.abs(np.polyval(np.asarray(p["coeffs"], float), x)), mass)

    if fam == "two-component":
        (a0, b0), (a1, b1) = p["first"], p["second"]
        split = float(p["split"])
        x0, _ = _midpoints(a0, b0, n)
        x1, _ = _midpoints(a1, b1, n)
        pts = np.concatenate([x0, x1])[:, None]
        w = np.concatenate([np.full(n, split / n), np.full(n, (1 - split) / n)])
        return DiscreteMeasure(pts, mass * w)

    if fam == "uniform-box":
        lo = np.atleast_1d(np.asarray(p["lo"], float))
        hi = np.atleast_1d(np.asarray(p["hi"], float))
        axes = [_midpoints(a, b, n)[0] if b > a else np.array([a]) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        return _normalized(grid, np.ones(len(grid)), mass)

    if fam == "wedge":
        beta, k = float(p["beta"]), int(p["k"])
        x, _ = _midpoints(0.0, 1.0, n)
        y, _ = _midpoints(-1.0, 1.0, 2 * n)
        axes = [x] + [y] * (k - 1)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
        inside = np.linalg.norm(grid[:, 1:], axis=1) <= grid[:, 0] ** beta
        # the wedge must be resolved by at least two cells across its narrowest resolved section
        if np.count_nonzero(inside) < 2 * k:
            raise ValueError(f"resolution {resolution} too small to resolve the wedge")
        return _normalized(grid, inside.astype(float), mass)

    raise AssertionError(fam)


# --------------------------------------------------------------------------- regularity


@dataclass(frozen=True)
class AhlforsReport:
    K_est: float
    ok: bool
    radii: np.ndarray
    grid_scale: float
    worst_atom: int


def grid_scale(m: DiscreteMeasure) -> float:
    """Largest nearest-neighbour distance between atoms: the resolution of the discretization."""
    if len(m) < 2:
        return 0.0
    dist, _ = cKDTree(m.points).query(m.points, k=2)
    return float(dist[:, 1].max())


def check_ahlfors(m: DiscreteMeasure, d: float, delta: float, sample_count: int = 64,
                  n_radii: int = 12) -> AhlforsReport:
    """Empirical lower Ahlfors constant ``min m(B_r(x)) / r^d`` above the grid scale.

    Sample atoms are evenly spaced in index order (first and last always
    included); radii are log-spaced in ``(h, delta]`` where ``h`` is the grid
    scale, since an atomic measure violates the bound below its resolution.
    """
    if len(m) == 0:
        raise ValueError("measure is empty")
    if d < 1 or delta <= 0:
        raise ValueError("need d >= 1 and delta > 0")
    h = grid_scale(m)
    if delta <= h:
        raise ValueError(f"delta={delta} does not exceed the grid scale {h}: no valid radii")
    radii = np.geomspace(h, delta, n_radii + 1)[1:]
    idx = np.unique(np.linspace(0, len(m) - 1, min(sample_count, len(m))).round().astype(int))
    tree = cKDTree(m.points)
    ratios = np.empty((len(idx), len(radii)))
    for c, r in enumerate(radii):
        balls = tree.query_ball_point(m.points[idx], r)
        ratios[:, c] = [m.weights[b].sum() for b in balls]
        ratios[:, c] /= r ** d
    per_atom = ratios.min(axis=1)
    worst = int(np.argmin(per_atom))
    K = float(per_atom[worst])
    return AhlforsReport(K_est=K, ok=K > 0, radii=radii, grid_scale=h, worst_atom=int(idx[worst]))
