"""Convex polytope kernel: H/V representations, erosion, preimages and unions.

Everything here is numpy-based. Vertex enumeration is done by brute force over
n-subsets of the constraint rows, which is robust to degeneracy and fast for the
2-D and 3-D problems this package targets; higher dimensions work but scale
combinatorially.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, cKDTree

MEMBERSHIP_TOL = 1e-9
REDUNDANCY_TOL = 1e-9
SINGULAR_TOL = 1e-12
DEFAULT_MARGIN = 1e-6
BOUNDARY_SAMPLES = 64
# outward nudge used to decide whether a facet sample lies on the union boundary
BOUNDARY_NUDGE = 1e-7


class GeometryError(Exception):
    """Base class for polytope errors."""


class EmptyPolytopeError(GeometryError):
    pass


class UnboundedPolytopeError(GeometryError):
    pass


class SingularMatrixError(GeometryError):
    pass


class NotNestedWarning(UserWarning):
    """Emitted when a boundary distance is requested for non-nested unions."""


# ---------------------------------------------------------------------------
# low level helpers


def _dedupe_points(points: np.ndarray, tol: float) -> np.ndarray:
    """Lexicographically sorted points with near-duplicates (inf-norm <= tol) removed."""
    if len(points) <= 1:
        return points
    points = points[np.lexsort(points.T[::-1])]
    pairs = cKDTree(points).query_pairs(tol, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return points
    nbrs: dict[int, list[int]] = {}
    for i, j in pairs:
        nbrs.setdefault(int(i), []).append(int(j))
        nbrs.setdefault(int(j), []).append(int(i))
    removed = np.zeros(len(points), dtype=bool)
    keep = []
    for i in range(len(points)):
        if removed[i]:
            continue
        keep.append(i)
        for j in nbrs.get(i, ()):
            removed[j] = True
    return points[keep]


def _affine_rank(points: np.ndarray, tol: float = 1e-9) -> int:
    if len(points) <= 1:
        return 0
    centered = points - points[0]
    scale = max(1.0, float(np.max(np.abs(points))))
    sv = np.linalg.svd(centered, compute_uv=False)
    return int(np.sum(sv > tol * scale))


def _enumerate_vertices(A: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """All feasible intersections of n constraint hyperplanes, deduplicated."""
    m, n = A.shape
    if m < n:
        return np.zeros((0, n))
    combos = np.array(list(itertools.combinations(range(m), n)), dtype=int)
    sub_A = A[combos]
    sub_b = b[combos]
    dets = np.linalg.det(sub_A)
    ok = np.abs(dets) > SINGULAR_TOL
    if not np.any(ok):
        return np.zeros((0, n))
    pts = np.linalg.solve(sub_A[ok], sub_b[ok][..., None])[..., 0]
    slack_tol = tol * np.maximum(1.0, np.abs(b))
    feasible = np.all(pts @ A.T <= b + slack_tol, axis=1)
    pts = pts[feasible & np.all(np.isfinite(pts), axis=1)]
    scale = max(1.0, float(np.max(np.abs(pts)))) if len(pts) else 1.0
    return _dedupe_points(pts, 1e-9 * scale)


def _order_ccw(vertices: np.ndarray) -> np.ndarray:
    center = vertices.mean(axis=0)
    ang = np.arctan2(vertices[:, 1] - center[1], vertices[:, 0] - center[0])
    ordered = vertices[np.argsort(ang, kind="stable")]
    start = np.lexsort(ordered.T[::-1])[0]
    return np.roll(ordered, -start, axis=0)


def _is_bounded(A: np.ndarray) -> bool:
    """True when the rows of A positively span R^n, i.e. {d : A d <= 0} = {0}."""
    m, n = A.shape
    if m <= n or np.linalg.matrix_rank(A) < n:
        return False
    if n == 1:
        return bool(np.any(A[:, 0] > 0) and np.any(A[:, 0] < 0))
    if n == 2:
        ang = np.sort(np.arctan2(A[:, 1], A[:, 0]))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        return bool(np.max(gaps) < np.pi - 1e-12)
    # exists lambda >= 1 with A^T lambda = 0
    res = linprog(np.zeros(m), A_eq=A.T, b_eq=np.zeros(n), bounds=[(1, None)] * m, method="highs")
    return res.status == 0


def _normalize_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    norms = np.linalg.norm(A, axis=1)
    zero = norms <= 1e-14
    infeasible = bool(np.any(b[zero] < -MEMBERSHIP_TOL))
    A, b, norms = A[~zero], b[~zero], norms[~zero]
    return A / norms[:, None], b / norms, infeasible


def _sort_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.round(np.column_stack([A, b]), 12)
    order = np.lexsort(keys.T[::-1])
    return A[order], b[order]


# ---------------------------------------------------------------------------
# representations


class HPolytope:
    """Polytope {x : A x <= b}.

    Instances are treated as immutable. ``canonical()`` returns a copy with
    unit-norm, nonredundant, lexicographically sorted rows and caches the
    vertex set, which most other operations need.
    """

    __slots__ = ("A", "b", "_vertices", "_canonical", "_empty")

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("polytope data must be finite")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self._vertices: np.ndarray | None = None
        self._canonical = False
        self._empty: bool | None = None

    @classmethod
    def empty(cls, n: int) -> "HPolytope":
        P = cls(np.zeros((1, n)), [-1.0])
        P._vertices = np.zeros((0, n))
        P._canonical = True
        P._empty = True
        return P

    @classmethod
    def from_box(cls, lower, upper) -> "HPolytope":
        return Box(lower, upper).to_hpolytope()

    @classmethod
    def regular_polygon(cls, n_facets: int, radius: float = 1.0, inscribed: bool = True) -> "HPolytope":
        """Regular polygon centred at the origin.

        With ``inscribed=True`` the vertices lie on the circle of the given
        radius, so the polygon is an inner approximation of the disc.
        """
        angles = 2 * np.pi * (np.arange(n_facets) + 0.5) / n_facets
        A = np.column_stack([np.cos(angles), np.sin(angles)])
        offset = radius * np.cos(np.pi / n_facets) if inscribed else radius
        return cls(A, np.full(n_facets, offset)).canonical()

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def canonical(self) -> "HPolytope":
        if self._canonical:
            return self
        A, b, infeasible = _normalize_rows(self.A, self.b)
        n = self.dim
        if infeasible:
            return HPolytope.empty(n)
        if len(A) and not _is_bounded(A):
            raise UnboundedPolytopeError("polytope is unbounded")
        if len(A) == 0:
            raise UnboundedPolytopeError("polytope is unbounded")
        verts = _enumerate_vertices(A, b, REDUNDANCY_TOL)
        if len(verts) == 0:
            return HPolytope.empty(n)
        scale = max(1.0, float(np.max(np.abs(verts))))
        on = np.abs(verts @ A.T - b) <= REDUNDANCY_TOL * scale  # (nv, m)
        full = _affine_rank(verts) == n
        keep = []
        for i in range(len(A)):
            pts = verts[on[:, i]]
            if full:
                if len(pts) >= n and _affine_rank(pts) >= n - 1:
                    keep.append(i)
            elif len(pts):
                keep.append(i)
        A, b = A[keep], b[keep]
        A, b = _sort_rows(A, b)
        # drop duplicated facets
        if len(A) > 1:
            rows = np.column_stack([A, b])
            uniq = [0]
            for i in range(1, len(rows)):
                if np.max(np.abs(rows[i] - rows[uniq[-1]])) > 1e-9 * max(1.0, abs(b[i])):
                    uniq.append(i)
            A, b = A[uniq], b[uniq]
        out = HPolytope(A, b)
        out._vertices = _order_ccw(verts) if n == 2 and len(verts) > 2 else verts
        out._canonical = True
        out._empty = False
        return out

    @property
    def vertices(self) -> np.ndarray:
        """Vertex array (ccw-ordered in 2-D). Empty array for the empty set."""
        if self._vertices is None:
            C = self.canonical()
            self._vertices = C._vertices
            self._empty = C._empty
        return self._vertices

    def is_empty(self) -> bool:
        if self._empty is None:
            self._empty = len(self.vertices) == 0
        return self._empty

    def is_full_dimensional(self) -> bool:
        v = self.vertices
        return len(v) > self.dim and _affine_rank(v) == self.dim

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> np.ndarray | bool:
        """Membership of one point (returns bool) or of an (N, n) batch."""
        x = np.asarray(x, dtype=float)
        if self.is_empty():
            return False if x.ndim == 1 else np.zeros(len(x), dtype=bool)
        A, b, _ = _normalize_rows(self.A, self.b)
        if x.ndim == 1:
            return bool(np.all(A @ x <= b + tol))
        return np.all(x @ A.T <= b + tol, axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def inflate(self, eps: float) -> "HPolytope":
        """Shift every (unit-normalized) facet outward by ``eps``."""
        A, b, _ = _normalize_rows(self.A, self.b)
        return HPolytope(A, b + eps).canonical()

    def __repr__(self) -> str:
        return f"HPolytope(m={self.n_constraints}, n={self.dim})"

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HPolytope":
        return cls(d["A"], d["b"])


@dataclass(frozen=True)
class VPolytope:
    """Convex hull of a finite vertex list (extreme points only)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "VPolytope":
        return cls(np.asarray(d["vertices"], dtype=float))


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same dimension")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def to_hpolytope(self) -> HPolytope:
        n = self.dim
        eye = np.eye(n)
        return HPolytope(np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower])).canonical()

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Box":
        return cls(d["lower"], d["upper"])


class PolyUnion:
    """Finite union of polytopes. Parts may overlap; empty parts are rejected."""

    def __init__(self, parts: Iterable[HPolytope] = ()):
        self.parts: tuple[HPolytope, ...] = tuple(p.canonical() for p in parts)
        if any(p.is_empty() for p in self.parts):
            raise ValueError("PolyUnion parts must be nonempty")
        self._stack = None
        self._bboxes = None

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __repr__(self) -> str:
        return f"PolyUnion({len(self.parts)} parts)"

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def _stacked(self):
        if self._stack is None:
            rows_A, rows_b, starts = [], [], []
            pos = 0
            for p in self.parts:
                A, b, _ = _normalize_rows(p.A, p.b)
                rows_A.append(A)
                rows_b.append(b)
                starts.append(pos)
                pos += len(b)
            self._stack = (np.vstack(rows_A), np.concatenate(rows_b), np.array(starts))
        return self._stack

    def bboxes(self) -> tuple[np.ndarray, np.ndarray]:
        if self._bboxes is None:
            lo = np.array([p.vertices.min(axis=0) for p in self.parts])
            hi = np.array([p.vertices.max(axis=0) for p in self.parts])
            self._bboxes = (lo, hi)
        return self._bboxes

    def part_membership(self, X: np.ndarray, tol: float = MEMBERSHIP_TOL, chunk: int | None = None) -> np.ndarray:
        """Boolean (n_parts, N) matrix of per-part membership."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.parts:
            return np.zeros((0, len(X)), dtype=bool)
        A, b, starts = self._stacked()
        if chunk is None:
            # keep the (chunk, rows) work array around 32 MB
            chunk = int(np.clip(4_000_000 // len(b), 1, 4096))
        out = np.empty((len(self.parts), len(X)), dtype=bool)
        for s in range(0, len(X), chunk):
            block = X[s:s + chunk]
            viol = block @ A.T - b  # (N, rows)
            out[:, s:s + chunk] = (np.maximum.reduceat(viol, starts, axis=1) <= tol).T
        return out

    def contains_points(self, X: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.parts:
            return np.zeros(len(X), dtype=bool)
        return self.part_membership(X, tol).any(axis=0)

    def union(self, other: "PolyUnion") -> "PolyUnion":
        return PolyUnion(self.parts + other.parts)

    def to_dict(self) -> dict:
        return {"parts": [p.to_dict() for p in self.parts]}

    @classmethod
    def from_dict(cls, d: dict) -> "PolyUnion":
        return cls(HPolytope.from_dict(p) for p in d["parts"])


# ---------------------------------------------------------------------------
# operations


def erode(P: HPolytope, W: HPolytope) -> HPolytope:
    """Pontryagin difference P ⊖ W = {x : x + w ∈ P for all w ∈ W}.

    Each facet offset is reduced by the support function of W in the facet
    normal direction. The result may be the (representable) empty polytope.
    """
    wv = W.vertices
    if len(wv) == 0:
        raise EmptyPolytopeError("cannot erode by an empty set")
    support = np.max(P.A @ wv.T, axis=1)
    return HPolytope(P.A, P.b - support).canonical()


def linear_preimage(M, P: HPolytope) -> HPolytope:
    """{x : M x ∈ P} for a nonsingular square M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    scale = np.linalg.norm(M, 2) ** n
    if M.shape != (n, n) or abs(np.linalg.det(M)) <= SINGULAR_TOL * max(scale, 1e-300):
        raise SingularMatrixError("preimage map must be square and nonsingular")
    return HPolytope(P.A @ M, P.b).canonical()


def intersect(P: HPolytope, X: HPolytope | Box) -> HPolytope:
    if isinstance(X, Box):
        X = X.to_hpolytope()
    if P.is_empty() or X.is_empty():
        return HPolytope.empty(P.dim)
    return HPolytope(np.vstack([P.A, X.A]), np.concatenate([P.b, X.b])).canonical()


def vrep(P: HPolytope) -> VPolytope:
    C = P.canonical()
    if C.is_empty():
        raise EmptyPolytopeError("polytope is empty")
    return VPolytope(C.vertices)


def convex_hull(points) -> VPolytope:
    """Extreme points of the convex hull of a point cloud (any affine dimension)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise EmptyPolytopeError("no points")
    n = pts.shape[1]
    scale = max(1.0, float(np.max(np.abs(pts))))
    pts = _dedupe_points(pts, 1e-12 * scale)
    r = _affine_rank(pts, 1e-12)
    if r == 0:
        return VPolytope(pts[:1])
    if r == n:
        hull = ConvexHull(pts)
        v = pts[hull.vertices]
        return VPolytope(_order_ccw(v) if n == 2 else v[np.lexsort(v.T[::-1])])
    c, basis = _affine_basis(pts, r)
    if r == 1:
        t = (pts - c) @ basis[:, 0]
        return VPolytope(pts[[int(np.argmin(t)), int(np.argmax(t))]])
    sub = convex_hull((pts - c) @ basis)
    v = sub.vertices @ basis.T + c
    return VPolytope(v[np.lexsort(v.T[::-1])])


def _affine_basis(pts: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    return c, vt[:r].T


def hrep(V: VPolytope) -> HPolytope:
    """Facet description of conv(V). Lower-dimensional hulls get equality pairs."""
    pts = np.atleast_2d(V.vertices)
    if len(pts) == 0:
        raise EmptyPolytopeError("no vertices")
    n = pts.shape[1]
    r = _affine_rank(pts, 1e-12)
    if r == n:
        hull = ConvexHull(pts)
        eq = hull.equations
        return HPolytope(eq[:, :n], -eq[:, n]).canonical()
    c, basis = _affine_basis(pts, max(r, 0))
    _, _, vt = np.linalg.svd(np.vstack([pts - c, np.zeros((max(0, n - len(pts)), n))]))
    normal = vt[r:]
    rows_A = [normal, -normal]
    rows_b = [normal @ c, -(normal @ c)]
    if r == 1:
        t = (pts - c) @ basis[:, 0]
        d = basis[:, 0]
        rows_A += [d[None, :], -d[None, :]]
        rows_b += [np.array([t.max() + d @ c]), np.array([-(t.min() + d @ c)])]
    elif r > 1:
        sub = hrep(VPolytope((pts - c) @ basis))
        Al = sub.A @ basis.T
        rows_A.append(Al)
        rows_b.append(sub.b + Al @ c)
    return HPolytope(np.vstack(rows_A), np.concatenate(rows_b)).canonical()


def contains_point(U: PolyUnion | HPolytope, x, tol: float = MEMBERSHIP_TOL) -> bool:
    if isinstance(U, HPolytope):
        return bool(U.contains(np.asarray(x, dtype=float), tol))
    return bool(U.contains_points(np.asarray(x, dtype=float)[None, :], tol)[0])


# -- coverage by set difference ---------------------------------------------


def _piece(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    P = HPolytope(A, b).canonical()
    if P.is_empty() or not P.is_full_dimensional():
        return None
    return P.A, P.b, P.vertices


def union_covers_with_margin(inner: HPolytope, U: PolyUnion, eps: float = DEFAULT_MARGIN,
                             within: HPolytope | None = None, tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether ``inner`` inflated by ``eps`` is covered by the union ``U``.

    Implemented as an exact recursive set difference: the inflated set minus
    each part in turn; any leftover piece that protrudes more than ``tol``
    beyond the part it was cut from means the cover fails. ``within`` clips
    the inflated set, giving interior relative to that set.
    """
    target = inner.inflate(eps) if eps > 0 else inner.canonical()
    if within is not None:
        target = intersect(target, within)
    if target.is_empty():
        return True
    if len(U) == 0:
        return False
    lo_all, hi_all = U.bboxes()
    normalized = [_normalize_rows(p.A, p.b)[:2] for p in U.parts]
    stack = [(target.A, target.b, target.vertices, 0)]
    while stack:
        A, b, verts, start = stack.pop()
        vlo, vhi = verts.min(axis=0), verts.max(axis=0)
        covered = False
        split = None
        for j in range(start, len(U)):
            if np.any(lo_all[j] > vhi + tol) or np.any(hi_all[j] < vlo - tol):
                continue
            QA, Qb = normalized[j]
            slack = verts @ QA.T - Qb  # (nv, mQ)
            if np.all(slack <= tol):
                covered = True
                break
            if np.any(np.all(slack >= -tol, axis=0)):
                continue  # piece lies outside one facet of Q: at most touching
            cutting = np.where(np.max(slack, axis=0) > tol)[0]
            pieces = []
            prior_A, prior_b = [], []
            for i in cutting:
                pA = np.vstack([A, -QA[i:i + 1]] + prior_A)
                pb = np.concatenate([b, [-Qb[i]]] + prior_b)
                pc = _piece(pA, pb)
                if pc is not None and np.max(pc[2] @ QA[i] - Qb[i]) > tol:
                    pieces.append(pc + (j + 1,))
                prior_A.append(QA[i:i + 1])
                prior_b.append(Qb[i:i + 1])
            split = pieces
            break
        if covered:
            continue
        if split is None:
            return False
        stack.extend(split)
    return True


# -- distances ----------------------------------------------------------------


def _segment_distances(Y: np.ndarray, P0: np.ndarray, P1: np.ndarray) -> np.ndarray:
    """(N, E) distances from points Y to segments [P0_e, P1_e]."""
    d = P1 - P0
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0, dd, 1.0)
    rel = Y[:, None, :] - P0[None, :, :]
    t = np.clip(np.einsum("nej,ej->ne", rel, d) / dd, 0.0, 1.0)
    proj = P0[None, :, :] + t[..., None] * d[None, :, :]
    return np.linalg.norm(Y[:, None, :] - proj, axis=2)


def dist_points_to_polytope(Y, P: HPolytope) -> np.ndarray:
    """Euclidean distances from each row of Y to the convex polytope P."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    C = P.canonical()
    if C.is_empty():
        raise EmptyPolytopeError("distance to the empty set")
    inside = C.contains(Y, MEMBERSHIP_TOL)
    out = np.zeros(len(Y))
    todo = ~inside
    if not np.any(todo):
        return out
    v = C.vertices
    if C.dim == 2:
        if len(v) == 1:
            out[todo] = np.linalg.norm(Y[todo] - v[0], axis=1)
        else:
            out[todo] = _segment_distances(Y[todo], v, np.roll(v, -1, axis=0)).min(axis=1)
        return out
    A, b, _ = _normalize_rows(C.A, C.b)
    for i in np.where(todo)[0]:
        y = Y[i]
        res = minimize(lambda z: 0.5 * np.sum((z - y) ** 2), v.mean(axis=0), jac=lambda z: z - y,
                       constraints=[{"type": "ineq", "fun": lambda z: b - A @ z, "jac": lambda z: -A}],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        out[i] = float(np.linalg.norm(res.x - y))
    return out


def dist_point_to_polyunion(x, U: PolyUnion) -> float:
    """min over parts of the projection distance from x."""
    if len(U) == 0:
        raise EmptyPolytopeError("distance to an empty union")
    x = np.asarray(x, dtype=float)
    if U.contains_points(x[None, :])[0]:
        return 0.0
    return float(min(dist_points_to_polytope(x[None, :], p)[0] for p in U.parts))


def _facet_samples(P: HPolytope, nsamples: int) -> tuple[np.ndarray, np.ndarray]:
    """Points on every facet of P and the outward normal of the facet they lie on."""
    v = P.vertices
    n = P.dim
    A, b, _ = _normalize_rows(P.A, P.b)
    if n == 2 and len(v) > 2:
        t = np.linspace(0.0, 1.0, nsamples)
        p0, p1 = v, np.roll(v, -1, axis=0)
        pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
        mid = 0.5 * (p0 + p1)
        fid = np.argmin(np.abs(mid @ A.T - b), axis=1)
        normals = np.repeat(A[fid], nsamples, axis=0)
        return pts.reshape(-1, 2), normals
    rng = np.random.default_rng(0)
    scale = max(1.0, float(np.max(np.abs(v))))
    all_pts, all_normals = [], []
    for i in range(len(A)):
        fv = v[np.abs(v @ A[i] - b[i]) <= REDUNDANCY_TOL * scale]
        if len(fv) == 0:
            continue
        w = rng.dirichlet(np.ones(len(fv)), size=nsamples)
        pts = np.vstack([fv, w @ fv])
        all_pts.append(pts)
        all_normals.append(np.repeat(A[i:i + 1], len(pts), axis=0))
    return np.vstack(all_pts), np.vstack(all_normals)


def boundary_samples(U: PolyUnion, nsamples: int = BOUNDARY_SAMPLES) -> np.ndarray:
    """Sample the boundary of a union of polytopes.

    Facet samples of each part are kept only when a point nudged slightly
    outward across the facet is not inside any other part.
    """
    if len(U) == 0:
        return np.zeros((0, 0))
    if U.dim == 2:
        return _boundary_samples_2d(U, nsamples)
    lo, hi = U.bboxes()
    A_all, b_all, starts = U._stacked()
    ends = np.append(starts[1:], len(b_all))
    kept = []
    for k, P in enumerate(U.parts):
        pts, normals = _facet_samples(P, nsamples)
        probe = pts + BOUNDARY_NUDGE * normals
        plo, phi = probe.min(axis=0), probe.max(axis=0)
        cand = np.where(np.all(lo <= phi + MEMBERSHIP_TOL, axis=1) & np.all(hi >= plo - MEMBERSHIP_TOL, axis=1))[0]
        cand = cand[cand != k]
        # parts overlapping most of the probe box first, so samples die early
        overlap = np.prod(np.clip(np.minimum(hi[cand], phi) - np.maximum(lo[cand], plo), 0, None), axis=1)
        cand = cand[np.argsort(-overlap, kind="stable")]
        alive = np.arange(len(pts))
        while len(cand) and len(alive):
            batch, cand = cand[:16], cand[16:]
            rows = np.concatenate([np.arange(starts[j], ends[j]) for j in batch])
            seg = np.concatenate([[0], np.cumsum(ends[batch] - starts[batch])[:-1]])
            viol = probe[alive] @ A_all[rows].T - b_all[rows]
            inside = np.any(np.maximum.reduceat(viol, seg, axis=1) <= MEMBERSHIP_TOL, axis=1)
            if inside.any():
                alive = alive[~inside]
                if len(alive) and len(cand):
                    alo, ahi = probe[alive].min(axis=0), probe[alive].max(axis=0)
                    near = np.all(lo[cand] <= ahi + MEMBERSHIP_TOL, axis=1) & np.all(hi[cand] >= alo - MEMBERSHIP_TOL, axis=1)
                    cand = cand[near]
        kept.append(pts[alive])
    return np.vstack(kept) if kept else np.zeros((0, U.dim))


def _clip_intervals(a0, d, QA, Qb, seg):
    """Parameter intervals [t_lo, t_hi] of segments a0 + t d inside each part.

    QA, Qb hold the stacked rows of the parts, ``seg`` their start offsets.
    Returns (t_lo, t_hi, ok) arrays of shape (n_segments, n_parts).
    """
    num = Qb[None, :] - a0 @ QA.T
    nd = d @ QA.T
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / nd
    t_hi = np.minimum.reduceat(np.where(nd > 0, ratio, np.inf), seg, axis=1)
    t_lo = np.maximum.reduceat(np.where(nd < 0, ratio, -np.inf), seg, axis=1)
    dead = np.logical_or.reduceat((nd == 0) & (num < 0), seg, axis=1)
    return t_lo, t_hi, ~dead & (t_lo <= t_hi)


def _boundary_samples_2d(U: PolyUnion, nsamples: int) -> np.ndarray:
    """2-D version of boundary_samples using exact segment clipping.

    Each edge, nudged outward, is clipped against nearby parts; the covered
    parameter intervals then filter the same linspace samples the generic
    routine would test point by point. Edges found fully covered are dropped
    early, and candidate parts are visited in decreasing overlap order.
    """
    lo, hi = U.bboxes()
    A_all, b_all, starts = U._stacked()
    ends = np.append(starts[1:], len(b_all))
    t = np.linspace(0.0, 1.0, nsamples)
    kept = []
    for k, P in enumerate(U.parts):
        v = P.vertices
        if len(v) < 3:
            continue
        p0, p1 = v, np.roll(v, -1, axis=0)
        A, b, _ = _normalize_rows(P.A, P.b)
        fid = np.argmin(np.abs(0.5 * (p0 + p1) @ A.T - b), axis=1)
        a0, d = p0 + BOUNDARY_NUDGE * A[fid], p1 - p0  # nudged edges a0 + t d
        ends_pts = np.vstack([a0, a0 + d])
        elo, ehi = ends_pts.min(axis=0), ends_pts.max(axis=0)
        cand = np.where(np.all(lo <= ehi + MEMBERSHIP_TOL, axis=1) & np.all(hi >= elo - MEMBERSHIP_TOL, axis=1))[0]
        cand = cand[cand != k]
        overlap = np.prod(np.clip(np.minimum(hi[cand], ehi) - np.maximum(lo[cand], elo), 0, None), axis=1)
        cand = cand[np.argsort(-overlap, kind="stable")]
        alive = np.arange(len(v))
        partial: list[tuple[int, float, float]] = []
        while len(cand) and len(alive):
            batch, cand = cand[:64], cand[64:]
            rows = np.concatenate([np.arange(starts[j], ends[j]) for j in batch])
            seg = np.concatenate([[0], np.cumsum(ends[batch] - starts[batch])[:-1]])
            t_lo, t_hi, ok = _clip_intervals(a0[alive], d[alive], A_all[rows], b_all[rows] + MEMBERSHIP_TOL, seg)
            full = (ok & (t_lo <= 1e-12) & (t_hi >= 1 - 1e-12)).any(axis=1)
            ei, ci = np.nonzero(ok & ~full[:, None])
            partial.extend(zip(alive[ei], t_lo[ei, ci], t_hi[ei, ci]))
            if full.any():
                alive = alive[~full]
                if len(alive) and len(cand):
                    seg_pts = np.vstack([a0[alive], a0[alive] + d[alive]])
                    alo, ahi = seg_pts.min(axis=0), seg_pts.max(axis=0)
                    near = np.all(lo[cand] <= ahi + MEMBERSHIP_TOL, axis=1) & np.all(hi[cand] >= alo - MEMBERSHIP_TOL, axis=1)
                    cand = cand[near]
        covered = np.ones((len(v), nsamples), dtype=bool)
        covered[alive] = False
        if partial and len(alive):
            pe, plo, phi = (np.array(c) for c in zip(*partial))
            for e in alive:
                sel = pe == e
                if sel.any():
                    covered[e] = np.any((t[:, None] >= plo[sel] - 1e-12) & (t[:, None] <= phi[sel] + 1e-12), axis=1)
        pts = p0[:, None, :] + t[None, :, None] * d[:, None, :]
        kept.append(pts[~covered])
    return np.vstack(kept) if kept else np.zeros((0, 2))


def boundary_set_distance(U1: PolyUnion, U2: PolyUnion, nsamples: int = BOUNDARY_SAMPLES,
                          samples1: np.ndarray | None = None, samples2: np.ndarray | None = None) -> float:
    """Sampled min distance between the boundaries of two nested unions.

    Returns an upper bound on the true boundary distance that tightens as
    ``nsamples`` grows. When the boundary of U1 is not strictly inside U2 the
    result is 0.0 and a NotNestedWarning is emitted.
    """
    s1 = boundary_samples(U1, nsamples) if samples1 is None else samples1
    s2 = boundary_samples(U2, nsamples) if samples2 is None else samples2
    if len(s1) == 0 or len(s2) == 0:
        warnings.warn("empty boundary sample set", NotNestedWarning, stacklevel=2)
        return 0.0
    if not np.all(U2.contains_points(s1)):
        warnings.warn("boundary of the inner union leaves the outer union", NotNestedWarning, stacklevel=2)
        return 0.0
    d, _ = cKDTree(s2).query(s1)
    h = float(np.min(d))
    if h <= MEMBERSHIP_TOL:
        warnings.warn("boundaries touch: unions are not strictly nested", NotNestedWarning, stacklevel=2)
        return 0.0
    return h


def bounding_box(parts: Sequence[HPolytope]) -> tuple[np.ndarray, np.ndarray]:
    lo = np.min([p.vertices.min(axis=0) for p in parts], axis=0)
    hi = np.max([p.vertices.max(axis=0) for p in parts], axis=0)
    return lo, hi
