"""Grid-based contractivity certificates for the AMR model.

Grid points on the triangle 0 <= s <= b <= b_max are labelled Inside when
some mode sends them into the target for each of the three worst-case noise
corners. The convex hull of the Inside points then stands in for the
controllable set; growing the target to that hull and repeating gives a
nested family approximating the domain of attraction.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geom import DEFAULT_MARGIN, MEMBERSHIP_TOL, VPolytope, convex_hull, hrep
from .sysmodel import AMRSwitchedSystem, amr_vector_field


class TooFewInsidePoints(RuntimeError):
    """Fewer than three Inside points: the hull is degenerate."""


class NotCertified(RuntimeError):
    """The seed set was not certified, so domain growth is not meaningful."""


@dataclass(frozen=True)
class GridSpec:
    b_max: float
    per_axis: int = 150

    def __post_init__(self):
        if int(self.per_axis) != self.per_axis or self.per_axis < 2:
            raise ValueError("per_axis must be an integer >= 2")
        if not self.b_max > 0:
            raise ValueError("b_max must be positive")

    @property
    def n_points(self) -> int:
        return self.per_axis * (self.per_axis + 1) // 2

    @property
    def spacing(self) -> float:
        return self.b_max / (self.per_axis - 1)


def make_grid(spec: GridSpec) -> np.ndarray:
    """Uniform triangular grid, row-major in b then s: (b_i, s_j) for j <= i."""
    h = spec.spacing
    i, j = np.tril_indices(spec.per_axis)
    return np.column_stack([i * h, j * h])


def corner_uncertainties(wb: float, ws: float) -> np.ndarray:
    """w1 = (wb, 0), w2 = (0, ws), w3 = (wb, ws)."""
    if wb < 0 or ws < 0:
        raise ValueError("uncertainty bounds must be nonnegative")
    return np.array([[wb, 0.0], [0.0, ws], [wb, ws]], dtype=float)


# -- target regions ----------------------------------------------------------


class ThresholdRegion:
    """{(b, s) : b <= b0}. The seed target Omega0."""

    def __init__(self, b0: float, tol: float = MEMBERSHIP_TOL):
        self.b0 = float(b0)
        self.tol = tol * max(1.0, abs(self.b0))

    def contains_points(self, X, tol: float | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X[:, 0] <= self.b0 + self.tol


class EmptyRegion:
    def contains_points(self, X, tol: float | None = None) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(X)), dtype=bool)


class HullRegion:
    """conv(hull) ∪ {b <= b0}: the previous iteration's Inside region."""

    def __init__(self, hull: VPolytope, b0: float, tol: float = MEMBERSHIP_TOL):
        self.hull = hull
        self.threshold = ThresholdRegion(b0, tol)
        H = hrep(hull)
        self.A, self.b = H.A / np.linalg.norm(H.A, axis=1, keepdims=True), H.b / np.linalg.norm(H.A, axis=1)
        self.tol = tol * max(1.0, float(np.max(np.abs(hull.vertices))))

    def contains_points(self, X, tol: float | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        in_hull = np.all(X @ self.A.T <= self.b + self.tol, axis=1)
        return in_hull | self.threshold.contains_points(X)


# -- classification ----------------------------------------------------------


@dataclass
class Classification:
    points: np.ndarray
    modes: np.ndarray  # 0 = Outside, otherwise the smallest certifying mode

    @property
    def inside(self) -> np.ndarray:
        return self.modes > 0

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    def labels(self) -> list[str]:
        return ["Inside" if m else "Outside" for m in self.modes]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["b", "s", "label", "mode"])
            for (b, s), m in zip(self.points, self.modes):
                wr.writerow([repr(float(b)), repr(float(s)), "Inside" if m else "Outside", int(m) if m else ""])
        return path


def classify_points(sys: AMRSwitchedSystem, X, target) -> np.ndarray:
    """Smallest mode sending each point into the target for all corners (0 if none)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    corners = sys.noise_vertices()
    modes = np.zeros(len(X), dtype=int)
    for sigma in range(sys.q, 0, -1):  # descending so the smallest mode wins
        base = X + sys.delta * amr_vector_field(sys.params, X, sigma, check=False)
        ok = np.ones(len(X), dtype=bool)
        for w in corners:
            ok &= target.contains_points(base + w)
        modes[ok] = sigma
    return modes


def classify_point(sys: AMRSwitchedSystem, x, target) -> tuple[str, Optional[int]]:
    m = int(classify_points(sys, np.asarray(x, dtype=float)[None, :], target)[0])
    return ("Inside", m) if m else ("Outside", None)


def _hull_of_inside(cls: Classification) -> VPolytope:
    pts = cls.points[cls.inside]
    if len(pts) < 3:
        raise TooFewInsidePoints(f"only {len(pts)} Inside points")
    return convex_hull(pts)


def hull_contains(hull: VPolytope, X, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    H = hrep(hull)
    nrm = np.linalg.norm(H.A, axis=1)
    scale = max(1.0, float(np.max(np.abs(hull.vertices))))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.all(X @ (H.A / nrm[:, None]).T <= H.b / nrm + tol * scale, axis=1)


def seed_vertices(b0: float, eps: float) -> np.ndarray:
    """Vertices of Omega0 = {0 <= s <= b <= b0} pushed out by eps across b = b0.

    The other two sides of the triangle lie on the boundary of the domain, so
    interior is taken relative to the domain.
    """
    c = b0 + eps
    return np.array([[0.0, 0.0], [c, 0.0], [c, c]])


def certify_rccs_grid(sys: AMRSwitchedSystem, b0: float, spec: GridSpec, eps: float = DEFAULT_MARGIN):
    """Certify that C(Omega0) contains Omega0 in its (relative) interior.

    Returns:
        (certified, Classification, hull of the Inside points).

    Raises:
        ValueError: b0 >= spec.b_max.
        TooFewInsidePoints: the Inside set spans no area.
    """
    if not b0 < spec.b_max:
        raise ValueError(f"b0={b0} must be below b_max={spec.b_max}")
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    pts = make_grid(spec)
    cls = Classification(pts, classify_points(sys, pts, ThresholdRegion(b0)))
    hull = _hull_of_inside(cls)
    ok = bool(np.all(hull_contains(hull, seed_vertices(b0, eps))))
    return ok, cls, hull


@dataclass
class HullLadder:
    hulls: list
    inside_counts: list
    seed_b0: float
    converged_at: Optional[int] = None
    last: Optional[Classification] = field(default=None, repr=False)

    def nesting_violations(self, tol: float = MEMBERSHIP_TOL) -> int:
        """Vertices of hull k-1 falling outside hull k, summed over k."""
        bad = 0
        for k in range(1, len(self.hulls)):
            bad += int(np.sum(~hull_contains(self.hulls[k], self.hulls[k - 1].vertices, tol)))
        return bad


def grow_domain_grid(sys: AMRSwitchedSystem, b0: float, spec: GridSpec, k_max: int,
                     eps: float = DEFAULT_MARGIN, callback=None) -> HullLadder:
    """Repeat the classification with target conv(Inside_{k-1}) ∪ Omega0.

    Stops at k_max or when an iteration adds no Inside point (fixed point).
    ``callback(k, classification, hull)`` is called after every iteration.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    ok, cls, hull = certify_rccs_grid(sys, b0, spec, eps)
    if not ok:
        raise NotCertified(f"Omega0 with b0={b0} is not certified on this grid")
    ladder = HullLadder([hull], [cls.n_inside], float(b0), last=cls)
    if callback:
        callback(1, cls, hull)
    pts = cls.points
    for k in range(2, k_max + 1):
        cls = Classification(pts, classify_points(sys, pts, HullRegion(hull, b0)))
        if cls.n_inside == ladder.inside_counts[-1]:
            ladder.converged_at = k - 1
            break
        hull = _hull_of_inside(cls)
        ladder.hulls.append(hull)
        ladder.inside_counts.append(cls.n_inside)
        ladder.last = cls
        if callback:
            callback(k, cls, hull)
    return ladder


def corner_sufficiency(sys: AMRSwitchedSystem, target, points, modes, n_noise: int = 1000,
                       seed: int = 0) -> tuple[float, list]:
    """Dense-noise check of corner-certified labels.

    For each point with its certified mode, draws n_noise uniform noises from
    W and tests whether every successor lies in the target.

    Returns:
        (fraction of (point, noise) pairs landing in the target, list of
        violations as (b, s, mode, w_b, w_s)).
    """
    rng = np.random.default_rng(seed)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    good = 0
    total = 0
    violations = []
    for x, m in zip(points, modes):
        W = sys.sample_noise(rng, n_noise)
        succ = sys.successors(x, int(m), W)
        ok = target.contains_points(succ)
        good += int(ok.sum())
        total += len(ok)
        for w in W[~ok]:
            violations.append((float(x[0]), float(x[1]), int(m), float(w[0]), float(w[1])))
    return (good / total if total else 1.0), violations


# -- export -------------------------------------------------------------------


def write_hull_json(hull: VPolytope, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(hull.to_dict()) + "\n")
    return path


def write_certificate(path, b0: float, eps: float, verdict: bool, spec: GridSpec, **extra) -> Path:
    path = Path(path)
    body = {"b0": float(b0), "eps": float(eps), "verdict": "RCCS" if verdict else "Unsuccessful",
            "b_max": spec.b_max, "per_axis": spec.per_axis, "n_points": spec.n_points}
    body.update(extra)
    path.write_text(json.dumps(body, indent=1) + "\n")
    return path
