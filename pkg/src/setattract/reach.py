"""Robust controllable sets, the set-iteration algorithm and the ladder machinery.

A ``ReachLadder`` holds levels[0] = {Omega0} and levels[k] = C^k(Omega0) as
per-part unions. From it we get the h-function (boundary gaps between
consecutive levels), the kappa index (first level containing a state) and the
piecewise-constant L-function.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geom import (BOUNDARY_SAMPLES, DEFAULT_MARGIN, MEMBERSHIP_TOL, HPolytope, NotNestedWarning,
                   PolyUnion, boundary_samples, boundary_set_distance, dist_points_to_polytope,
                   erode, intersect, linear_preimage, union_covers_with_margin)
from .parallel import ordered_map
from .sysmodel import LinearSwitchedSystem, _check_mode


class AllPartsEroded(RuntimeError):
    """Every part of the target vanished under erosion by W."""


# ---------------------------------------------------------------------------
# one-step controllable sets


@dataclass
class _Expansion:
    parts: list          # nonempty, full-dimensional children
    provenance: list     # (mode, parent index) per child
    n_empty: int         # children that came out empty or degenerate


def _expand(sys: LinearSwitchedSystem, target: PolyUnion, modes) -> _Expansion:
    Xh = sys.X.to_hpolytope()
    eroded = ordered_map(lambda P: erode(P, sys.W), target.parts)

    def child(job):
        sigma, i = job
        E = eroded[i]
        if E.is_empty():
            return None
        C = intersect(linear_preimage(sys.matrix(sigma), E), Xh)
        if C.is_empty() or not C.is_full_dimensional():
            return None
        return C

    jobs = [(sigma, i) for sigma in modes for i in range(len(target))]
    children = ordered_map(child, jobs)
    parts, prov = [], []
    for job, C in zip(jobs, children):
        if C is not None:
            parts.append(C)
            prov.append(job)
    return _Expansion(parts, prov, len(jobs) - len(parts))


def controllable_set_mode(sys: LinearSwitchedSystem, target: PolyUnion, sigma) -> PolyUnion:
    """A_sigma^{-1}(P ⊖ W) ∩ X for every part P of the target."""
    sigma = _check_mode(sigma, sys.q)
    ex = _expand(sys, target, [sigma])
    if not ex.parts:
        raise AllPartsEroded(f"no part of the target survives erosion for mode {sigma}")
    return PolyUnion(ex.parts)


def controllable_set(sys: LinearSwitchedSystem, target: PolyUnion) -> PolyUnion:
    """Union over modes of the per-mode controllable sets."""
    ex = _expand(sys, target, range(1, sys.q + 1))
    if not ex.parts:
        raise AllPartsEroded("no part of the target survives erosion")
    return PolyUnion(ex.parts)


def covers(inner: PolyUnion, outer: PolyUnion, eps: float, within: HPolytope | None = None) -> bool:
    """Every part of ``inner`` (inflated by eps) is covered by ``outer``."""
    return all(union_covers_with_margin(P, outer, eps, within=within) for P in inner.parts)


def _with_witnesses(omega: PolyUnion, inner) -> PolyUnion:
    """omega's parts plus convex witnesses verified to lie inside omega.

    The per-part controllable set of a union is an inner approximation of the
    exact one; any convex P ⊆ omega gives C(σ, P) ⊆ C(σ, omega), so adding such
    sets tightens the check without losing soundness.
    """
    extra = [P.canonical() for P in inner]
    for P in extra:
        if not union_covers_with_margin(P, omega, 0.0):
            raise ValueError("witness set is not contained in omega")
    return PolyUnion(omega.parts + tuple(extra))


def is_rcis(sys: LinearSwitchedSystem, omega: PolyUnion, inner=()) -> bool:
    """Sufficient check omega ⊆ C(omega), with C computed part by part.

    ``inner`` optionally lists convex sets contained in omega (for example the
    seed of the iteration that produced omega); they join the target parts.
    """
    if len(omega) == 0:
        return True
    try:
        C = controllable_set(sys, _with_witnesses(omega, inner))
    except AllPartsEroded:
        return False
    return covers(omega, C, 0.0)


def is_rccs(sys: LinearSwitchedSystem, omega: PolyUnion, eps: float = DEFAULT_MARGIN,
            inner=()) -> bool:
    """omega ⊂ int C(omega), interior taken with an explicit margin eps > 0."""
    if eps <= 0:
        raise ValueError("contractivity needs a positive margin")
    if len(omega) == 0:
        return True
    try:
        C = controllable_set(sys, _with_witnesses(omega, inner))
    except AllPartsEroded:
        return False
    return covers(omega, C, eps)


# ---------------------------------------------------------------------------
# ladder


class ReachLadder:
    """levels[0] = {Omega0}, levels[k] = C(levels[k-1]) computed part by part.

    ``computed_counts[k]`` counts every per-mode preimage evaluated at level k,
    including those that came out empty and are carried as placeholders, so it
    is q times the previous computed count. ``nonempty_counts[k]`` is the number
    of parts actually stored.
    """

    def __init__(self, omega0: HPolytope, nsamples: int = BOUNDARY_SAMPLES):
        omega0 = omega0.canonical()
        if omega0.is_empty():
            raise ValueError("Omega0 must be nonempty")
        self.omega0 = omega0
        self.levels: list[PolyUnion] = [PolyUnion([omega0])]
        self.provenance: list[list[tuple[int, int]]] = [[]]
        self.computed_counts: list[int] = [1]
        self.nonempty_counts: list[int] = [1]
        self.dropped = 0
        self.nsamples = nsamples
        self._cumulative: list[Optional[PolyUnion]] = [None]
        self._h: dict[int, float] = {0: 0.0}
        self._bsamples: dict[int, np.ndarray] = {}

    @property
    def K(self) -> int:
        """Index of the last computed level."""
        return len(self.levels) - 1

    def extend(self, sys: LinearSwitchedSystem) -> PolyUnion:
        ex = _expand(sys, self.levels[-1], range(1, sys.q + 1))
        if not ex.parts:
            raise AllPartsEroded(f"level {self.K + 1} is empty")
        level = PolyUnion(ex.parts)
        self.levels.append(level)
        self.provenance.append(ex.provenance)
        self.computed_counts.append(sys.q * self.computed_counts[-1])
        self.nonempty_counts.append(len(level))
        self.dropped += ex.n_empty
        self._cumulative.append(None)
        return level

    def cumulative(self, k: int) -> PolyUnion:
        """Union of levels 1..k."""
        if not 1 <= k <= self.K:
            raise IndexError(k)
        if self._cumulative[k] is None:
            prev = self.cumulative(k - 1).parts if k > 1 else ()
            self._cumulative[k] = PolyUnion(prev + self.levels[k].parts)
        return self._cumulative[k]

    def cumulative_computed(self, k: int) -> int:
        return int(sum(self.computed_counts[1:k + 1]))

    def cumulative_nonempty(self, k: int) -> int:
        return int(sum(self.nonempty_counts[1:k + 1]))

    def boundary(self, k: int) -> np.ndarray:
        if k not in self._bsamples:
            self._bsamples[k] = boundary_samples(self.levels[k], self.nsamples)
        return self._bsamples[k]

    def h(self, k: int) -> float:
        return h_function(self, k)

    @property
    def h_values(self) -> list[float]:
        return [self.h(k) for k in range(self.K + 1)]

    def known_h_values(self) -> dict[int, float]:
        return dict(sorted(self._h.items()))


def h_function(ladder: ReachLadder, k: int) -> float:
    """Sampled distance between the boundaries of levels k-1 and k (h(0) = 0).

    Returns 0.0 with a NotNestedWarning when level k-1 is not strictly inside
    level k.
    """
    if not 0 <= k <= ladder.K:
        raise IndexError(f"h({k}) requested for a ladder with {ladder.K} levels")
    if k not in ladder._h:
        ladder._h[k] = boundary_set_distance(ladder.levels[k - 1], ladder.levels[k],
                                             samples1=ladder.boundary(k - 1),
                                             samples2=ladder.boundary(k))
    return ladder._h[k]


def kappa(ladder: ReachLadder, x) -> Optional[int]:
    """Smallest k with x in levels[k]; None when x is outside every level."""
    k = kappa_points(ladder, np.asarray(x, dtype=float)[None, :])[0]
    return None if k < 0 else int(k)


def kappa_points(ladder: ReachLadder, X, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Vectorised kappa; -1 marks points outside the computed domain."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.full(len(X), -1, dtype=int)
    todo = np.arange(len(X))
    for k, level in enumerate(ladder.levels):
        if len(todo) == 0:
            break
        hit = level.contains_points(X[todo], tol)
        out[todo[hit]] = k
        todo = todo[~hit]
    return out


def domain_approximation(ladder: ReachLadder) -> PolyUnion:
    """Union of levels 1..K, the truncated inner approximation of the domain."""
    if ladder.K < 1:
        return ladder.levels[0]
    return ladder.cumulative(ladder.K)


class LFunction:
    """Piecewise-constant L built on a ladder.

    L is 0 on Omega0, equals the sampled distance from the boundary of level
    kappa(x) to Omega0 inside the domain, and L_bar outside. L_bar defaults to
    the largest level value plus the last h value.
    """

    def __init__(self, ladder: ReachLadder, L_bar: float | None = None):
        self.ladder = ladder
        self._values: dict[int, float] = {0: 0.0}
        self._L_bar = L_bar

    def level_value(self, k: int) -> float:
        if k not in self._values:
            if not 1 <= k <= self.ladder.K:
                raise IndexError(k)
            pts = self.ladder.boundary(k)
            d = np.inf
            for s in range(0, len(pts), 2048):
                d = min(d, float(dist_points_to_polytope(pts[s:s + 2048], self.ladder.omega0).min()))
            self._values[k] = d
        return self._values[k]

    @property
    def level_values(self) -> list[float]:
        return [self.level_value(k) for k in range(self.ladder.K + 1)]

    @property
    def L_bar(self) -> float:
        if self._L_bar is None:
            K = self.ladder.K
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotNestedWarning)
                last_h = self.ladder.h(K) if K >= 1 else 0.0
            self._L_bar = max(self.level_values) + last_h
        return self._L_bar

    def __call__(self, x) -> float:
        return L_value(self, x)


def L_value(lf: LFunction, x) -> float:
    k = kappa(lf.ladder, x)
    if k is None:
        return lf.L_bar
    return lf.level_value(k)


# ---------------------------------------------------------------------------
# set iteration


@dataclass
class Certificate:
    """Outcome of the set iteration.

    kind is "RCCS" when the reference set is covered with margin, "RCIS" when
    a run with margin 0 finds an invariant cover, and "Unsuccessful" otherwise.
    ``rcis_k`` records the first k at which the cumulative union covers Omega0
    (so the cumulative union is a robust control invariant set), whatever the
    final verdict. ``polytope_count`` counts parts up to ``k_found`` and
    ``domain_count`` up to the last computed level.
    """

    kind: str
    k_found: int
    margin: float
    polytope_count: int
    nonempty_count: int = 0
    domain_count: int = 0
    k_stop: int = 0
    rcis_k: Optional[int] = None
    rcis_count: Optional[int] = None
    reference: str = "omega0"
    dropped: int = 0
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("RCIS", "RCCS", "Unsuccessful"):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if self.kind == "RCCS" and not self.margin > 0:
            raise ValueError("an RCCS certificate needs a positive margin")

    @property
    def success(self) -> bool:
        return self.kind != "Unsuccessful"

    def to_dict(self) -> dict:
        return asdict(self)


def algorithm1(sys: LinearSwitchedSystem, omega0: HPolytope, k_stop: int,
               eps: float = DEFAULT_MARGIN, within: HPolytope | None = None):
    """Iterate Omega_k = ⋃_σ A_σ^{-1}(Omega_{k-1} ⊖ W) ∩ X up to k_stop.

    The reference set starts as Omega0. If Omega0 ⊆ Omega_1 it is invariant
    and is tested for Omega0 ⊂ int(⋃_{j<=k} Omega_j) at every k. Otherwise the
    first k where the cumulative union covers Omega0 yields an invariant set,
    which becomes the reference tested at later iterations. With eps == 0 the
    run stops at the first invariant cover.

    Returns:
        (Certificate, ReachLadder). The ladder is complete up to the last
        iteration in every case.
    """
    if int(k_stop) != k_stop or k_stop < 1:
        raise ValueError("k_stop must be a positive integer")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    ladder = ReachLadder(omega0)
    omega0_u = ladder.levels[0]
    ref = omega0_u
    ref_name = "omega0"
    rcis_k = rcis_count = None
    kind = "Unsuccessful"
    k_found = k_stop
    diagnostics = []
    exhausted = False
    for k in range(1, k_stop + 1):
        try:
            ladder.extend(sys)
        except AllPartsEroded as exc:
            diagnostics.append(f"iteration {k}: {exc}")
            k_found, exhausted = k - 1, True
            break
        cum = ladder.cumulative(k)
        if rcis_k is None and covers(omega0_u, cum, 0.0, within):
            rcis_k, rcis_count = k, ladder.cumulative_computed(k)
            if eps == 0:
                kind, k_found = "RCIS", k
                break
            if k > 1:
                ref, ref_name = cum, f"cumulative_{k}"
                continue
        if rcis_k is not None and eps > 0 and covers(ref, cum, eps, within):
            kind, k_found = "RCCS", k
            break
    # keep building so that the law is defined on the whole requested ladder
    while ladder.K < k_stop and not exhausted:
        try:
            ladder.extend(sys)
        except AllPartsEroded as exc:
            diagnostics.append(f"iteration {ladder.K + 1}: {exc}")
            exhausted = True
    if ladder.dropped:
        diagnostics.append(f"{ladder.dropped} empty or degenerate parts dropped")
    k_last = max(k_found, 1) if ladder.K >= 1 else 0
    cert = Certificate(kind=kind, k_found=k_found, margin=float(eps),
                       polytope_count=ladder.cumulative_computed(k_last) if k_last else 0,
                       nonempty_count=ladder.cumulative_nonempty(k_last) if k_last else 0,
                       domain_count=ladder.cumulative_computed(ladder.K) if ladder.K else 0,
                       k_stop=int(k_stop), rcis_k=rcis_k, rcis_count=rcis_count,
                       reference=ref_name, dropped=ladder.dropped, diagnostics=diagnostics)
    return cert, ladder


# ---------------------------------------------------------------------------
# persistence


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def save_ladder(ladder: ReachLadder, directory, certificate: Certificate | None = None,
                extra: dict | None = None) -> list[Path]:
    """Write level_k.json per level plus ladder_meta.json. Returns written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for k, level in enumerate(ladder.levels):
        body = level.to_dict()
        body["provenance"] = [list(p) for p in ladder.provenance[k]]
        p = d / f"level_{k}.json"
        _dump(body, p)
        written.append(p)
    meta = {
        "omega0": ladder.omega0.to_dict(),
        "levels": ladder.K,
        "computed_counts": ladder.computed_counts,
        "nonempty_counts": ladder.nonempty_counts,
        "cumulative_computed": [ladder.cumulative_computed(k) for k in range(ladder.K + 1)],
        "dropped": ladder.dropped,
        "h_values": {str(k): v for k, v in ladder.known_h_values().items()},
        "certificate": certificate.to_dict() if certificate else None,
    }
    if extra:
        meta.update(extra)
    p = d / "ladder_meta.json"
    _dump(meta, p)
    written.append(p)
    return written


def load_ladder(directory) -> tuple[ReachLadder, Optional[Certificate]]:
    d = Path(directory)
    meta_path = d / "ladder_meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(meta_path)
    meta = json.loads(meta_path.read_text())
    ladder = ReachLadder(HPolytope.from_dict(meta["omega0"]))
    for k in range(1, meta["levels"] + 1):
        body = json.loads((d / f"level_{k}.json").read_text())
        ladder.levels.append(PolyUnion.from_dict(body))
        ladder.provenance.append([tuple(p) for p in body.get("provenance", [])])
        ladder._cumulative.append(None)
    ladder.computed_counts = list(meta["computed_counts"])
    ladder.nonempty_counts = list(meta["nonempty_counts"])
    ladder.dropped = meta["dropped"]
    ladder._h.update({int(k): v for k, v in meta.get("h_values", {}).items()})
    cert = Certificate(**meta["certificate"]) if meta.get("certificate") else None
    return ladder, cert
