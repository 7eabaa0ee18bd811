"""Ladder-based switching law and closed-loop simulation.

The law picks, at a state x with kappa(x) = k >= 1, the smallest mode that
sends x into level k-1 for every certifying noise value (all vertices of W
for linear systems, the three upper corners for the AMR model).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .geom import MEMBERSHIP_TOL, PolyUnion, dist_point_to_polyunion
from .parallel import ordered_map
from .reach import ReachLadder


class OutsideDomain(RuntimeError):
    """The state lies outside every level of the ladder."""


class InsideTarget(RuntimeError):
    """No mode keeps a state of the target inside the ladder."""


class SwitchingLaw:
    """Minimal-index switching law over a family of nested regions.

    Args:
        levels: regions with a ``contains_points(X, tol)`` method; levels[0]
            is the target.
        sys: system exposing ``q``, ``successors`` and ``noise_vertices``.
        noise: certifying noise values; defaults to ``sys.noise_vertices()``.
    """

    def __init__(self, levels: Sequence, sys, noise: np.ndarray | None = None, tol: float = MEMBERSHIP_TOL):
        self.levels = list(levels)
        self.sys = sys
        self.noise = np.asarray(sys.noise_vertices() if noise is None else noise, dtype=float)
        self.tol = tol

    @classmethod
    def from_ladder(cls, ladder: ReachLadder, sys, **kw) -> "SwitchingLaw":
        law = cls(ladder.levels, sys, **kw)
        law.ladder = ladder
        return law

    def kappa(self, x) -> Optional[int]:
        x = np.asarray(x, dtype=float)[None, :]
        for k, level in enumerate(self.levels):
            if level.contains_points(x, self.tol)[0]:
                return k
        return None

    def maps_into(self, x, sigma: int, k: int) -> bool:
        """All certifying successors of x under sigma lie in levels[k]."""
        succ = self.sys.successors(x, sigma, self.noise)
        return bool(np.all(self.levels[k].contains_points(succ, self.tol)))

    def _first_mode(self, x, k: int) -> Optional[int]:
        for sigma in range(1, self.sys.q + 1):
            if self.maps_into(x, sigma, k):
                return sigma
        return None

    def select_mode(self, x) -> int:
        """Smallest mode moving x one level down.

        Inside the target the smallest mode keeping x in the target is used.
        If no such mode exists (the target is not invariant), x is treated as
        a member of the first level j >= 1 containing it and sent to level j-1.

        Raises:
            OutsideDomain: x is in no level.
            InsideTarget: x is in the target and no rule above applies.
        """
        x = np.asarray(x, dtype=float)
        k = self.kappa(x)
        if k is None:
            raise OutsideDomain(f"x={x.tolist()} is outside the computed domain")
        if k >= 1:
            sigma = self._first_mode(x, k - 1)
            if sigma is None:
                raise RuntimeError(f"no certified mode at x={x.tolist()} (kappa={k})")
            return sigma
        sigma = self._first_mode(x, 0)
        if sigma is not None:
            return sigma
        for j in range(1, len(self.levels)):
            if self.levels[j].contains_points(x[None, :], self.tol)[0]:
                sigma = self._first_mode(x, j - 1)
                if sigma is not None:
                    return sigma
        raise InsideTarget(f"no mode keeps x={x.tolist()} in the ladder")

    def mode_field(self, points) -> np.ndarray:
        """select_mode over many points; 0 where the law is undefined."""
        out = np.zeros(len(points), dtype=int)
        for i, x in enumerate(np.asarray(points, dtype=float)):
            try:
                out[i] = self.select_mode(x)
            except (OutsideDomain, InsideTarget):
                out[i] = 0
        return out


@dataclass
class Trajectory:
    states: np.ndarray
    modes: list
    noises: np.ndarray
    L_values: list
    seed: int
    entered_at: Optional[int] = None
    remained: bool = False
    violation: Optional[str] = None
    error: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.entered_at is not None and self.remained and self.violation is None and self.error is None

    def max_L_increase(self, target=None) -> float:
        """Largest L(x+) - L(x) over steps whose start state is outside target."""
        L = np.asarray(self.L_values, dtype=float)
        if len(L) < 2:
            return float("-inf")
        inc = np.diff(L)
        if target is not None:
            outside = ~target.contains_points(self.states[:-1])
            inc = inc[outside[:len(inc)]]
        return float(inc.max()) if len(inc) else float("-inf")


def simulate(law: SwitchingLaw, x0, steps: int, seed: int, target=None,
             lfun: Callable | None = None) -> Trajectory:
    """Closed-loop run with noise drawn uniformly from W.

    ``target`` (default: levels[0]) is monitored: the trajectory records the
    first step it is inside and whether it stays there to the horizon.

    Raises:
        OutsideDomain: x0 (or a later state) is not in the ladder.
    """
    sys = law.sys
    target = law.levels[0] if target is None else target
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float)
    states, modes, noises = [x], [], []
    violation = None
    for _ in range(steps):
        sigma = law.select_mode(x)
        w = sys.sample_noise(rng)
        x = sys.step(x, sigma, w)
        modes.append(sigma)
        noises.append(w)
        states.append(x)
        if not sys.in_domain(x):
            violation = f"state {x.tolist()} left the constraint set at step {len(modes)}"
            break
    S = np.array(states)
    L_values = [float(lfun(s)) for s in S] if lfun is not None else [float("nan")] * len(S)
    inside = target.contains_points(S, law.tol)
    entered = int(np.argmax(inside)) if inside.any() else None
    remained = bool(entered is not None and inside[entered:].all())
    return Trajectory(states=S, modes=modes, noises=np.array(noises).reshape(-1, S.shape[1]),
                      L_values=L_values, seed=int(seed), entered_at=entered, remained=remained,
                      violation=violation)


@dataclass
class BatchSummary:
    n_runs: int
    converged: int
    fraction_converged: float
    max_final_distance: float
    max_L_increase: float
    violations: int
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def finite(v):
            return v if np.isfinite(v) else None
        return {"n_runs": self.n_runs, "converged": self.converged,
                "fraction_converged": self.fraction_converged,
                "max_final_distance": finite(self.max_final_distance),
                "max_L_increase": finite(self.max_L_increase), "violations": self.violations,
                "errors": self.errors}


def batch_simulate(law: SwitchingLaw, x0, steps: int, n_runs: int, base_seed: int = 0,
                   target=None, lfun: Callable | None = None):
    """Runs with seeds base_seed + i. Per-run errors are collected, not raised.

    Returns:
        (list of Trajectory, BatchSummary). Failed runs hold a one-state
        trajectory with ``error`` set.
    """
    target_u = law.levels[0] if target is None else target

    def one(i):
        seed = base_seed + i
        try:
            return simulate(law, x0, steps, seed, target=target_u, lfun=lfun)
        except (OutsideDomain, InsideTarget, RuntimeError) as exc:
            S = np.asarray(x0, dtype=float)[None, :]
            L0 = [float(lfun(S[0]))] if lfun is not None else [float("nan")]
            return Trajectory(states=S, modes=[], noises=np.zeros((0, S.shape[1])), L_values=L0,
                              seed=seed, error=f"{type(exc).__name__}: {exc}")

    trajs = ordered_map(one, range(n_runs))
    dists = []
    for tr in trajs:
        if isinstance(target_u, PolyUnion):
            dists.append(dist_point_to_polyunion(tr.states[-1], target_u))
        else:
            dists.append(0.0 if target_u.contains_points(tr.states[-1:])[0] else float("inf"))
    incs = [tr.max_L_increase(target_u) for tr in trajs if lfun is not None]
    summary = BatchSummary(
        n_runs=n_runs,
        converged=sum(tr.converged for tr in trajs),
        fraction_converged=sum(tr.converged for tr in trajs) / n_runs if n_runs else 0.0,
        max_final_distance=float(max(dists)) if dists else 0.0,
        max_L_increase=float(max(incs)) if incs else float("-inf"),
        violations=sum(tr.violation is not None for tr in trajs),
        errors=[[tr.seed, tr.error] for tr in trajs if tr.error],
    )
    return trajs, summary


# ---------------------------------------------------------------------------
# export


def _fmt(v) -> str:
    return repr(float(v))


def write_trajectory_csv(tr: Trajectory, path) -> Path:
    """Columns step, x1, x2, mode, w1, w2, L; the last row has no mode or noise."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "x1", "x2", "mode", "w1", "w2", "L"])
        for t, x in enumerate(tr.states):
            if t < len(tr.modes):
                row = [t, _fmt(x[0]), _fmt(x[1]), tr.modes[t], _fmt(tr.noises[t][0]), _fmt(tr.noises[t][1])]
            else:
                row = [t, _fmt(x[0]), _fmt(x[1]), "", "", ""]
            wr.writerow(row + [_fmt(tr.L_values[t])])
    return path


def read_trajectory_csv(path) -> np.ndarray:
    """States (x1, x2) of an exported trajectory."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["x1"]), float(r["x2"])] for r in rows])


def export_batch(trajs: list, summary: BatchSummary, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = [write_trajectory_csv(tr, d / f"run_{i:03d}.csv") for i, tr in enumerate(trajs)]
    p = d / "summary.json"
    p.write_text(json.dumps(summary.to_dict(), indent=1) + "\n")
    written.append(p)
    return written

