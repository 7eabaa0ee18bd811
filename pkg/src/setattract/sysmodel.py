"""Uncertain switched systems: linear modes and the two-mode AMR model.

Modes are labelled 1..q throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import MEMBERSHIP_TOL, SINGULAR_TOL, Box, HPolytope


class ModelError(ValueError):
    """Invalid system description or step arguments."""


class ModeOutOfRange(ModelError):
    pass


class UncertaintyOutOfSet(ModelError):
    pass


class NegativeLoad(ModelError):
    pass


class DomainViolation(ModelError):
    pass


def _check_mode(sigma, q: int) -> int:
    if isinstance(sigma, (bool, np.bool_)) or int(sigma) != sigma or not 1 <= int(sigma) <= q:
        raise ModeOutOfRange(f"mode {sigma!r} not in 1..{q}")
    return int(sigma)


@dataclass(frozen=True, eq=False)
class LinearSwitchedSystem:
    """x+ = A_sigma x + w with x in the box X and w in the polytope W."""

    modes: tuple
    X: Box
    W: HPolytope

    def __post_init__(self):
        mats = tuple(np.array(M, dtype=float) for M in self.modes)
        if len(mats) < 2:
            raise ModelError("a switched system needs at least two modes")
        n = self.X.dim
        for i, M in enumerate(mats, start=1):
            if M.shape != (n, n):
                raise ModelError(f"mode {i} has shape {M.shape}, expected {(n, n)}")
            if abs(np.linalg.det(M)) <= SINGULAR_TOL * max(np.linalg.norm(M, 2) ** n, 1e-300):
                raise ModelError(f"mode {i} matrix is singular")
            M.setflags(write=False)
        W = self.W.canonical()
        if W.is_empty() or W.dim != n:
            raise ModelError("W must be a nonempty polytope of the state dimension")
        if not np.all(self.X.lower < 0) or not np.all(self.X.upper > 0):
            raise ModelError("X must contain the origin in its interior")
        if not np.all(W.b > 0):
            raise ModelError("W must contain the origin in its interior")
        object.__setattr__(self, "modes", mats)
        object.__setattr__(self, "W", W)

    @property
    def q(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.X.dim

    def matrix(self, sigma) -> np.ndarray:
        return self.modes[_check_mode(sigma, self.q) - 1]

    def noise_vertices(self) -> np.ndarray:
        """Noise values that certify a mode: all vertices of W."""
        return self.W.vertices

    def step(self, x, sigma, w, check: bool = True) -> np.ndarray:
        return step_linear(self, x, sigma, w, check=check)

    def successors(self, x, sigma, W_pts) -> np.ndarray:
        """Successors of x under mode sigma for each row of W_pts (no checks)."""
        return self.matrix(sigma) @ np.asarray(x, dtype=float) + W_pts

    def in_domain(self, x) -> bool:
        return self.X.contains(x, MEMBERSHIP_TOL)

    def sample_noise(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Uniform draws from W: per-coordinate for boxes, rejection otherwise."""
        return _uniform_in_polytope(self.W, rng, size)

    def to_dict(self) -> dict:
        return {"type": "linear", "modes": [M.tolist() for M in self.modes],
                "X": self.X.to_dict(), "W": self.W.to_dict()}


def _uniform_in_polytope(P: HPolytope, rng: np.random.Generator, size: int | None) -> np.ndarray:
    lo, hi = P.bbox()
    m = 1 if size is None else size
    box = HPolytope.from_box(lo, hi)
    is_box = len(P.A) == len(box.A) and np.allclose(P.A, box.A) and np.allclose(P.b, box.b)
    if is_box:
        out = rng.uniform(lo, hi, size=(m, len(lo)))
    else:
        chunks, got = [], 0
        while got < m:
            cand = rng.uniform(lo, hi, size=(2 * (m - got) + 8, len(lo)))
            cand = cand[P.contains(cand)]
            chunks.append(cand)
            got += len(cand)
        out = np.vstack(chunks)[:m]
    return out[0] if size is None else out


def step_linear(sys: LinearSwitchedSystem, x, sigma, w, check: bool = True) -> np.ndarray:
    """A_sigma x + w. The successor is not clipped to X."""
    M = sys.matrix(sigma)
    w = np.asarray(w, dtype=float)
    if check and not sys.W.contains(w, MEMBERSHIP_TOL):
        raise UncertaintyOutOfSet(f"w={w.tolist()} is not in W")
    return M @ np.asarray(x, dtype=float) + w


# ---------------------------------------------------------------------------
# AMR model


@dataclass(frozen=True)
class AMRParams:
    """Bacterial load model parameters (rates in 1/h, loads in cells)."""

    alpha: float
    N: float
    beta: float
    K: float
    D_M: float
    mu: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ModelError("alpha must be positive")
        if not self.beta > self.alpha:
            raise ModelError("beta must exceed alpha")
        if not self.D_M > self.alpha:
            raise ModelError("D_M must exceed alpha")
        if not self.mu > 0:
            raise ModelError("mu must be positive")
        if not 0 < self.K < self.N:
            raise ModelError("K must lie in (0, N)")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "N": self.N, "beta": self.beta,
                "K": self.K, "D_M": self.D_M, "mu": self.mu}


def immune_rate(params: AMRParams, b):
    """I(b) = beta K / (K + b). Accepts scalars or arrays."""
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0):
        raise NegativeLoad("bacterial load must be nonnegative")
    out = params.beta * params.K / (params.K + b_arr)
    return float(out) if out.ndim == 0 else out


def _field(p: AMRParams, b: np.ndarray, s: np.ndarray, sigma: int) -> tuple[np.ndarray, np.ndarray]:
    logistic = p.alpha * (1.0 - b / p.N)
    I = p.beta * p.K / (p.K + b)
    db = logistic * b - I * b
    ds = logistic * s - I * s
    if sigma == 2:
        db = db - p.D_M * s
        ds = ds - (p.D_M + p.mu) * s
    return db, ds


def amr_vector_field(params: AMRParams, x, sigma, check: bool = True) -> np.ndarray:
    """Right-hand side of mode sigma at x = (b, s); also accepts (N, 2) batches."""
    sigma = _check_mode(sigma, 2)
    x = np.asarray(x, dtype=float)
    b, s = x[..., 0], x[..., 1]
    if check:
        tol = MEMBERSHIP_TOL * max(1.0, params.N)
        if np.any(s < -tol) or np.any(s > b + tol) or np.any(b > params.N + tol):
            raise DomainViolation("state must satisfy 0 <= s <= b <= N")
    db, ds = _field(params, b, s, sigma)
    return np.stack([db, ds], axis=-1)


@dataclass(frozen=True, eq=False)
class AMRSwitchedSystem:
    """Euler-discretised AMR model x+ = x + delta * f_sigma(x) + w.

    W is the box [-wb, wb] x [-ws, ws]; X is the triangle 0 <= s <= b <= N.
    """

    params: AMRParams
    delta: float
    wb: float
    ws: float
    q: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ModelError("delta must be positive")
        if self.wb < 0 or self.ws < 0:
            raise ModelError("uncertainty bounds must be nonnegative")

    @property
    def n(self) -> int:
        return 2

    @property
    def W(self) -> Box:
        return Box([-self.wb, -self.ws], [self.wb, self.ws])

    def noise_vertices(self) -> np.ndarray:
        """The three worst-case corners used to certify a mode."""
        return np.array([[self.wb, 0.0], [0.0, self.ws], [self.wb, self.ws]])

    def in_domain(self, x) -> bool:
        b, s = float(x[0]), float(x[1])
        tol = MEMBERSHIP_TOL * max(1.0, self.params.N)
        return -tol <= s <= b + tol and b <= self.params.N + tol

    def step(self, x, sigma, w, check: bool = True) -> np.ndarray:
        return step_amr(self, x, sigma, w, check=check)

    def successors(self, x, sigma, W_pts) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + self.delta * amr_vector_field(self.params, x, sigma, check=False) + W_pts

    def sample_noise(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        m = 1 if size is None else size
        out = rng.uniform([-self.wb, -self.ws], [self.wb, self.ws], size=(m, 2))
        return out[0] if size is None else out

    def to_dict(self) -> dict:
        return {"type": "amr", "params": self.params.to_dict(), "delta": self.delta,
                "W": {"wb": self.wb, "ws": self.ws}}


def step_amr(sys: AMRSwitchedSystem, x, sigma, w, check: bool = True) -> np.ndarray:
    """Forward-Euler step. The successor may leave the domain; callers check."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if check:
        if not sys.W.contains(w, MEMBERSHIP_TOL * max(1.0, sys.wb, sys.ws)):
            raise UncertaintyOutOfSet(f"w={w.tolist()} is not in W")
        if not sys.in_domain(x):
            raise DomainViolation(f"x={x.tolist()} is outside the domain")
    return x + sys.delta * amr_vector_field(sys.params, x, sigma, check=False) + w
