"""Vector primitives: Lq norms, feasible regions, projections, normalized steps.

Points are plain float64 numpy arrays of a fixed dimension M. Norm orders
are floats: 1.0, any finite order > 1, or ``math.inf``. All operations here
are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

Vector = np.ndarray

#: Solution tolerance for projections (constraint satisfaction and Dykstra
#: convergence).
PROJECTION_TOL = 1e-9

#: Iteration cap for alternating projection onto box + halfspace regions.
DYKSTRA_MAX_ITER = 10_000


class InfeasibleRegionError(ValueError):
    """Box and linear constraints have an empty intersection."""


class ZeroGradientError(ValueError):
    """A normalized step was requested for a zero direction vector."""


def check_norm_order(q: float) -> float:
    """Validate a norm order and return it as a float.

    Valid orders are 1, any finite order > 1, or infinity.
    """
    q = float(q)
    if math.isnan(q) or q < 1.0:
        raise ValueError(f"norm order must be 1, a finite order > 1, or inf; got {q}")
    return q


def as_point(x, dim: int | None = None) -> Vector:
    """Coerce to a 1-d float64 array, optionally checking the dimension."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d point, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    return x


def lq_norm(v, q: float) -> float:
    """Lq norm of a vector; for q = inf the max absolute value.

    General finite orders factor out the largest component before
    exponentiation so that large q does not overflow.
    """
    v = np.asarray(v, dtype=float)
    q = check_norm_order(q)
    if v.size == 0:
        return 0.0
    if q == math.inf:
        return float(np.max(np.abs(v)))
    if q == 1.0:
        return float(np.sum(np.abs(v)))
    if q == 2.0:
        return float(np.linalg.norm(v))
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return 0.0
    return vmax * float(np.sum((np.abs(v) / vmax) ** q) ** (1.0 / q))


def dual_order(p: float) -> float:
    """The Holder-dual order q with 1/p + 1/q = 1."""
    p = check_norm_order(p)
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def normalized_step(x, g, r: float, q: float) -> Vector:
    """Step from x by exactly r (in Lq norm) along direction g.

    Raises ZeroGradientError when g has zero norm; callers decide what a
    non-moving voter does.
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    n = lq_norm(g, q)
    if n == 0.0:
        raise ZeroGradientError("cannot normalize a zero direction")
    return x + r * (g / n)


@dataclass(frozen=True)
class HalfSpace:
    """Linear constraint a . x <= b."""

    a: Vector
    b: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or not np.all(np.isfinite(a)) or np.all(a == 0):
            raise ValueError("halfspace normal must be a finite nonzero vector")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def violation(self, x: Vector) -> float:
        return float(self.a @ x - self.b)

    def project(self, x: Vector) -> Vector:
        v = self.violation(x)
        if v <= 0:
            return x
        return x - (v / float(self.a @ self.a)) * self.a


@dataclass(frozen=True)
class FeasibleRegion:
    """Non-empty bounded closed convex region: a box intersected with halfspaces.

    Feasibility of the intersection is verified at construction (via an LP
    when halfspaces are present), so projection is total afterwards.
    """

    lo: Vector
    hi: Vector
    halfspaces: tuple[HalfSpace, ...] = field(default_factory=tuple)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite (the region is bounded)")
        if np.any(lo > hi):
            raise InfeasibleRegionError("box has lo > hi on some dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        for h in self.halfspaces:
            if h.a.shape != lo.shape:
                raise ValueError("halfspace dimension does not match box")
        if self.halfspaces and not self._intersection_nonempty():
            raise InfeasibleRegionError("box and linear constraints do not intersect")

    def _intersection_nonempty(self) -> bool:
        A = np.stack([h.a for h in self.halfspaces])
        b = np.array([h.b for h in self.halfspaces])
        res = linprog(
            c=np.zeros(self.dim),
            A_ub=A,
            b_ub=b,
            bounds=list(zip(self.lo, self.hi)),
            method="highs",
        )
        return res.status == 0

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def diameter_linf(self) -> float:
        """Linf diameter of the bounding box; the scale used for defaults."""
        return float(np.max(self.hi - self.lo))

    def contains(self, x, tol: float = PROJECTION_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        return all(h.violation(x) <= tol for h in self.halfspaces)

    def project(self, x) -> Vector:
        """Euclidean projection onto the region.

        Box-only regions clamp per dimension. With halfspaces, Dykstra's
        alternating projection is used (cap DYKSTRA_MAX_ITER, tolerance
        PROJECTION_TOL); feasible inputs are returned unchanged.
        """
        x = np.asarray(x, dtype=float)
        if not self.halfspaces:
            return np.clip(x, self.lo, self.hi)
        if self.contains(x, tol=0.0):
            return x.copy()
        projectors = [lambda y: np.clip(y, self.lo, self.hi)]
        projectors += [h.project for h in self.halfspaces]
        y = x.copy()
        corrections = [np.zeros_like(x) for _ in projectors]
        for _ in range(DYKSTRA_MAX_ITER):
            y_prev = y
            for i, proj in enumerate(projectors):
                z = proj(y + corrections[i])
                corrections[i] = y + corrections[i] - z
                y = z
            if np.max(np.abs(y - y_prev)) < PROJECTION_TOL and self.contains(y):
                break
        return y

    @classmethod
    def box(cls, lo, hi) -> "FeasibleRegion":
        return cls(lo=np.asarray(lo, dtype=float), hi=np.asarray(hi, dtype=float))

    @classmethod
    def unit_box(cls, dim: int) -> "FeasibleRegion":
        return cls.box(np.zeros(dim), np.ones(dim))

    def to_dict(self) -> dict:
        d = {"lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.halfspaces:
            d["halfspaces"] = [{"a": h.a.tolist(), "b": h.b} for h in self.halfspaces]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeasibleRegion":
        hs = tuple(HalfSpace(a=np.asarray(h["a"], dtype=float), b=float(h["b"]))
                   for h in d.get("halfspaces", []))
        return cls(lo=np.asarray(d["lo"], dtype=float),
                   hi=np.asarray(d["hi"], dtype=float),
                   halfspaces=hs)
