"""Voter utility families: Lp-normed, weighted Euclidean, decomposable, and
decomposable-with-linear-deficit-cost (the budget-voting family).

Every family is concave, immutable after construction, and exposes

* ``value(x)``      -- the utility f(x),
* ``value_batch(X)``-- vectorized evaluation over rows of X,
* ``subgradient(x)``-- one deterministic element of the superdifferential
  (zero exactly on maximizer sets).

Subgradient selection at nondifferentiable points is deterministic for
reproducibility: sign kinks use sign(0) = 0, Linf ties pick the lowest
maximizing coordinate, piecewise-linear kinks pick the minimum-magnitude
slope (zero on plateaus).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Vector, as_point, check_norm_order, dual_order, lq_norm

_SLOPE_TOL = 1e-9


class DimensionMismatchError(ValueError):
    pass


def _check_dim(x, dim: int) -> Vector:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise DimensionMismatchError(f"expected point of dimension {dim}, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# 1-d concave piecewise-linear functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pwl1:
    """Concave piecewise-linear function of one variable.

    Defined by >= 2 strictly increasing breakpoints ``xs`` with values
    ``ys``; linear in between and extrapolated with the end-segment slopes
    outside. Segment slopes must be non-increasing (concavity).
    """

    xs: Vector
    ys: Vector

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("need >= 2 breakpoints with matching values")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        slopes = np.diff(ys) / np.diff(xs)
        if np.any(np.diff(slopes) > _SLOPE_TOL):
            raise ValueError("slopes must be non-increasing (concavity)")
        self._finish(xs, ys, slopes)

    def _finish(self, xs, ys, slopes):
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_argmax", _pwl_argmax(xs, slopes))

    @classmethod
    def _trusted(cls, xs: Vector, ys: Vector, slopes: Vector) -> "Pwl1":
        """Construction bypass for callers that guarantee the invariants
        (the hot path: populations build millions of these)."""
        obj = object.__new__(cls)
        obj._finish(xs, ys, slopes)
        return obj

    @property
    def slopes(self) -> Vector:
        return self._slopes  # type: ignore[attr-defined]

    def value(self, x):
        """Evaluate at a scalar or an array of scalars."""
        x = np.asarray(x, dtype=float)
        # segment index for each x, clipped so end segments extrapolate
        idx = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.xs.size - 2)
        out = self.ys[idx] + self.slopes[idx] * (x - self.xs[idx])
        return out if out.ndim else float(out)

    def subdifferential(self, x: float) -> tuple[float, float]:
        """(right slope, left slope) at x; equal where differentiable."""
        s = self.slopes
        if x < self.xs[0]:
            return float(s[0]), float(s[0])
        if x > self.xs[-1]:
            return float(s[-1]), float(s[-1])
        i = int(np.searchsorted(self.xs, x, side="left"))
        if i < self.xs.size and self.xs[i] == x:
            left = s[i - 1] if i > 0 else s[0]
            right = s[i] if i < s.size else s[-1]
            return float(right), float(left)
        return float(s[i - 1]), float(s[i - 1])

    def selected_slope(self, x: float) -> float:
        """Deterministic subgradient: the minimum-magnitude element.

        Returns 0 whenever 0 lies in the subdifferential (plateaus and
        peaks), so it vanishes exactly on the maximizer set.
        """
        right, left = self.subdifferential(x)
        if right > 0:
            return right
        if left < 0:
            return left
        return 0.0

    def argmax_interval(self) -> tuple[float, float]:
        """The maximizer interval [a, b].

        Monotone functions have no finite maximizer; the sentinel
        (-inf, -inf) or (inf, inf) points in the direction of improvement.
        """
        return self._argmax  # type: ignore[attr-defined]

    def max_on(self, lo: float, hi: float, prefer: float) -> float:
        """Maximizer over [lo, hi]; ties resolved nearest to ``prefer``."""
        a, b = self._argmax  # type: ignore[attr-defined]
        ilo = a if a > lo else lo
        ihi = b if b < hi else hi
        if ilo <= ihi:
            return min(max(prefer, ilo), ihi)
        return lo if b < lo else hi

    def shifted(self, c: float) -> "Pwl1":
        """The function x -> f(x) + c*x (still concave piecewise-linear)."""
        return Pwl1._trusted(self.xs, self.ys + c * self.xs, self.slopes + c)

    def scaled(self, c: float) -> "Pwl1":
        if c <= 0:
            raise ValueError("scale must be positive")
        return Pwl1._trusted(self.xs, self.ys * c, self.slopes * c)

    def to_dict(self) -> dict:
        return {"xs": self.xs.tolist(), "ys": self.ys.tolist()}


def _pwl_argmax(xs: Vector, slopes: Vector) -> tuple[float, float]:
    if slopes[0] < 0:
        return (-math.inf, -math.inf)
    if slopes[-1] > 0:
        return (math.inf, math.inf)
    a = -math.inf
    for i in range(slopes.size - 1, -1, -1):
        if slopes[i] > 0:
            a = float(xs[i + 1])
            break
    b = math.inf
    for i in range(slopes.size):
        if slopes[i] < 0:
            b = float(xs[i])
            break
    return (a, b)


def tent(center: float, slope: float = 1.0, plateau_halfwidth: float = 0.0) -> Pwl1:
    """Tent function peaking (value 0) at ``center``.

    With a positive plateau halfwidth the peak widens to an indifference
    interval [center - h, center + h].
    """
    if slope <= 0:
        raise ValueError("slope must be positive")
    h = float(plateau_halfwidth)
    if h < 0:
        raise ValueError("plateau halfwidth must be nonnegative")
    center = float(center)
    slope = float(slope)
    if h == 0:
        xs = np.array([center - 1.0, center, center + 1.0])
        ys = np.array([-slope, 0.0, -slope])
        slopes = np.array([slope, -slope])
    else:
        xs = np.array([center - h - 1.0, center - h, center + h, center + h + 1.0])
        ys = np.array([-slope, 0.0, 0.0, -slope])
        slopes = np.array([slope, 0.0, -slope])
    return Pwl1._trusted(xs, ys, slopes)


# ---------------------------------------------------------------------------
# Utility families
# ---------------------------------------------------------------------------

class Utility:
    """Shared interface of the four voter utility families."""

    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, x) -> Vector:
        raise NotImplementedError


@dataclass(frozen=True)
class LpNormedUtility(Utility):
    """f(x) = -scale * ||x - ideal||_p."""

    p: float
    ideal: Vector
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", check_norm_order(self.p))
        object.__setattr__(self, "ideal", as_point(self.ideal))
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def dim(self) -> int:
        return self.ideal.shape[0]

    def value(self, x) -> float:
        x = _check_dim(x, self.dim)
        return -self.scale * lq_norm(x - self.ideal, self.p)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(X, dtype=float) - self.ideal)
        if self.p == math.inf:
            n = np.max(d, axis=1)
        elif self.p == 1.0:
            n = np.sum(d, axis=1)
        elif self.p == 2.0:
            n = np.sqrt(np.sum(d * d, axis=1))
        else:
            dmax = np.max(d, axis=1)
            safe = np.where(dmax > 0, dmax, 1.0)
            n = safe * np.sum((d / safe[:, None]) ** self.p, axis=1) ** (1.0 / self.p)
            n = np.where(dmax > 0, n, 0.0)
        return -self.scale * n

    def subgradient(self, x) -> Vector:
        x = _check_dim(x, self.dim)
        delta = self.ideal - x  # points toward the ideal
        if self.p == 1.0:
            return self.scale * np.sign(delta)
        if self.p == math.inf:
            d = np.abs(delta)
            if np.all(d == 0):
                return np.zeros(self.dim)
            m = int(np.argmax(d))  # lowest index on ties
            g = np.zeros(self.dim)
            g[m] = self.scale * np.sign(delta[m])
            return g
        dist = lq_norm(delta, self.p)
        if dist == 0.0:
            return np.zeros(self.dim)
        if self.p == 2.0:
            return self.scale * delta / dist
        return self.scale * np.sign(delta) * (np.abs(delta) / dist) ** (self.p - 1.0)

    def to_dict(self) -> dict:
        d = {"family": "lp", "p": _order_str(self.p), "ideal": self.ideal.tolist()}
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d


@dataclass(frozen=True)
class WeightedEuclideanUtility(Utility):
    """Negative weighted sum of per-block Euclidean distances to the ideal.

    Blocks partition the dimensions; weights are normalized by their own
    L2 norm, so rescaling all weights leaves the function unchanged.
    """

    blocks: tuple[tuple[int, ...], ...]
    weights: Vector
    ideals: Vector

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in blk) for blk in self.blocks)
        w = np.asarray(self.weights, dtype=float)
        ideals = as_point(self.ideals)
        covered = [i for blk in blocks for i in blk]
        if sorted(covered) != list(range(ideals.shape[0])):
            raise ValueError("blocks must disjointly cover all dimensions")
        if w.shape != (len(blocks),) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("need one nonnegative weight per block, not all zero")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ideals", ideals)
        object.__setattr__(self, "_wnorm", w / float(np.linalg.norm(w)))

    @property
    def dim(self) -> int:
        return self.ideals.shape[0]

    @property
    def normalized_weights(self) -> Vector:
        return self._wnorm  # type: ignore[attr-defined]

    def block_distances(self, x) -> Vector:
        x = _check_dim(x, self.dim)
        return np.array([
            float(np.linalg.norm(x[list(blk)] - self.ideals[list(blk)]))
            for blk in self.blocks
        ])

    def value(self, x) -> float:
        return -float(self.normalized_weights @ self.block_distances(x))

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for k, blk in enumerate(self.blocks):
            d = X[:, list(blk)] - self.ideals[list(blk)]
            total += self.normalized_weights[k] * np.sqrt(np.sum(d * d, axis=1))
        return -total

    def subgradient(self, x) -> Vector:
        x = _check_dim(x, self.dim)
        g = np.zeros(self.dim)
        for k, blk in enumerate(self.blocks):
            idx = list(blk)
            delta = self.ideals[idx] - x[idx]
            dist = float(np.linalg.norm(delta))
            if dist > 0:
                g[idx] = self.normalized_weights[k] * delta / dist
        return g

    def to_dict(self) -> dict:
        return {
            "family": "weighted_euclidean",
            "blocks": [list(b) for b in self.blocks],
            "weights": self.weights.tolist(),
            "ideals": self.ideals.tolist(),
        }


@dataclass(frozen=True)
class DecomposableUtility(Utility):
    """Sum of independent concave piecewise-linear terms, one per dimension."""

    dims: tuple[Pwl1, ...]

    def __post_init__(self):
        dims = tuple(self.dims)
        if not dims:
            raise ValueError("need at least one dimension")
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return len(self.dims)

    def value(self, x) -> float:
        x = _check_dim(x, self.dim)
        return float(sum(f.value(x[m]) for m, f in enumerate(self.dims)))

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for m, f in enumerate(self.dims):
            total += f.value(X[:, m])
        return total

    def subgradient(self, x) -> Vector:
        x = _check_dim(x, self.dim)
        return np.array([f.selected_slope(x[m]) for m, f in enumerate(self.dims)])

    def ideal_plateaus(self) -> list[tuple[float, float]]:
        """Per-dimension maximizer intervals."""
        return [f.argmax_interval() for f in self.dims]

    def to_dict(self) -> dict:
        return {"family": "decomposable", "dims": [f.to_dict() for f in self.dims]}


def deficit(x, dims_e, dims_i) -> float:
    """Budget deficit: total expenditure minus total income.

    The expenditure and income index sets must partition the dimensions.
    """
    x = np.asarray(x, dtype=float)
    e = sorted(int(i) for i in dims_e)
    i_ = sorted(int(i) for i in dims_i)
    if set(e) & set(i_):
        raise ValueError("expenditure and income dims overlap")
    if sorted(e + i_) != list(range(x.shape[0])):
        raise ValueError("expenditure and income dims must partition all dimensions")
    return float(np.sum(x[e]) - np.sum(x[i_]))


@dataclass(frozen=True)
class DlcdUtility(Utility):
    """Decomposable base utility plus a linear cost on the budget deficit."""

    base: DecomposableUtility
    deficit_weight: float
    expenditure_dims: tuple[int, ...]
    income_dims: tuple[int, ...]

    def __post_init__(self):
        e = tuple(sorted(int(i) for i in self.expenditure_dims))
        i_ = tuple(sorted(int(i) for i in self.income_dims))
        if set(e) & set(i_):
            raise ValueError("expenditure and income dims overlap")
        if sorted(e + i_) != list(range(self.base.dim)):
            raise ValueError("expenditure and income dims must partition all dimensions")
        if self.deficit_weight < 0:
            raise ValueError("deficit weight must be nonnegative")
        object.__setattr__(self, "expenditure_dims", e)
        object.__setattr__(self, "income_dims", i_)
        object.__setattr__(self, "deficit_weight", float(self.deficit_weight))
        w = self.deficit_weight
        object.__setattr__(self, "_effective_dims", tuple(
            f.shifted(-w) if m in e else f.shifted(+w)
            for m, f in enumerate(self.base.dims)))

    @property
    def dim(self) -> int:
        return self.base.dim

    def value(self, x) -> float:
        x = _check_dim(x, self.dim)
        return self.base.value(x) - self.deficit_weight * deficit(
            x, self.expenditure_dims, self.income_dims)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        d = np.sum(X[:, list(self.expenditure_dims)], axis=1) - np.sum(
            X[:, list(self.income_dims)], axis=1)
        return self.base.value_batch(X) - self.deficit_weight * d

    def subgradient(self, x) -> Vector:
        g = self.base.subgradient(x)
        g[list(self.expenditure_dims)] -= self.deficit_weight
        g[list(self.income_dims)] += self.deficit_weight
        return g

    def effective_dims(self) -> tuple[Pwl1, ...]:
        """Per-dimension functions with the deficit term folded in.

        The linear deficit cost decomposes across dimensions, so the whole
        utility equals the sum of these shifted 1-d functions.
        """
        return self._effective_dims  # type: ignore[attr-defined]

    def to_dict(self) -> dict:
        return {
            "family": "dlcd",
            "base": self.base.to_dict(),
            "deficit_weight": self.deficit_weight,
            "expenditure_dims": list(self.expenditure_dims),
            "income_dims": list(self.income_dims),
        }


def check_dual_norm_gradient(p: float, x, ideal) -> float:
    """Lq norm (q dual to p) of the gradient of ||x - ideal||_p.

    Defined for finite p > 1 at points where no coordinate equals the
    ideal's; by duality the result is identically 1.
    """
    p = float(p)
    if not (1.0 < p < math.inf):
        raise ValueError("p must be finite and > 1")
    x = np.asarray(x, dtype=float)
    ideal = np.asarray(ideal, dtype=float)
    delta = x - ideal
    if np.any(delta == 0):
        raise ValueError("gradient requires every coordinate to differ from the ideal")
    dist = lq_norm(delta, p)
    grad = np.sign(delta) * (np.abs(delta) / dist) ** (p - 1.0)
    return lq_norm(grad, dual_order(p))


# ---------------------------------------------------------------------------
# Serialization (the config format used by experiment plans)
# ---------------------------------------------------------------------------

def _order_str(q: float):
    return "inf" if q == math.inf else q


def parse_order(v) -> float:
    """Parse a norm order from config: a number, or the string 'inf'."""
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        return check_norm_order(float(v))
    return check_norm_order(float(v))


def utility_from_dict(d: dict) -> Utility:
    family = d["family"]
    if family == "lp":
        return LpNormedUtility(p=parse_order(d["p"]),
                               ideal=np.asarray(d["ideal"], dtype=float),
                               scale=float(d.get("scale", 1.0)))
    if family == "weighted_euclidean":
        return WeightedEuclideanUtility(
            blocks=tuple(tuple(b) for b in d["blocks"]),
            weights=np.asarray(d["weights"], dtype=float),
            ideals=np.asarray(d["ideals"], dtype=float))
    if family == "decomposable":
        return DecomposableUtility(dims=tuple(
            Pwl1(xs=np.asarray(f["xs"], dtype=float), ys=np.asarray(f["ys"], dtype=float))
            for f in d["dims"]))
    if family == "dlcd":
        base = utility_from_dict(d["base"])
        assert isinstance(base, DecomposableUtility)
        return DlcdUtility(base=base,
                           deficit_weight=float(d["deficit_weight"]),
                           expenditure_dims=tuple(d["expenditure_dims"]),
                           income_dims=tuple(d["income_dims"]))
    raise ValueError(f"unknown utility family {family!r}")
