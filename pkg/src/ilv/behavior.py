"""Voter responses to the local query: move the current solution to your
favorite point within an Lq ball of radius r.

Two response models:

* ``best_response`` -- the exact constrained maximizer. Closed forms cover
  the (utility, ball) pairs with known solutions; everything else goes
  through a projected subgradient ascent fallback on the ball.
* ``gradient_step`` -- a step of length exactly r along the voter's
  normalized subgradient (no move when the subgradient vanishes).

``in_bad_region`` reports the per-family event under which a constrained
best response stops being a valid (surrogate) subgradient step; its
probability shrinks linearly with r under bounded ideal-point densities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .geometry import Vector, lq_norm
from .utilities import (
    DecomposableUtility,
    DlcdUtility,
    LpNormedUtility,
    Pwl1,
    Utility,
    WeightedEuclideanUtility,
)

ASCENT_ITERATIONS = 500
ASCENT_RESTARTS = 5


class ResponseModel(str, enum.Enum):
    """How a voter answers the local query."""

    BEST_RESPONSE = "best_response"   # exact constrained maximization
    GRADIENT_STEP = "gradient_step"   # normalized subgradient step to the boundary


class BadRegionUndefinedError(ValueError):
    """No bad-region event is defined for this (utility, ball) pair."""


@dataclass(frozen=True)
class VoterResponse:
    point: Vector
    moved: bool
    bad_region: bool


def respond(model: ResponseModel, u: Utility, x, r: float, q: float) -> VoterResponse:
    if model == ResponseModel.BEST_RESPONSE:
        return best_response(u, x, r, q)
    return gradient_step(u, x, r, q)


def gradient_step(u: Utility, x, r: float, q: float) -> VoterResponse:
    """Step of Lq length r along the voter's normalized subgradient."""
    if r <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    bad = _bad_region_or_false(u, x, r, q)
    g = u.subgradient(x)
    n = lq_norm(g, q)
    if n == 0.0:
        return VoterResponse(point=x.copy(), moved=False, bad_region=bad)
    return VoterResponse(point=x + r * (g / n), moved=True, bad_region=bad)


def best_response(u: Utility, x, r: float, q: float) -> VoterResponse:
    """Exact maximizer of u over the closed Lq ball of radius r around x.

    Ties are broken toward the point nearest x in L2. A voter whose
    maximizer set intersects the ball moves into it (and no further).
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    bad = _bad_region_or_false(u, x, r, q)

    point = _closed_form(u, x, r, q)
    if point is None:
        point = _ascent_on_ball(u, x, r, q)
    moved = bool(np.any(point != x))
    return VoterResponse(point=point, moved=moved, bad_region=bad)


def _bad_region_or_false(u: Utility, x: Vector, r: float, q: float) -> bool:
    try:
        return in_bad_region(u, x, r, q)
    except BadRegionUndefinedError:
        return False


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def _closed_form(u: Utility, x: Vector, r: float, q: float) -> Vector | None:
    if isinstance(u, LpNormedUtility):
        if u.p == 2.0 and q == 2.0:
            return _toward_ideal_l2(x, u.ideal, r)
        if u.p == 1.0 and q == math.inf:
            # dimensions decouple: clamp each coordinate toward the ideal
            return np.clip(u.ideal, x - r, x + r)
        if u.p == math.inf and q == 1.0:
            return _waterfill_linf(x, u.ideal, r)
        return None
    if isinstance(u, WeightedEuclideanUtility) and q == 2.0:
        dists = u.block_distances(x)
        cared = u.weights > 0
        reach = math.sqrt(float(np.sum(dists[cared] ** 2)))
        if reach <= r:
            # every block the voter cares about is reachable; indifferent
            # (zero-weight) blocks stay put per the nearest-to-x tie rule
            target = x.copy()
            for k, blk in enumerate(u.blocks):
                if cared[k]:
                    target[list(blk)] = u.ideals[list(blk)]
            return target
        if np.all(dists[cared] > r):
            g = u.subgradient(x)  # unit L2 norm here by construction
            return x + r * (g / float(np.linalg.norm(g)))
        return None  # some block reachable: no closed form, fall back
    if isinstance(u, DecomposableUtility) and q == math.inf:
        return _decomposable_linf(u.dims, x, r)
    if isinstance(u, DlcdUtility) and q == math.inf:
        return _decomposable_linf(u.effective_dims(), x, r)
    return None


def _toward_ideal_l2(x: Vector, ideal: Vector, r: float) -> Vector:
    delta = ideal - x
    dist = float(np.linalg.norm(delta))
    if dist <= r:
        return ideal.copy()
    return x + r * (delta / dist)


def _waterfill_linf(x: Vector, ideal: Vector, r: float) -> Vector:
    """Minimize the max deviation from the ideal with an L1 movement budget.

    Spends the budget lowering the largest deviations to a common level;
    with a clear margin this reduces to moving only the single worst
    coordinate, and on ties it splits the budget (the L2-nearest optimum).
    """
    d = np.abs(ideal - x)
    if float(np.sum(d)) <= r:
        return ideal.copy()
    order = np.argsort(-d)
    ds = d[order]
    csum = np.cumsum(ds)
    level = ds[0]
    for k in range(1, d.size + 1):
        level = (csum[k - 1] - r) / k
        if k == d.size or level >= ds[k]:
            break
    move = np.maximum(d - level, 0.0)
    return x + np.sign(ideal - x) * move


def _decomposable_linf(dims: tuple[Pwl1, ...], x: Vector, r: float) -> Vector:
    out = np.empty_like(x)
    for m, f in enumerate(dims):
        out[m] = f.max_on(x[m] - r, x[m] + r, prefer=x[m])
    return out


# ---------------------------------------------------------------------------
# Bad-region events
# ---------------------------------------------------------------------------

def in_bad_region(u: Utility, x, r: float, q: float) -> bool:
    """Whether the constrained response at (x, r) may fail to be a
    (surrogate) subgradient step for this voter.

    Defined per family: Lp utilities for the dual pairs (2,2), (1,inf),
    (inf,1); weighted Euclidean under L2 balls; decomposable families on
    any ball via per-dimension proximity to the maximizer plateau.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(u, LpNormedUtility):
        delta = u.ideal - x
        if u.p == 2.0 and q == 2.0:
            return bool(np.linalg.norm(delta) <= r)
        if u.p == 1.0 and q == math.inf:
            return bool(np.min(np.abs(delta)) <= r)
        if u.p == math.inf and q == 1.0:
            d = np.abs(delta)
            m = int(np.argmax(d))
            others = np.delete(d, m)
            return bool(others.size and np.any(d[m] < others + r))
        raise BadRegionUndefinedError(f"no bad-region event for Lp pair (p={u.p}, q={q})")
    if isinstance(u, WeightedEuclideanUtility):
        if q == 2.0:
            return bool(np.any(u.block_distances(x) <= r))
        raise BadRegionUndefinedError(f"weighted Euclidean bad region needs q=2, got {q}")
    if isinstance(u, (DecomposableUtility, DlcdUtility)):
        dims = u.effective_dims() if isinstance(u, DlcdUtility) else u.dims
        for m, f in enumerate(dims):
            a, b = f.argmax_interval()
            gap = max(a - x[m], x[m] - b, 0.0)  # distance to the plateau
            if gap <= r:
                return True
        return False
    raise BadRegionUndefinedError(f"no bad-region event for {type(u).__name__}")


# ---------------------------------------------------------------------------
# Numerical fallback: projected subgradient ascent on the ball
# ---------------------------------------------------------------------------

class BestResponseError(RuntimeError):
    """The ascent fallback failed to produce a usable response."""


def project_lq_ball(y, center, r: float, q: float) -> Vector:
    """Euclidean projection of y onto {z : ||z - center||_q <= r}."""
    y = np.asarray(y, dtype=float)
    center = np.asarray(center, dtype=float)
    delta = y - center
    if lq_norm(delta, q) <= r:
        return y.copy()
    if q == math.inf:
        return center + np.clip(delta, -r, r)
    if q == 2.0:
        return center + delta * (r / float(np.linalg.norm(delta)))
    if q == 1.0:
        return center + _project_l1(delta, r)
    return center + _project_lq_general(delta, r, q)


def _project_l1(delta: Vector, r: float) -> Vector:
    # standard sort-based L1-ball projection
    w = np.abs(delta)
    s = np.sort(w)[::-1]
    csum = np.cumsum(s)
    ks = np.arange(1, w.size + 1)
    valid = s - (csum - r) / ks > 0
    k = int(np.max(np.nonzero(valid)[0])) + 1
    theta = (csum[k - 1] - r) / k
    return np.sign(delta) * np.maximum(w - theta, 0.0)


def _project_lq_general(delta: Vector, r: float, q: float) -> Vector:
    # dual bisection: z(mu) minimizes (z - delta)^2/2 + mu*|z|^q per dim;
    # shrink mu until the ball constraint is active.
    absd = np.abs(delta)

    def shrunk(mu: float) -> Vector:
        out = np.empty_like(absd)
        for i, d in enumerate(absd):
            if d == 0.0:
                out[i] = 0.0
                continue
            f = lambda t: t + mu * q * t ** (q - 1.0) - d
            out[i] = brentq(f, 0.0, d, xtol=1e-14)
        return out

    lo_mu, hi_mu = 0.0, 1.0
    while lq_norm(shrunk(hi_mu), q) > r:
        hi_mu *= 4.0
        if hi_mu > 1e12:
            raise BestResponseError("Lq-ball projection did not bracket")
    mu = brentq(lambda m: lq_norm(shrunk(m), q) - r, lo_mu, hi_mu, xtol=1e-14)
    return np.sign(delta) * shrunk(mu)


def _ascent_on_ball(u: Utility, x: Vector, r: float, q: float) -> Vector:
    """Projected subgradient ascent over the Lq ball around x.

    Concavity makes local ascent sound; restarts from the center and a few
    boundary points guard against poor kink behavior.
    """
    starts = [x.copy()]
    g0 = u.subgradient(x)
    n0 = lq_norm(g0, q)
    if n0 > 0:
        starts.append(x + r * (g0 / n0))
    axis = 0
    sign = 1.0
    while len(starts) < ASCENT_RESTARTS:
        e = np.zeros_like(x)
        e[axis % x.size] = sign * r
        starts.append(x + e)
        if sign < 0:
            axis += 1
        sign = -sign

    best = None
    best_val = -math.inf
    for start in starts:
        y = project_lq_ball(start, x, r, q)
        for k in range(1, ASCENT_ITERATIONS + 1):
            val = u.value(y)
            if val > best_val:
                best_val, best = val, y.copy()
            g = u.subgradient(y)
            if not np.any(g):
                break
            step = (r / 2.0) / math.sqrt(k)
            y = project_lq_ball(y + step * (g / lq_norm(g, 2.0)), x, r, q)
        val = u.value(y)
        if val > best_val:
            best_val, best = val, y.copy()
    if best is None or not np.all(np.isfinite(best)):
        raise BestResponseError(f"ascent failed for {type(u).__name__} with q={q}")
    if u.value(best) >= u.value(x):
        return best
    return x.copy()
