"""Seeded voter populations: declarative distribution specs that generate
reproducible streams of utility functions.

Randomness uses numpy's PCG64 via ``SeedSequence``. A population seed plus
a ``lane`` (a tuple of small ints used as the spawn key) names an
independent substream, so concurrent experiments and oracles can draw
disjoint, reproducible randomness from one spec. Lane conventions used by
the rest of the package: ``(0, ...)`` voter streams, ``(1, ...)`` oracle
samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .utilities import (
    DecomposableUtility,
    DlcdUtility,
    LpNormedUtility,
    Utility,
    WeightedEuclideanUtility,
    parse_order,
    tent,
    _order_str,
)

TRUNC_GAUSS_MAX_TRIES = 1000


# ---------------------------------------------------------------------------
# Scalar distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("uniform needs lo < hi")

    def sample(self, rng: np.random.Generator, n: int | None = None):
        return rng.uniform(self.lo, self.hi, size=n)

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TruncGauss:
    """Gaussian restricted to [lo, hi] by rejection.

    After TRUNC_GAUSS_MAX_TRIES rejections the next draw is clamped into
    the interval instead.
    """

    mu: float
    sigma: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.sigma <= 0 or not self.lo < self.hi:
            raise ValueError("trunc_gauss needs sigma > 0 and lo < hi")

    def sample(self, rng: np.random.Generator, n: int | None = None):
        if n is None:
            return self._sample_one(rng)
        return np.array([self._sample_one(rng) for _ in range(n)])

    def _sample_one(self, rng: np.random.Generator) -> float:
        for _ in range(TRUNC_GAUSS_MAX_TRIES):
            v = rng.normal(self.mu, self.sigma)
            if self.lo <= v <= self.hi:
                return float(v)
        return float(min(max(rng.normal(self.mu, self.sigma), self.lo), self.hi))

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"kind": "trunc_gauss", "mu": self.mu, "sigma": self.sigma,
                "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PointMass:
    """Degenerate distribution; only for explicitly degenerate test specs
    (it violates the bounded-density condition the theory assumes)."""

    value: float

    def sample(self, rng: np.random.Generator, n: int | None = None):
        if n is None:
            return float(self.value)
        return np.full(n, float(self.value))

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def to_dict(self) -> dict:
        return {"kind": "point_mass", "value": self.value}


@dataclass(frozen=True)
class Mixture:
    parts: tuple
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.parts) != len(self.weights) or not self.parts:
            raise ValueError("mixture needs matching parts and weights")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("mixture weights must be nonnegative, not all zero")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))

    def sample(self, rng: np.random.Generator, n: int | None = None):
        if n is None:
            i = rng.choice(len(self.parts), p=self.weights)
            return self.parts[i].sample(rng)
        idx = rng.choice(len(self.parts), p=self.weights, size=n)
        return np.array([self.parts[i].sample(rng) for i in idx])

    def support(self) -> tuple[float, float]:
        los, his = zip(*(p.support() for p in self.parts))
        return (min(los), max(his))

    def to_dict(self) -> dict:
        return {"kind": "mixture",
                "parts": [p.to_dict() for p in self.parts],
                "weights": list(self.weights)}


def dist_from_dict(d: dict):
    kind = d["kind"]
    if kind == "uniform":
        return Uniform(lo=float(d["lo"]), hi=float(d["hi"]))
    if kind == "trunc_gauss":
        return TruncGauss(mu=float(d["mu"]), sigma=float(d["sigma"]),
                          lo=float(d["lo"]), hi=float(d["hi"]))
    if kind == "point_mass":
        return PointMass(value=float(d["value"]))
    if kind == "mixture":
        return Mixture(parts=tuple(dist_from_dict(p) for p in d["parts"]),
                       weights=tuple(d["weights"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# Population specs and voter streams
# ---------------------------------------------------------------------------

FAMILIES = ("lp", "weighted_euclidean", "decomposable", "dlcd")


@dataclass(frozen=True)
class PopulationSpec:
    """Declarative description of a voter population.

    ``ideal_dists`` gives one scalar distribution per dimension (ideal
    points for lp / weighted Euclidean, tent centers for the decomposable
    families). Family-specific fields:

    * lp: ``p``
    * weighted_euclidean: ``blocks`` plus ``weight_dists`` (one per block)
    * decomposable: optional ``plateau_halfwidth_dists`` and ``slope_dists``
    * dlcd: decomposable fields plus ``deficit_weight_dist`` and the
      expenditure/income split
    """

    family: str
    seed: int
    ideal_dists: tuple
    p: float | None = None
    blocks: tuple[tuple[int, ...], ...] | None = None
    weight_dists: tuple | None = None
    plateau_halfwidth_dists: tuple | None = None
    slope_dists: tuple | None = None
    deficit_weight_dist: object | None = None
    expenditure_dims: tuple[int, ...] | None = None
    income_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "ideal_dists", tuple(self.ideal_dists))
        if self.family == "lp" and self.p is None:
            raise ValueError("lp population needs p")
        if self.family == "weighted_euclidean":
            if self.blocks is None or self.weight_dists is None:
                raise ValueError("weighted_euclidean population needs blocks and weight_dists")
            object.__setattr__(self, "blocks",
                               tuple(tuple(int(i) for i in b) for b in self.blocks))
            object.__setattr__(self, "weight_dists", tuple(self.weight_dists))
            if len(self.weight_dists) != len(self.blocks):
                raise ValueError("need one weight distribution per block")
        if self.family == "dlcd":
            if (self.deficit_weight_dist is None or self.expenditure_dims is None
                    or self.income_dims is None):
                raise ValueError("dlcd population needs deficit weight and dim split")
        for name in ("plateau_halfwidth_dists", "slope_dists"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(v)
                if len(v) != self.dim:
                    raise ValueError(f"{name} must have one entry per dimension")
                object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return len(self.ideal_dists)

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(d.support() for d in self.ideal_dists))
        return np.array(los), np.array(his)

    def stream(self, lane: tuple[int, ...] = ()) -> "VoterStream":
        """An independent, reproducible voter stream for the given lane."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(lane))
        return VoterStream(spec=self, rng=np.random.Generator(np.random.PCG64(ss)))

    def sample_ideals(self, n: int, lane: tuple[int, ...] = (1,)) -> np.ndarray:
        """Vectorized draw of n ideal points (tent centers for the
        decomposable families); used by oracles on their own lane."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(lane))
        rng = np.random.Generator(np.random.PCG64(ss))
        return np.column_stack([d.sample(rng, n) for d in self.ideal_dists])

    def to_dict(self) -> dict:
        d: dict = {"family": self.family, "seed": int(self.seed),
                   "ideals": [x.to_dict() for x in self.ideal_dists]}
        if self.p is not None:
            d["p"] = _order_str(self.p)
        if self.blocks is not None:
            d["blocks"] = [list(b) for b in self.blocks]
        if self.weight_dists is not None:
            d["weights"] = [x.to_dict() for x in self.weight_dists]
        if self.plateau_halfwidth_dists is not None:
            d["plateau_halfwidths"] = [x.to_dict() for x in self.plateau_halfwidth_dists]
        if self.slope_dists is not None:
            d["slopes"] = [x.to_dict() for x in self.slope_dists]
        if self.deficit_weight_dist is not None:
            d["deficit_weight"] = self.deficit_weight_dist.to_dict()
        if self.expenditure_dims is not None:
            d["expenditure_dims"] = list(self.expenditure_dims)
            d["income_dims"] = list(self.income_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        def opt_dists(key):
            return tuple(dist_from_dict(x) for x in d[key]) if key in d else None

        return cls(
            family=d["family"],
            seed=int(d["seed"]),
            ideal_dists=tuple(dist_from_dict(x) for x in d["ideals"]),
            p=parse_order(d["p"]) if "p" in d else None,
            blocks=tuple(tuple(b) for b in d["blocks"]) if "blocks" in d else None,
            weight_dists=opt_dists("weights"),
            plateau_halfwidth_dists=opt_dists("plateau_halfwidths"),
            slope_dists=opt_dists("slopes"),
            deficit_weight_dist=dist_from_dict(d["deficit_weight"])
            if "deficit_weight" in d else None,
            expenditure_dims=tuple(d["expenditure_dims"]) if "expenditure_dims" in d else None,
            income_dims=tuple(d["income_dims"]) if "income_dims" in d else None,
        )


@dataclass
class VoterStream:
    """Stateful cursor over a population's voter sequence.

    Single-owner: draw order is part of the determinism contract, so a
    stream must not be shared across threads. Distinct streams (different
    lanes) are independent.
    """

    spec: PopulationSpec
    rng: np.random.Generator
    cursor: int = 0

    def next_voter(self) -> Utility:
        u = _draw_voter(self.spec, self.rng)
        self.cursor += 1
        return u


def replay(spec: PopulationSpec, n: int, lane: tuple[int, ...] = ()) -> list[Utility]:
    """The exact first n voters of the lane's stream."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    stream = spec.stream(lane)
    return [stream.next_voter() for _ in range(n)]


def _draw_voter(spec: PopulationSpec, rng: np.random.Generator) -> Utility:
    ideals = np.array([d.sample(rng) for d in spec.ideal_dists])
    if spec.family == "lp":
        return LpNormedUtility(p=spec.p, ideal=ideals)
    if spec.family == "weighted_euclidean":
        weights = np.array([d.sample(rng) for d in spec.weight_dists])
        if not np.any(weights > 0):
            weights = np.ones_like(weights)  # all-zero draws are invalid; nudge
        return WeightedEuclideanUtility(blocks=spec.blocks, weights=weights, ideals=ideals)
    halfwidths = (np.array([d.sample(rng) for d in spec.plateau_halfwidth_dists])
                  if spec.plateau_halfwidth_dists else np.zeros(spec.dim))
    slopes = (np.array([d.sample(rng) for d in spec.slope_dists])
              if spec.slope_dists else np.ones(spec.dim))
    base = DecomposableUtility(dims=tuple(
        tent(center=ideals[m], slope=max(slopes[m], 1e-6),
             plateau_halfwidth=max(halfwidths[m], 0.0))
        for m in range(spec.dim)))
    if spec.family == "decomposable":
        return base
    w = max(float(spec.deficit_weight_dist.sample(rng)), 0.0)
    return DlcdUtility(base=base, deficit_weight=w,
                       expenditure_dims=spec.expenditure_dims,
                       income_dims=spec.income_dims)
