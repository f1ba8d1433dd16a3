"""The iterative local voting loop: sample voters, elicit constrained
responses from a committed current point, average each batch, project,
decay the radius, and stop on a trailing-window stability test.

Update indexing: ``t`` counts committed updates (one per batch). Harmonic
radius schedules decay per update; stepped schedules are keyed to
*submission* counts, so with batch size B1 the radius for update t is
evaluated at that batch's first submission, giving B2/B1 updates per decay
step when B2 is a multiple of B1.

The stopping test measures the max pairwise distance over the trailing
window in the Linf norm, so the tolerance reads per dimension.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .behavior import ResponseModel, respond
from .geometry import FeasibleRegion, Vector
from .population import VoterStream


@dataclass(frozen=True)
class RadiusSchedule:
    """Radius decay: harmonic r0/t, or stepped r0/ceil(t/decay_every)."""

    kind: str  # "harmonic" | "stepped"
    r0: float
    decay_every: int = 1  # submissions per decay step (stepped only)

    def __post_init__(self):
        if self.kind not in ("harmonic", "stepped"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")

    def at(self, t: int) -> float:
        """Radius at step t >= 1 (submissions for stepped, updates for harmonic)."""
        if t < 1:
            raise ValueError("t must be >= 1")
        if self.kind == "harmonic":
            return self.r0 / t
        return self.r0 / math.ceil(t / self.decay_every)

    def for_update(self, update: int, batch_size: int) -> float:
        """Radius in force for a whole batch; every voter in it sees the same."""
        if self.kind == "harmonic":
            return self.at(update)
        return self.at((update - 1) * batch_size + 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r0": self.r0, "decay_every": self.decay_every}

    @classmethod
    def from_dict(cls, d: dict) -> "RadiusSchedule":
        return cls(kind=d["kind"], r0=float(d["r0"]),
                   decay_every=int(d.get("decay_every", 1)))


@dataclass(frozen=True)
class StoppingRule:
    window: int        # N: trailing updates compared pairwise
    tol: float         # max pairwise Linf distance to declare stable
    max_updates: int   # hard cap T

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_updates < self.window:
            raise ValueError("max_updates must be >= window")

    def to_dict(self) -> dict:
        return {"window": self.window, "tol": self.tol, "max_updates": self.max_updates}

    @classmethod
    def from_dict(cls, d: dict) -> "StoppingRule":
        return cls(window=int(d["window"]), tol=float(d["tol"]),
                   max_updates=int(d["max_updates"]))


def stopping_check(window_points, rule: StoppingRule) -> bool:
    """True iff the max pairwise Linf distance within the window is <= tol.

    The window should hold the last window+1 iterates.
    """
    pts = np.asarray(window_points, dtype=float)
    spread = np.max(pts, axis=0) - np.min(pts, axis=0)
    return bool(np.max(spread) <= rule.tol)


@dataclass(frozen=True)
class IlvConfig:
    region: FeasibleRegion
    initial: Vector
    q: float
    model: ResponseModel
    schedule: RadiusSchedule
    stopping: StoppingRule
    batch_size: int = 1
    project_each_response: bool = False

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "model", ResponseModel(self.model))
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.region.contains(initial):
            raise ValueError("initial point is not feasible")


class ResponseError(RuntimeError):
    """A voter's response computation failed; carries the loop state."""

    def __init__(self, update: int, voter_index: int, point: Vector, cause: Exception):
        super().__init__(
            f"response failed at update {update} (voter {voter_index}, "
            f"point {point.tolist()}): {type(cause).__name__}: {cause}")
        self.update = update
        self.voter_index = voter_index
        self.point = point


@dataclass(frozen=True)
class ResponseRecord:
    update: int       # 1-based update this response fed into
    voter_index: int  # stream cursor of the voter
    point: Vector     # raw response (pre-averaging, pre-projection)
    moved: bool
    bad_region: bool


@dataclass
class Trajectory:
    """Full run history: committed iterates, raw responses, terminal status."""

    initial: Vector
    iterates: list  # (t, radius, point); t=0 is the initial point, radius None
    responses: list[ResponseRecord]
    terminal_status: str  # "converged" | "hit_cap"

    @property
    def terminal(self) -> Vector:
        return self.iterates[-1][2]

    @property
    def updates(self) -> int:
        return self.iterates[-1][0]

    @property
    def bad_region_count(self) -> int:
        return sum(1 for r in self.responses if r.bad_region)

    def points(self) -> np.ndarray:
        return np.stack([p for _, _, p in self.iterates])

    def radii(self) -> np.ndarray:
        return np.array([r for _, r, _ in self.iterates[1:]])

    def summary(self) -> dict:
        return {
            "terminal_status": self.terminal_status,
            "terminal": self.terminal.tolist(),
            "updates": self.updates,
            "responses": len(self.responses),
            "bad_region_count": self.bad_region_count,
        }

    def iterate_records(self) -> list[dict]:
        recs = []
        for t, r, p in self.iterates:
            recs.append({"t": t, "r": r, "x": p.tolist()})
        return recs

    def write_ndjson(self, path) -> None:
        """One object per iterate plus a trailing summary record."""
        with open(path, "w") as fh:
            for rec in self.iterate_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.write(json.dumps({"summary": self.summary()}, sort_keys=True) + "\n")

    def write_table(self, path) -> None:
        """Tab-separated iterate table: header row, one row per iterate,
        and a summary footer as a comment line."""
        dim = self.initial.shape[0]
        with open(path, "w") as fh:
            cols = ["t", "r"] + [f"x{m}" for m in range(dim)]
            fh.write("\t".join(cols) + "\n")
            for t, r, p in self.iterates:
                row = [str(t), "" if r is None else repr(float(r))]
                row += [repr(float(v)) for v in p]
                fh.write("\t".join(row) + "\n")
            summary = self.summary()
            fh.write("# " + "\t".join(f"{k}={summary[k]}" for k in sorted(summary))
                     + "\n")


def run_ilv(config: IlvConfig, stream: VoterStream) -> Trajectory:
    """Run the voting loop until the stopping rule fires or the cap is hit.

    Every voter in a batch responds to the same committed point with the
    same radius; the batch mean (which stays inside the ball) is projected
    and committed. Deterministic given (config, stream seed).
    """
    region, rule = config.region, config.stopping
    x = config.initial.copy()
    iterates: list = [(0, None, x.copy())]
    responses: list[ResponseRecord] = []
    status = "hit_cap"

    for t in range(1, rule.max_updates + 1):
        r = config.schedule.for_update(t, config.batch_size)
        batch = np.empty((config.batch_size, region.dim))
        for b in range(config.batch_size):
            voter = stream.next_voter()
            try:
                resp = respond(config.model, voter, x, r, config.q)
            except Exception as exc:
                raise ResponseError(t, stream.cursor - 1, x, exc) from exc
            responses.append(ResponseRecord(
                update=t, voter_index=stream.cursor - 1, point=resp.point,
                moved=resp.moved, bad_region=resp.bad_region))
            pt = region.project(resp.point) if config.project_each_response else resp.point
            batch[b] = pt
        x = region.project(np.mean(batch, axis=0))
        iterates.append((t, r, x.copy()))
        if t >= rule.window and stopping_check(
                [p for _, _, p in iterates[-(rule.window + 1):]], rule):
            status = "converged"
            break

    return Trajectory(initial=config.initial.copy(), iterates=iterates,
                      responses=responses, terminal_status=status)


def net_normalized_movement(traj: Trajectory, t: int, window: int) -> Vector:
    """Windowed per-dimension drift, each step normalized by its radius.

    Averages the window's increments (x_s - x_{s-1})/r_s for s in
    {t-window+1, ..., t}; cancelation to zero indicates stability that is
    robust to the radius decaying.
    """
    if window < 1 or t < window:
        raise ValueError("need t >= window >= 1")
    if t > traj.updates:
        raise ValueError("window exceeds trajectory length")
    pts = traj.points()
    radii = traj.radii()
    acc = np.zeros_like(traj.initial)
    for s in range(t - window + 1, t + 1):
        acc += (pts[s] - pts[s - 1]) / radii[s - 1]
    return acc / window
