"""Election instance state: an append-only event log per instance with the
live state as a pure fold over it.

Events are newline-delimited JSON objects ``{seq, type, payload, ts}``.
Mutations validate against current state, append the event (fsync on batch
commits), then fold it in; replaying the log from genesis reproduces the
state exactly. A JSON snapshot is written every SNAPSHOT_EVERY events so
restarts only replay the tail.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import FeasibleRegion, lq_norm
from ..utilities import deficit as compute_deficit
from ..utilities import parse_order, _order_str

CONSTRAINT_SLACK = 1e-6   # accepted usage: ||move||_q <= r * (1 + slack)
SNAPSHOT_EVERY = 100
WEIGHT_MAX = 10.0


class VoteRejected(Exception):
    def __init__(self, reason: str, **info):
        super().__init__(reason)
        self.reason = reason
        self.info = info


@dataclass(frozen=True)
class DimSpec:
    label: str
    baseline: float
    kind: str  # "expenditure" | "income"
    lo: float = 0.0
    hi: float | None = None  # default: 2 * baseline
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("expenditure", "income"):
            raise ValueError(f"dim kind must be expenditure or income, got {self.kind!r}")
        if self.hi is None:
            object.__setattr__(self, "hi", 2.0 * self.baseline)
        if not self.lo < self.hi:
            raise ValueError("dim needs lo < hi")

    def to_dict(self) -> dict:
        return {"label": self.label, "baseline": self.baseline, "kind": self.kind,
                "lo": self.lo, "hi": self.hi, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "DimSpec":
        return cls(label=d["label"], baseline=float(d["baseline"]), kind=d["kind"],
                   lo=float(d.get("lo", 0.0)), hi=d.get("hi"),
                   description=d.get("description", ""))


@dataclass(frozen=True)
class InstanceConfig:
    instance_id: str
    kind: str  # "constrained" | "full_elicitation"
    dims: tuple[DimSpec, ...]
    starting_points: tuple
    q: float | None = None
    r0: float | None = None
    batch_size: int = 10
    decay_every: int = 60
    discard_partial_on_close: bool = True

    def __post_init__(self):
        if self.kind not in ("constrained", "full_elicitation"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(self.dims))
        starts = tuple(np.asarray(s, dtype=float) for s in self.starting_points)
        object.__setattr__(self, "starting_points", starts)
        if self.kind == "constrained":
            if self.q is None or self.r0 is None or self.r0 <= 0:
                raise ValueError("constrained instances need q and r0 > 0")
            object.__setattr__(self, "q", parse_order(self.q))
        if not starts:
            raise ValueError("need at least one starting point (set)")
        region = self.region()
        for s in starts:
            if s.shape != (len(self.dims),):
                raise ValueError("starting point dimension mismatch")
            if not region.contains(s):
                raise ValueError(f"starting point {s} outside the dim bounds")
        if self.batch_size < 1 or self.decay_every < 1:
            raise ValueError("batch_size and decay_every must be >= 1")

    def region(self) -> FeasibleRegion:
        return FeasibleRegion.box([d.lo for d in self.dims],
                                  [d.hi for d in self.dims])

    def expenditure_dims(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.dims) if d.kind == "expenditure")

    def income_dims(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.dims) if d.kind == "income")

    def radius_for_submission(self, t: int) -> float:
        """Radius in force for the t-th submission (1-based) of a set."""
        return self.r0 / int(np.ceil(t / self.decay_every))

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id, "kind": self.kind,
            "dims": [d.to_dict() for d in self.dims],
            "starting_points": [s.tolist() for s in self.starting_points],
            "q": None if self.q is None else _order_str(self.q),
            "r0": self.r0, "batch_size": self.batch_size,
            "decay_every": self.decay_every,
            "discard_partial_on_close": self.discard_partial_on_close,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceConfig":
        return cls(
            instance_id=d["instance_id"], kind=d["kind"],
            dims=tuple(DimSpec.from_dict(x) for x in d["dims"]),
            starting_points=tuple(np.asarray(s, dtype=float)
                                  for s in d["starting_points"]),
            q=None if d.get("q") is None else parse_order(d["q"]),
            r0=d.get("r0"), batch_size=int(d.get("batch_size", 10)),
            decay_every=int(d.get("decay_every", 60)),
            discard_partial_on_close=bool(d.get("discard_partial_on_close", True)))


@dataclass
class SetState:
    current: np.ndarray
    buffer: list = field(default_factory=list)      # pending points
    buffer_sessions: list = field(default_factory=list)
    submissions: int = 0
    commits: int = 0
    voted_sessions: set = field(default_factory=set)
    committed_points: list = field(default_factory=list)  # (t, radius, point)

    def to_dict(self) -> dict:
        return {
            "current": self.current.tolist(),
            "buffer": [p.tolist() for p in self.buffer],
            "buffer_sessions": list(self.buffer_sessions),
            "submissions": self.submissions,
            "commits": self.commits,
            "voted_sessions": sorted(self.voted_sessions),
            "committed_points": [[t, r, p.tolist()] for t, r, p in self.committed_points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SetState":
        return cls(
            current=np.asarray(d["current"], dtype=float),
            buffer=[np.asarray(p, dtype=float) for p in d["buffer"]],
            buffer_sessions=list(d["buffer_sessions"]),
            submissions=int(d["submissions"]),
            commits=int(d["commits"]),
            voted_sessions=set(d["voted_sessions"]),
            committed_points=[(int(t), float(r), np.asarray(p, dtype=float))
                              for t, r, p in d["committed_points"]])


@dataclass
class InstanceState:
    config: InstanceConfig
    sets: list[SetState]
    status: str = "open"
    assigned_sessions: set = field(default_factory=set)
    elicitations: list = field(default_factory=list)
    last_seq: int = 0

    @property
    def busy(self) -> bool:
        """A set is one submission short of a commit: assigning more voters
        now risks them voting against a point about to change."""
        b1 = self.config.batch_size
        return any(len(s.buffer) == b1 - 1 for s in self.sets)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "sets": [s.to_dict() for s in self.sets],
            "status": self.status,
            "assigned_sessions": sorted(self.assigned_sessions),
            "elicitations": self.elicitations,
            "last_seq": self.last_seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceState":
        return cls(config=InstanceConfig.from_dict(d["config"]),
                   sets=[SetState.from_dict(s) for s in d["sets"]],
                   status=d["status"],
                   assigned_sessions=set(d["assigned_sessions"]),
                   elicitations=list(d["elicitations"]),
                   last_seq=int(d["last_seq"]))


# ---------------------------------------------------------------------------
# The fold
# ---------------------------------------------------------------------------

def initial_state(config: InstanceConfig) -> InstanceState:
    return InstanceState(config=config,
                         sets=[SetState(current=s.copy())
                               for s in config.starting_points])


def apply_event(state: InstanceState, event: dict) -> InstanceState:
    """Fold one event into the state (mutating; returns the state)."""
    etype = event["type"]
    payload = event["payload"]
    if etype == "created":
        pass  # state was initialized from the config carried by this event
    elif etype == "assigned":
        state.assigned_sessions.add(payload["session_id"])
    elif etype == "vote":
        s = state.sets[payload["set_index"]]
        s.buffer.append(np.asarray(payload["point"], dtype=float))
        s.buffer_sessions.append(payload["session_id"])
        s.submissions += 1
        s.voted_sessions.add(payload["session_id"])
        if len(s.buffer) == state.config.batch_size:
            region = state.config.region()
            new_point = region.project(np.mean(np.stack(s.buffer), axis=0))
            s.commits += 1
            s.committed_points.append(
                (s.commits, float(payload["radius"]), new_point.copy()))
            s.current = new_point
            s.buffer = []
            s.buffer_sessions = []
    elif etype == "elicitation":
        state.elicitations.append(payload)
    elif etype == "closed":
        state.status = "closed"
        if payload.get("discard_partial", True):
            for s in state.sets:
                s.buffer = []
                s.buffer_sessions = []
    else:
        raise ValueError(f"unknown event type {etype!r}")
    state.last_seq = event["seq"]
    return state


def replay_events(events) -> InstanceState:
    """Rebuild instance state from its event log alone."""
    it = iter(events)
    first = next(it)
    if first["type"] != "created":
        raise ValueError("event log must start with a created event")
    state = initial_state(InstanceConfig.from_dict(first["payload"]))
    state.last_seq = first["seq"]
    for ev in it:
        apply_event(state, ev)
    return state


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

class EventLog:
    """Append-only newline-delimited JSON event file."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: dict, fsync: bool = False) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            if fsync:
                os.fsync(fh.fileno())

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


class InstanceStore:
    """All live election instances, persisted under one data directory.

    Mutations serialize through a per-instance lock (one logical writer);
    reads go through an immutable view dict that is swapped wholesale after
    each mutation, so they never block on writers.
    """

    def __init__(self, data_dir, assignment_seed: int | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._instances: dict[str, InstanceState] = {}
        self._views: dict[str, dict] = {}
        self._logs: dict[str, EventLog] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._assignments: dict[str, str] = {}  # session -> instance
        self._global_lock = threading.RLock()
        self._rng = np.random.default_rng(assignment_seed)
        self._load_existing()

    # -- persistence ------------------------------------------------------

    def _instance_dir(self, instance_id: str) -> Path:
        return self.data_dir / "instances" / instance_id

    def _load_existing(self) -> None:
        root = self.data_dir / "instances"
        if not root.exists():
            return
        for d in sorted(root.iterdir()):
            if not (d / "events.ndjson").exists():
                continue
            log = EventLog(d / "events.ndjson")
            events = log.read_all()
            snap_path = d / "snapshot.json"
            state = None
            if snap_path.exists():
                snap = json.loads(snap_path.read_text())
                state = InstanceState.from_dict(snap["state"])
                tail = [ev for ev in events if ev["seq"] > snap["seq"]]
                for ev in tail:
                    apply_event(state, ev)
            elif events:
                state = replay_events(events)
            if state is None:
                continue
            iid = state.config.instance_id
            self._instances[iid] = state
            self._logs[iid] = log
            self._locks[iid] = threading.RLock()
            self._refresh_view(iid)
            for session in state.assigned_sessions:
                self._assignments[session] = iid

    def _append(self, instance_id: str, etype: str, payload: dict,
                fsync: bool = False) -> dict:
        state = self._instances[instance_id]
        event = {"seq": state.last_seq + 1, "type": etype, "payload": payload,
                 "timestamp": time.time()}
        self._logs[instance_id].append(event, fsync=fsync)
        apply_event(state, event)
        if event["seq"] % SNAPSHOT_EVERY == 0:
            self._write_snapshot(instance_id)
        self._refresh_view(instance_id)
        return event

    def _write_snapshot(self, instance_id: str) -> None:
        state = self._instances[instance_id]
        path = self._instance_dir(instance_id) / "snapshot.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"seq": state.last_seq, "state": state.to_dict()},
                                  sort_keys=True))
        tmp.replace(path)

    def _refresh_view(self, instance_id: str) -> None:
        state = self._instances[instance_id]
        cfg = state.config
        sets = []
        for i, s in enumerate(state.sets):
            radius = (cfg.radius_for_submission(s.submissions + 1)
                      if cfg.kind == "constrained" else None)
            sets.append({
                "index": i,
                "point": s.current.tolist(),
                "radius": radius,
                "version": s.commits,
                "submissions": s.submissions,
                "pending": len(s.buffer),
                "percent_from_baseline": [
                    100.0 * (s.current[m] - d.baseline) / d.baseline
                    if d.baseline else 0.0
                    for m, d in enumerate(cfg.dims)],
                "deficit": compute_deficit(s.current, cfg.expenditure_dims(),
                                           cfg.income_dims()),
            })
        self._views[instance_id] = {
            "instance_id": instance_id,
            "kind": cfg.kind,
            "q": None if cfg.q is None else _order_str(cfg.q),
            "status": state.status,
            "busy": state.busy,
            "dims": [d.to_dict() for d in cfg.dims],
            "sets": sets,
            "assigned_sessions": len(state.assigned_sessions),
            "elicitations": len(state.elicitations),
        }

    # -- operations ---------------------------------------------------------

    def create_instance(self, config: InstanceConfig) -> str:
        iid = config.instance_id
        with self._global_lock:
            if iid in self._instances:
                raise ValueError(f"instance {iid!r} already exists")
            self._instances[iid] = initial_state(config)
            self._logs[iid] = EventLog(self._instance_dir(iid) / "events.ndjson")
            self._locks[iid] = threading.RLock()
            # seq bookkeeping: created carries seq 1
            self._instances[iid].last_seq = 0
            event = {"seq": 1, "type": "created", "payload": config.to_dict(),
                     "timestamp": time.time()}
            self._logs[iid].append(event, fsync=True)
            self._instances[iid].last_seq = 1
            self._refresh_view(iid)
        return iid

    def instance_ids(self) -> list[str]:
        return sorted(self._instances)

    def view(self, instance_id: str) -> dict:
        try:
            return self._views[instance_id]
        except KeyError:
            raise KeyError(f"unknown instance {instance_id!r}") from None

    def assignment_of(self, session_id: str) -> str | None:
        return self._assignments.get(session_id)

    def assign_session(self, session_id: str) -> str:
        """Balanced-random sticky assignment that avoids busy instances."""
        with self._global_lock:
            if session_id in self._assignments:
                return self._assignments[session_id]
            open_ids = [i for i in self.instance_ids()
                        if self._views[i]["status"] == "open"]
            if not open_ids:
                raise VoteRejected("all_instances_closed")
            candidates = [i for i in open_ids if not self._views[i]["busy"]]
            if not candidates:
                candidates = open_ids
            counts = {i: self._views[i]["assigned_sessions"] for i in candidates}
            least = min(counts.values())
            tied = [i for i in candidates if counts[i] == least]
            chosen = tied[int(self._rng.integers(len(tied)))]
            with self._locks[chosen]:
                self._append(chosen, "assigned", {"session_id": session_id})
            self._assignments[session_id] = chosen
            return chosen

    def submit_vote(self, instance_id: str, session_id: str, set_index: int,
                    point, point_version: int, justification: str | None = None) -> dict:
        """Validate and record one constrained vote.

        Accepted votes satisfy the Lq constraint against the committed
        current point the voter was shown; a vote against a stale point
        (version behind the latest commit) is rejected with a refresh hint.
        """
        with self._locks_for(instance_id):
            state = self._instances[instance_id]
            cfg = state.config
            if cfg.kind != "constrained":
                raise VoteRejected("not_a_constrained_instance")
            if state.status != "open":
                raise VoteRejected("instance_closed")
            if self._assignments.get(session_id) != instance_id:
                raise VoteRejected("session_not_assigned")
            if set_index < 0 or set_index >= len(state.sets):
                raise VoteRejected("unknown_set")
            s = state.sets[set_index]
            if session_id in s.voted_sessions:
                raise VoteRejected("duplicate_submission")
            point = np.asarray(point, dtype=float)
            if point.shape != (len(cfg.dims),) or not np.all(np.isfinite(point)):
                raise VoteRejected("malformed_point")
            if point_version != s.commits:
                raise VoteRejected("stale_point", current_version=s.commits)
            radius = cfg.radius_for_submission(s.submissions + 1)
            usage = lq_norm(point - s.current, cfg.q)
            if usage > radius * (1.0 + CONSTRAINT_SLACK):
                raise VoteRejected("constraint_violation",
                                   usage=usage, radius=radius,
                                   overage=usage - radius)
            will_commit = len(s.buffer) + 1 == cfg.batch_size
            self._append(instance_id, "vote", {
                "session_id": session_id, "set_index": set_index,
                "point": point.tolist(), "radius": radius,
                "version": point_version,
                "justification": justification,
            }, fsync=will_commit)
            s = self._instances[instance_id].sets[set_index]
            return {"accepted": True, "committed": will_commit,
                    "version": s.commits}

    def submit_elicitation(self, instance_id: str, session_id: str, ideals,
                           weights, deficit_weight: float) -> dict:
        with self._locks_for(instance_id):
            state = self._instances[instance_id]
            cfg = state.config
            if state.status != "open":
                raise VoteRejected("instance_closed")
            if self._assignments.get(session_id) != instance_id:
                raise VoteRejected("session_not_assigned")
            if any(p["session_id"] == session_id for p in state.elicitations):
                raise VoteRejected("duplicate_submission")
            ideals = np.asarray(ideals, dtype=float)
            weights = np.asarray(weights, dtype=float)
            if ideals.shape != (len(cfg.dims),) or weights.shape != (len(cfg.dims),):
                raise VoteRejected("malformed_point")
            for m, d in enumerate(cfg.dims):
                if not (d.lo - 1e-9 <= ideals[m] <= d.hi + 1e-9):
                    raise VoteRejected("ideal_out_of_range", dim=m)
            if np.any(weights < 0) or np.any(weights > WEIGHT_MAX) or \
                    not (0 <= deficit_weight <= WEIGHT_MAX):
                raise VoteRejected("weight_out_of_range")
            all_default = bool(np.all(weights == 5.0) and deficit_weight == 5.0)
            self._append(instance_id, "elicitation", {
                "session_id": session_id,
                "ideals": ideals.tolist(),
                "weights": weights.tolist(),
                "deficit_weight": float(deficit_weight),
                "all_default_weights": all_default,
            })
            return {"accepted": True, "all_default_weights": all_default}

    def close_instance(self, instance_id: str) -> dict:
        with self._locks_for(instance_id):
            state = self._instances[instance_id]
            if state.status == "closed":
                return {"status": "closed"}
            discarded = sum(len(s.buffer) for s in state.sets)
            self._append(instance_id, "closed", {
                "discard_partial": state.config.discard_partial_on_close,
                "pending_discarded": discarded,
            }, fsync=True)
            return {"status": "closed", "pending_discarded": discarded}

    def export_results(self, instance_id: str) -> dict:
        """Committed trajectories (engine file format) plus the event log."""
        with self._locks_for(instance_id):
            state = self._instances[instance_id]
            events = self._logs[instance_id].read_all()
            trajectories = []
            for s, start in zip(state.sets, state.config.starting_points):
                records = [{"t": 0, "r": None, "x": start.tolist()}]
                records += [{"t": t, "r": r, "x": p.tolist()}
                            for t, r, p in s.committed_points]
                trajectories.append(records)
            return {"instance": self.view(instance_id),
                    "trajectories": trajectories,
                    "events": events}

    def elicitation_aggregate(self, instance_id: str, bins: int = 20) -> dict:
        """Histograms and component-wise medians of elicited ideals."""
        from ..oracles import componentwise_median
        state = self._instances[instance_id]
        cfg = state.config
        records = state.elicitations
        if not records:
            return {"count": 0, "medians": None, "histograms": None,
                    "all_default_weight_count": 0}
        ideals = np.asarray([r["ideals"] for r in records])
        weights = np.asarray([r["weights"] for r in records])
        hists = []
        for m, d in enumerate(cfg.dims):
            counts, edges = np.histogram(ideals[:, m], bins=bins, range=(d.lo, d.hi))
            hists.append({"dim": d.label, "counts": counts.tolist(),
                          "edges": edges.tolist()})
        return {
            "count": len(records),
            "medians": componentwise_median(ideals).tolist(),
            "median_weights": componentwise_median(weights).tolist(),
            "histograms": hists,
            "all_default_weight_count": sum(
                1 for r in records if r.get("all_default_weights")),
        }

    def _locks_for(self, instance_id: str) -> threading.RLock:
        try:
            return self._locks[instance_id]
        except KeyError:
            raise KeyError(f"unknown instance {instance_id!r}") from None
