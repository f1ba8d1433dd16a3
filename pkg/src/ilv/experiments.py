"""Experiment plans: declarative suites of voting runs across mechanisms,
voter groups, and starting points, with oracle targets attached and results
emitted as deterministic machine-readable reports.

A plan names a population, a region, the mechanisms to compare, starting
points, and a group count. Each (mechanism, group) pair owns one voter
stream lane; both starting points of a group replay the same voter
sequence, mirroring live elections where one group of voters works through
two sets.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .behavior import ResponseModel
from .engine import (
    IlvConfig,
    RadiusSchedule,
    StoppingRule,
    Trajectory,
    net_normalized_movement,
    run_ilv,
)
from .geometry import FeasibleRegion
from .oracles import (
    componentwise_median,
    directional_eq_residual,
    frozen_voters,
    mean_objective,
    social_optimum_bruteforce,
)
from .population import PopulationSpec
from .utilities import _order_str, parse_order

VOTER_LANE_ROOT = 0  # lanes are (0, mechanism_index, group)

#: Engine defaults, as fractions of the region's Linf diameter where noted.
DEFAULT_R0_FRACTION = 0.2
DEFAULT_TOL_FRACTION = 0.001
DEFAULT_BATCH = 10
DEFAULT_DECAY_EVERY = 60
DEFAULT_WINDOW = 30
DEFAULT_MAX_UPDATES = 5000


@dataclass(frozen=True)
class MechanismSpec:
    label: str
    q: float
    model: ResponseModel

    def __post_init__(self):
        object.__setattr__(self, "model", ResponseModel(self.model))

    def to_dict(self) -> dict:
        return {"label": self.label, "q": _order_str(self.q), "model": self.model.value}

    @classmethod
    def from_dict(cls, d: dict) -> "MechanismSpec":
        return cls(label=d["label"], q=parse_order(d["q"]),
                   model=ResponseModel(d["model"]))


@dataclass(frozen=True)
class EngineSettings:
    """Overrides for the engine defaults; None fields derive from the region."""

    schedule_kind: str = "stepped"
    r0: float | None = None
    decay_every: int = DEFAULT_DECAY_EVERY
    batch_size: int = DEFAULT_BATCH
    window: int = DEFAULT_WINDOW
    tol: float | None = None
    max_updates: int = DEFAULT_MAX_UPDATES
    project_each_response: bool = False

    def resolve(self, region: FeasibleRegion) -> "EngineSettings":
        diam = region.diameter_linf()
        return replace(
            self,
            r0=self.r0 if self.r0 is not None else DEFAULT_R0_FRACTION * diam,
            tol=self.tol if self.tol is not None else DEFAULT_TOL_FRACTION * diam)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule_kind, "r0": self.r0,
            "decay_every": self.decay_every, "batch_size": self.batch_size,
            "window": self.window, "tol": self.tol,
            "max_updates": self.max_updates,
            "project_each_response": self.project_each_response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineSettings":
        return cls(
            schedule_kind=d.get("schedule", "stepped"),
            r0=d.get("r0"),
            decay_every=int(d.get("decay_every", DEFAULT_DECAY_EVERY)),
            batch_size=int(d.get("batch_size", DEFAULT_BATCH)),
            window=int(d.get("window", DEFAULT_WINDOW)),
            tol=d.get("tol"),
            max_updates=int(d.get("max_updates", DEFAULT_MAX_UPDATES)),
            project_each_response=bool(d.get("project_each_response", False)))


@dataclass(frozen=True)
class OracleOptions:
    social_optimum: bool = False
    medians: bool = False
    directional_eq: bool = False
    grid_res: float = 0.01
    n_voters: int = 10_000
    n_median_samples: int = 100_000
    n_residual_samples: int = 100_000

    def to_dict(self) -> dict:
        return {
            "social_optimum": self.social_optimum, "medians": self.medians,
            "directional_eq": self.directional_eq, "grid_res": self.grid_res,
            "n_voters": self.n_voters, "n_median_samples": self.n_median_samples,
            "n_residual_samples": self.n_residual_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleOptions":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    population: PopulationSpec
    region: FeasibleRegion
    mechanisms: tuple[MechanismSpec, ...]
    starting_points: tuple
    groups: int = 1
    engine: EngineSettings = field(default_factory=EngineSettings)
    oracles: OracleOptions = field(default_factory=OracleOptions)

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        starts = tuple(np.asarray(s, dtype=float) for s in self.starting_points)
        object.__setattr__(self, "starting_points", starts)
        if not self.mechanisms or not starts:
            raise ValueError("plan needs at least one mechanism and starting point")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")
        for s in starts:
            if not self.region.contains(s):
                raise ValueError(f"starting point {s} infeasible")
        lo, hi = self.population.support_box()
        if np.any(lo < self.region.lo - 1e-9) or np.any(hi > self.region.hi + 1e-9):
            raise ValueError("population ideal support exceeds the feasible region")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "population": self.population.to_dict(),
            "region": self.region.to_dict(),
            "mechanisms": [m.to_dict() for m in self.mechanisms],
            "starting_points": [s.tolist() for s in self.starting_points],
            "groups": self.groups,
            "engine": self.engine.to_dict(),
            "oracles": self.oracles.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        return cls(
            name=d.get("name", "plan"),
            population=PopulationSpec.from_dict(d["population"]),
            region=FeasibleRegion.from_dict(d["region"]),
            mechanisms=tuple(MechanismSpec.from_dict(m) for m in d["mechanisms"]),
            starting_points=tuple(np.asarray(s, dtype=float)
                                  for s in d["starting_points"]),
            groups=int(d.get("groups", 1)),
            engine=EngineSettings.from_dict(d.get("engine", {})),
            oracles=OracleOptions.from_dict(d.get("oracles", {})))


def load_plan(path) -> ExperimentPlan:
    with open(path) as fh:
        return ExperimentPlan.from_dict(yaml.safe_load(fh))


def save_plan(plan: ExperimentPlan, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(plan.to_dict(), fh, sort_keys=True)


def build_config(plan: ExperimentPlan, mech: MechanismSpec, start) -> IlvConfig:
    eng = plan.engine.resolve(plan.region)
    return IlvConfig(
        region=plan.region,
        initial=np.asarray(start, dtype=float),
        q=mech.q,
        model=mech.model,
        schedule=RadiusSchedule(kind=eng.schedule_kind, r0=eng.r0,
                                decay_every=eng.decay_every),
        stopping=StoppingRule(window=eng.window, tol=eng.tol,
                              max_updates=eng.max_updates),
        batch_size=eng.batch_size,
        project_each_response=eng.project_each_response)


def run_id_for(mech_label: str, group: int, start_index: int) -> str:
    return f"{mech_label}-g{group}-s{start_index}"


def _execute_run(plan: ExperimentPlan, mech_index: int, group: int,
                 start_index: int) -> tuple[dict, Trajectory | None]:
    mech = plan.mechanisms[mech_index]
    lane = (VOTER_LANE_ROOT, mech_index, group)
    record = {
        "run_id": run_id_for(mech.label, group, start_index),
        "mechanism": mech.label,
        "group": group,
        "start_index": start_index,
        "lane": list(lane),
    }
    try:
        cfg = build_config(plan, mech, plan.starting_points[start_index])
        started = time.perf_counter()
        traj = run_ilv(cfg, plan.population.stream(lane))
        elapsed = time.perf_counter() - started
        nnm_window = min(DEFAULT_WINDOW, traj.updates)
        nnm = net_normalized_movement(traj, traj.updates, nnm_window)
        record.update({
            "status": traj.terminal_status,
            "terminal": traj.terminal.tolist(),
            "updates": traj.updates,
            "responses": len(traj.responses),
            "bad_region_count": traj.bad_region_count,
            "net_normalized_movement_tail": nnm.tolist(),
        })
        # wall time travels outside the record so reports stay deterministic
        record["_elapsed_s"] = round(elapsed, 3)
        return record, traj
    except Exception as exc:  # isolate failures; the plan continues
        record.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        return record, None


def _execute_run_args(args):
    return _execute_run(*args)


@dataclass
class RunReport:
    plan: ExperimentPlan
    runs: list[dict]
    oracle_results: dict
    mechanism_summaries: list[dict]
    meta: dict
    trajectories: dict = field(default_factory=dict)  # run_id -> Trajectory

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "plan": self.plan.to_dict(),
            "oracles": self.oracle_results,
            "runs": self.runs,
            "mechanisms": self.mechanism_summaries,
        }

    def deterministic_json(self) -> str:
        d = self.to_dict()
        d.pop("meta")
        return json.dumps(d, sort_keys=True, indent=2)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def run_record(self, run_id: str) -> dict:
        for rec in self.runs:
            if rec["run_id"] == run_id:
                return rec
        raise KeyError(f"no run {run_id!r} in report")


def run_plan(plan: ExperimentPlan, workers: int = 1,
             keep_trajectories: bool = True) -> RunReport:
    """Execute all (mechanism x group x start) runs and assemble the report.

    Runs are independent (one stream lane per mechanism/group); with
    workers > 1 they execute on a process pool and are merged back in plan
    order, so reports are deterministic either way.
    """
    tasks = [(plan, mi, g, si)
             for mi in range(len(plan.mechanisms))
             for g in range(plan.groups)
             for si in range(len(plan.starting_points))]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_run_args, tasks))
    else:
        outcomes = [_execute_run(*t) for t in tasks]

    runs = [rec for rec, _ in outcomes]
    timings = {rec["run_id"]: rec.pop("_elapsed_s")
               for rec in runs if "_elapsed_s" in rec}
    trajectories = {rec["run_id"]: traj for rec, traj in outcomes if traj is not None}

    oracle_results = compute_oracles(plan)
    _attach_oracle_gaps(plan, runs, oracle_results)

    summaries = []
    for mech in plan.mechanisms:
        terms = [np.asarray(r["terminal"]) for r in runs
                 if r["mechanism"] == mech.label and r["status"] != "failed"]
        summaries.append({
            "mechanism": mech.label,
            "runs": len([r for r in runs if r["mechanism"] == mech.label]),
            "failed": len([r for r in runs if r["mechanism"] == mech.label
                           and r["status"] == "failed"]),
            "dispersion_linf": _dispersion(terms),
        })

    meta = {"created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "tool": "ilv", "run_seconds": timings}
    return RunReport(plan=plan, runs=runs, oracle_results=oracle_results,
                     mechanism_summaries=summaries, meta=meta,
                     trajectories=trajectories if keep_trajectories else {})


def _dispersion(terminals) -> float | None:
    """Max pairwise Linf distance between terminal points."""
    if len(terminals) < 2:
        return 0.0 if terminals else None
    pts = np.stack(terminals)
    return float(np.max(np.max(pts, axis=0) - np.min(pts, axis=0)))


def compute_oracles(plan: ExperimentPlan) -> dict:
    opts = plan.oracles
    out: dict = {}
    if opts.social_optimum:
        res = social_optimum_bruteforce(plan.population, plan.region,
                                        n_voters=opts.n_voters,
                                        grid_res=opts.grid_res)
        out["social_optimum"] = res.to_dict()
    if opts.medians:
        ideals = plan.population.sample_ideals(opts.n_median_samples)
        out["medians"] = {"point": componentwise_median(ideals).tolist(),
                          "samples_used": opts.n_median_samples}
    return out


def _attach_oracle_gaps(plan: ExperimentPlan, runs: list[dict], oracles: dict) -> None:
    opt = oracles.get("social_optimum")
    med = oracles.get("medians")
    voters = (frozen_voters(plan.population, plan.oracles.n_voters)
              if opt is not None else None)
    for rec in runs:
        if rec["status"] == "failed":
            continue
        term = np.asarray(rec["terminal"])
        if opt is not None:
            gap = float(np.max(np.abs(term - np.asarray(opt["point"]))))
            term_obj = float(mean_objective(voters, term[None, :])[0])
            rec["optimum_gap_linf"] = gap
            rec["terminal_objective"] = term_obj
            rec["objective_gap_rel"] = abs(term_obj - opt["objective"]) / \
                max(abs(opt["objective"]), 1e-12)
        if med is not None:
            rec["median_gap_linf"] = float(
                np.max(np.abs(term - np.asarray(med["point"]))))
        if plan.oracles.directional_eq:
            res = directional_eq_residual(term, plan.population,
                                          n_samples=plan.oracles.n_residual_samples)
            rec["residual"] = res.to_dict()
            rec["residual_norm"] = res.norm
            rec["residual_3se"] = 3 * res.stderr_norm


def replay_run(report: RunReport | dict, run_id: str) -> Trajectory:
    """Re-execute one run from its recorded plan, lane, and start."""
    if isinstance(report, dict):
        plan = ExperimentPlan.from_dict(report["plan"])
        runs = report["runs"]
    else:
        plan = report.plan
        runs = report.runs
    rec = next((r for r in runs if r["run_id"] == run_id), None)
    if rec is None:
        raise KeyError(f"no run {run_id!r} in report")
    mech_index = next(i for i, m in enumerate(plan.mechanisms)
                      if m.label == rec["mechanism"])
    cfg = build_config(plan, plan.mechanisms[mech_index],
                       plan.starting_points[rec["start_index"]])
    return run_ilv(cfg, plan.population.stream(tuple(rec["lane"])))
