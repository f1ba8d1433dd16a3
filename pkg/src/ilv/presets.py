"""Named verification suites: simulated-population runs checked against
independent oracles at fixed tolerances.

Each preset builds experiment plans, executes them, and grades the results:

* ``thm1``        -- best-response voting with dual pairs (2,2), (1,inf),
                     (inf,1) lands on the grid-search social optimum.
* ``thm2``        -- gradient-step voting with general dual pairs
                     (3, 1.5) and (1.5, 3) does the same.
* ``prop1``       -- weighted Euclidean utilities under L2 balls reach the
                     social optimum (objective parity; the optimum may be
                     non-unique in position).
* ``prop2``       -- decomposable utilities under Linf balls reach the
                     component-wise medians, consistently across groups
                     and starting points.
* ``de-residual`` -- the mean normalized utility gradient vanishes (within
                     3 Monte Carlo standard errors) at terminals of
                     L2/gradient-step runs.
* ``offtheory``   -- a non-dual pairing, reported as carrying no guarantee
                     rather than graded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behavior import ResponseModel
from .experiments import (
    EngineSettings,
    ExperimentPlan,
    MechanismSpec,
    OracleOptions,
    run_plan,
)
from .geometry import FeasibleRegion
from .oracles import directional_eq_residual
from .population import PopulationSpec, TruncGauss, Uniform

PRESETS = ("thm1", "thm2", "prop1", "prop2", "de-residual", "offtheory")

POINT_TOL_FRACTION = 0.02      # of the region's Linf diameter
OBJECTIVE_TOL_REL = 0.005
DISPERSION_TOL_FRACTION = 0.01
RESIDUAL_SE_MULTIPLE = 3.0

_REGION2 = FeasibleRegion.unit_box(2)
_REGION4 = FeasibleRegion.unit_box(4)


def _gauss_ideals(mus, sigma=0.25):
    return tuple(TruncGauss(mu=m, sigma=sigma, lo=0.0, hi=1.0) for m in mus)


@dataclass
class CriterionRow:
    name: str
    measured: float | None
    threshold: float | None
    passed: bool | None  # None = informational only
    note: str = ""

    def format(self) -> str:
        if self.passed is None:
            return f"INFO {self.name}: {self.note}"
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: measured={self.measured:.6g} "
                f"threshold={self.threshold:.6g}"
                + (f" ({self.note})" if self.note else ""))


@dataclass
class VerifyResult:
    preset: str
    rows: list[CriterionRow]
    reports: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.passed is not None)

    def format(self) -> str:
        lines = [f"== preset {self.preset} =="]
        lines += [r.format() for r in self.rows]
        lines.append(f"-- {'PASS' if self.passed else 'FAIL'} "
                     f"({sum(1 for r in self.rows if r.passed is not None)} graded rows)")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"preset": self.preset, "passed": self.passed,
                "rows": [vars(r) for r in self.rows]}


def verify_theorems(preset: str, workers: int = 1) -> VerifyResult:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    return _RUNNERS[preset](workers)


# ---------------------------------------------------------------------------
# Suite construction
# ---------------------------------------------------------------------------

def _lp_plan(name, p, q, model, seed, groups=5, engine=None,
             starts=((0.15, 0.2), (0.85, 0.75)), oracles=None) -> ExperimentPlan:
    return ExperimentPlan(
        name=name,
        population=PopulationSpec(family="lp", seed=seed, p=p,
                                  ideal_dists=_gauss_ideals((0.35, 0.6))),
        region=_REGION2,
        mechanisms=(MechanismSpec(label=name, q=q, model=model),),
        starting_points=starts,
        groups=groups,
        engine=engine or EngineSettings(schedule_kind="harmonic", batch_size=1,
                                        tol=1e-9, max_updates=20_000),
        oracles=oracles or OracleOptions(social_optimum=True, grid_res=0.01))


RUNTIME_TARGET_S = 60.0


def _grade_optimum_runs(rows, report, diam, label):
    point_tol = POINT_TOL_FRACTION * diam
    for rec in report.runs:
        rid = rec["run_id"]
        if rec["status"] == "failed":
            rows.append(CriterionRow(f"{label} {rid}", None, None, False,
                                     note=rec.get("error", "failed")))
            continue
        rows.append(CriterionRow(f"{label} {rid} point", rec["optimum_gap_linf"],
                                 point_tol, rec["optimum_gap_linf"] <= point_tol))
        rows.append(CriterionRow(f"{label} {rid} objective", rec["objective_gap_rel"],
                                 OBJECTIVE_TOL_REL,
                                 rec["objective_gap_rel"] <= OBJECTIVE_TOL_REL))
    timings = report.meta.get("run_seconds", {})
    if timings:
        slowest = max(timings.values())
        rows.append(CriterionRow(f"{label} runtime per run (s)", slowest,
                                 RUNTIME_TARGET_S, slowest < RUNTIME_TARGET_S))


def _run_thm1(workers: int) -> VerifyResult:
    rows: list[CriterionRow] = []
    reports = {}
    pairs = [(2.0, 2.0), (1.0, math.inf), (math.inf, 1.0)]
    for i, (p, q) in enumerate(pairs):
        name = f"thm1-p{p:g}-q{q:g}"
        plan = _lp_plan(name, p, q, ResponseModel.BEST_RESPONSE, seed=1000 + i)
        report = run_plan(plan, workers=workers, keep_trajectories=False)
        reports[name] = report
        _grade_optimum_runs(rows, report, plan.region.diameter_linf(), name)
    return VerifyResult(preset="thm1", rows=rows, reports=reports)


def _run_thm2(workers: int) -> VerifyResult:
    rows: list[CriterionRow] = []
    reports = {}
    pairs = [(3.0, 1.5), (1.5, 3.0)]
    for i, (p, q) in enumerate(pairs):
        name = f"thm2-p{p:g}-q{q:g}"
        plan = _lp_plan(name, p, q, ResponseModel.GRADIENT_STEP, seed=2000 + i)
        report = run_plan(plan, workers=workers, keep_trajectories=False)
        reports[name] = report
        _grade_optimum_runs(rows, report, plan.region.diameter_linf(), name)
    return VerifyResult(preset="thm2", rows=rows, reports=reports)


def _we_population(seed):
    return PopulationSpec(
        family="weighted_euclidean", seed=seed,
        ideal_dists=_gauss_ideals((0.35, 0.6, 0.45, 0.55)),
        blocks=((0, 1), (2, 3)),
        weight_dists=(Uniform(0.2, 1.0), Uniform(0.2, 1.0)))


def _we_plan(model: ResponseModel, max_updates: int,
             oracles: OracleOptions | None = None) -> ExperimentPlan:
    label = f"prop1-{model.value}"
    return ExperimentPlan(
        name=label,
        population=_we_population(seed=3000),
        region=_REGION4,
        mechanisms=(MechanismSpec(label=label, q=2.0, model=model),),
        starting_points=((0.3, 0.3, 0.3, 0.3), (0.7, 0.7, 0.7, 0.7)),
        groups=3,
        engine=EngineSettings(schedule_kind="harmonic", batch_size=10,
                              tol=1e-9, max_updates=max_updates),
        oracles=oracles if oracles is not None
        else OracleOptions(social_optimum=True, grid_res=0.1))


def _run_prop1(workers: int) -> VerifyResult:
    rows: list[CriterionRow] = []
    reports = {}
    # optimum position may be non-unique: grade objectives only
    for model, max_updates in ((ResponseModel.BEST_RESPONSE, 5000),
                               (ResponseModel.GRADIENT_STEP, 20_000)):
        plan = _we_plan(model, max_updates)
        report = run_plan(plan, workers=workers, keep_trajectories=False)
        reports[plan.name] = report
        for rec in report.runs:
            rid = rec["run_id"]
            if rec["status"] == "failed":
                rows.append(CriterionRow(f"{rid}", None, None, False,
                                         note=rec.get("error", "failed")))
                continue
            rows.append(CriterionRow(f"{rid} objective", rec["objective_gap_rel"],
                                     OBJECTIVE_TOL_REL,
                                     rec["objective_gap_rel"] <= OBJECTIVE_TOL_REL))
    return VerifyResult(preset="prop1", rows=rows, reports=reports)


def prop2_plan() -> ExperimentPlan:
    return ExperimentPlan(
        name="prop2-linf-medians",
        population=PopulationSpec(
            family="decomposable", seed=4000,
            ideal_dists=_gauss_ideals((0.3, 0.45, 0.55, 0.7), sigma=0.2)),
        region=_REGION4,
        mechanisms=(MechanismSpec(label="linf", q=math.inf,
                                  model=ResponseModel.BEST_RESPONSE),),
        starting_points=((0.2, 0.2, 0.2, 0.2), (0.8, 0.8, 0.8, 0.8)),
        groups=3,
        engine=EngineSettings(schedule_kind="stepped", batch_size=10,
                              decay_every=60, tol=1e-9, max_updates=5000),
        oracles=OracleOptions(medians=True))


def _run_prop2(workers: int) -> VerifyResult:
    rows: list[CriterionRow] = []
    plan = prop2_plan()
    report = run_plan(plan, workers=workers, keep_trajectories=False)
    diam = plan.region.diameter_linf()
    point_tol = POINT_TOL_FRACTION * diam
    for rec in report.runs:
        rid = rec["run_id"]
        if rec["status"] == "failed":
            rows.append(CriterionRow(rid, None, None, False,
                                     note=rec.get("error", "failed")))
            continue
        rows.append(CriterionRow(f"{rid} median gap", rec["median_gap_linf"],
                                 point_tol, rec["median_gap_linf"] <= point_tol))
    disp = report.mechanism_summaries[0]["dispersion_linf"]
    disp_tol = DISPERSION_TOL_FRACTION * diam
    rows.append(CriterionRow("prop2 dispersion across groups and starts", disp,
                             disp_tol, disp is not None and disp <= disp_tol))
    return VerifyResult(preset="prop2", rows=rows, reports={plan.name: report})


def de_residual_plans() -> list[ExperimentPlan]:
    """L2/gradient-step companions at the thm1 and prop1 populations.

    Both use the batched stepped-decay protocol (the engine defaults): the
    harmonic per-update schedule leaves an initial-condition bias that the
    flat weighted-Euclidean gradient field contracts too slowly to clear
    within the update budget.
    """
    stepped = EngineSettings(schedule_kind="stepped", batch_size=10,
                             decay_every=60, tol=1e-9, max_updates=20_000)
    lp = _lp_plan("de-lp", p=2.0, q=2.0, model=ResponseModel.GRADIENT_STEP,
                  seed=1000, groups=5,
                  starts=((0.3, 0.3), (0.7, 0.7)),
                  engine=stepped, oracles=OracleOptions())
    we = ExperimentPlan(
        name="de-we",
        population=_we_population(seed=3000),
        region=_REGION4,
        mechanisms=(MechanismSpec(label="de-we", q=2.0,
                                  model=ResponseModel.GRADIENT_STEP),),
        starting_points=((0.3, 0.3, 0.3, 0.3), (0.7, 0.7, 0.7, 0.7)),
        groups=3,
        engine=stepped,
        oracles=OracleOptions())
    return [lp, we]


def _run_de_residual(workers: int) -> VerifyResult:
    rows: list[CriterionRow] = []
    reports = {}
    for plan in de_residual_plans():
        report = run_plan(plan, workers=workers, keep_trajectories=False)
        reports[plan.name] = report
        for rec in report.runs:
            rid = rec["run_id"]
            if rec["status"] == "failed":
                rows.append(CriterionRow(rid, None, None, False,
                                         note=rec.get("error", "failed")))
                continue
            res = directional_eq_residual(np.asarray(rec["terminal"]),
                                          plan.population, n_samples=100_000)
            bound = RESIDUAL_SE_MULTIPLE * res.stderr_norm
            rows.append(CriterionRow(f"{plan.name} {rid} residual", res.norm,
                                     bound, res.norm <= bound))
    return VerifyResult(preset="de-residual", rows=rows, reports=reports)


def _run_offtheory(workers: int) -> VerifyResult:
    # non-dual pairing: runs complete but carry no convergence guarantee
    plan = ExperimentPlan(
        name="offtheory-p1-q1",
        population=PopulationSpec(family="lp", seed=5000, p=1.0,
                                  ideal_dists=_gauss_ideals((0.35, 0.6))),
        region=_REGION2,
        mechanisms=(MechanismSpec(label="p1-q1", q=1.0,
                                  model=ResponseModel.GRADIENT_STEP),),
        starting_points=((0.2, 0.2),),
        groups=2,
        engine=EngineSettings(schedule_kind="harmonic", batch_size=1,
                              tol=1e-9, max_updates=500),
        oracles=OracleOptions())
    report = run_plan(plan, workers=workers, keep_trajectories=False)
    rows = [CriterionRow(f"offtheory {rec['run_id']}", None, None, None,
                         note="no theoretical guarantee (non-dual pair); "
                              f"status={rec['status']}")
            for rec in report.runs]
    return VerifyResult(preset="offtheory", rows=rows, reports={plan.name: report})


_RUNNERS = {
    "thm1": _run_thm1,
    "thm2": _run_thm2,
    "prop1": _run_prop1,
    "prop2": _run_prop2,
    "de-residual": _run_de_residual,
    "offtheory": _run_offtheory,
}
