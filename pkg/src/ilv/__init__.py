"""Iterative local voting: neighborhood-constrained preference aggregation
in continuous spaces, with a simulation harness, validation oracles, and a
live election service."""

from .behavior import ResponseModel, VoterResponse, best_response, gradient_step, in_bad_region
from .engine import IlvConfig, RadiusSchedule, StoppingRule, Trajectory, run_ilv
from .geometry import FeasibleRegion, HalfSpace, lq_norm, normalized_step
from .population import PopulationSpec, VoterStream, replay
from .utilities import (
    DecomposableUtility,
    DlcdUtility,
    LpNormedUtility,
    Pwl1,
    Utility,
    WeightedEuclideanUtility,
    check_dual_norm_gradient,
    deficit,
    tent,
)

__version__ = "0.1.0"
