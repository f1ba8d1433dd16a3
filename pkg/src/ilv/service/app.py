"""HTTP service hosting live election instances.

Voters are assigned to instances, fetch the committed current point, and
submit constrained moves; every batch_size-th accepted vote commits the
batch average (projected into the dim bounds) and the movement radius
decays every decay_every submissions. Full-elicitation instances collect
ideal points and importance weights instead.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from .models import (
    AssignRequest,
    AssignResponse,
    CreateInstanceRequest,
    CreateInstanceResponse,
    CurrentResponse,
    ElicitationRequest,
    ElicitationResponse,
    FeedbackRequest,
    InstanceStateResponse,
    OkResponse,
    VoteRequest,
    VoteResponse,
)
from .state import DimSpec, InstanceConfig, InstanceStore, VoteRejected

REJECTION_STATUS = {
    "constraint_violation": 422,
    "duplicate_submission": 409,
    "stale_point": 409,
    "instance_closed": 409,
    "session_not_assigned": 403,
    "not_a_constrained_instance": 400,
    "unknown_set": 404,
    "malformed_point": 422,
    "ideal_out_of_range": 422,
    "weight_out_of_range": 422,
    "all_instances_closed": 409,
}


def create_app(data_dir=None, assignment_seed: int | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get("ILV_DATA_DIR", "./ilv-data"))
    app = FastAPI(title="ilv election service", version="0.1.0")
    store = InstanceStore(data_dir, assignment_seed=assignment_seed)
    app.state.store = store
    app.state.feedback_path = data_dir / "feedback.ndjson"

    def _fail(exc: VoteRejected) -> JSONResponse:
        status = REJECTION_STATUS.get(exc.reason, 400)
        return JSONResponse(status_code=status, content={
            "accepted": False, "reason": exc.reason, "info": exc.info})

    @app.post("/instances", response_model=CreateInstanceResponse)
    def create_instance(req: CreateInstanceRequest):
        iid = req.instance_id or f"inst-{uuid.uuid4().hex[:10]}"
        try:
            cfg = InstanceConfig(
                instance_id=iid,
                kind=req.kind,
                dims=tuple(DimSpec(label=d.label, baseline=d.baseline, kind=d.kind,
                                   lo=d.lo, hi=d.hi, description=d.description)
                           for d in req.dims),
                starting_points=tuple(req.starting_points),
                q=req.q, r0=req.r0,
                batch_size=req.batch_size, decay_every=req.decay_every,
                discard_partial_on_close=req.discard_partial_on_close)
            store.create_instance(cfg)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return CreateInstanceResponse(instance_id=iid)

    @app.get("/instances")
    def list_instances():
        return {"instances": store.instance_ids()}

    @app.get("/instances/{instance_id}", response_model=InstanceStateResponse)
    def instance_state(instance_id: str):
        try:
            return store.view(instance_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")

    @app.post("/assign", response_model=AssignResponse)
    def assign(req: AssignRequest):
        try:
            return AssignResponse(instance_id=store.assign_session(req.session_id))
        except VoteRejected as exc:
            raise HTTPException(status_code=REJECTION_STATUS.get(exc.reason, 400),
                                detail=exc.reason)

    @app.get("/instances/{instance_id}/current", response_model=CurrentResponse)
    def current(instance_id: str, session: str = Query(...)):
        try:
            view = store.view(instance_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")
        if store.assignment_of(session) != instance_id:
            raise HTTPException(status_code=403, detail="session_not_assigned")
        return view

    @app.post("/instances/{instance_id}/votes", response_model=VoteResponse)
    def submit_vote(instance_id: str, req: VoteRequest):
        try:
            out = store.submit_vote(instance_id, req.session_id, req.set_index,
                                    req.point, req.point_version, req.justification)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")
        except VoteRejected as exc:
            return _fail(exc)
        return VoteResponse(**out)

    @app.post("/instances/{instance_id}/elicitation",
              response_model=ElicitationResponse)
    def submit_elicitation(instance_id: str, req: ElicitationRequest):
        try:
            out = store.submit_elicitation(instance_id, req.session_id, req.ideals,
                                           req.weights, req.deficit_weight)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")
        except VoteRejected as exc:
            return _fail(exc)
        return ElicitationResponse(**out)

    @app.get("/instances/{instance_id}/elicitation/aggregate")
    def elicitation_aggregate(instance_id: str):
        try:
            return store.elicitation_aggregate(instance_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")

    @app.get("/instances/{instance_id}/export")
    def export_results(instance_id: str):
        try:
            return store.export_results(instance_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")

    @app.post("/instances/{instance_id}/close")
    def close_instance(instance_id: str):
        try:
            return store.close_instance(instance_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown instance")

    @app.post("/feedback", response_model=OkResponse)
    def feedback(req: FeedbackRequest):
        record = {"session_id": req.session_id, "text": req.text, "timestamp": time.time()}
        with open(app.state.feedback_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return OkResponse()

    return app
