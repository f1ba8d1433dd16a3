"""Pydantic request/response models for the election service API."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class DimModel(BaseModel):
    label: str
    baseline: float = Field(gt=0)
    kind: Literal["expenditure", "income"]
    lo: float = 0.0
    hi: Optional[float] = None  # defaults to 2 * baseline
    description: str = ""


class CreateInstanceRequest(BaseModel):
    kind: Literal["constrained", "full_elicitation"]
    dims: list[DimModel]
    starting_points: list[list[float]]
    q: Optional[Union[float, str]] = None  # 1, 2, "inf", or any order > 1
    r0: Optional[float] = None
    batch_size: int = 10
    decay_every: int = 60
    discard_partial_on_close: bool = True
    instance_id: Optional[str] = None  # generated when omitted


class CreateInstanceResponse(BaseModel):
    instance_id: str


class AssignRequest(BaseModel):
    session_id: str = Field(min_length=1)


class AssignResponse(BaseModel):
    instance_id: str


class SetCurrentView(BaseModel):
    index: int
    point: list[float]
    radius: Optional[float]
    version: int               # commits so far; echo back when voting
    submissions: int
    pending: int
    percent_from_baseline: list[float]
    deficit: float


class CurrentResponse(BaseModel):
    instance_id: str
    kind: str
    q: Optional[Union[float, str]]
    status: str
    dims: list[DimModel]
    sets: list[SetCurrentView]


class InstanceStateResponse(CurrentResponse):
    busy: bool
    assigned_sessions: int
    elicitations: int


class VoteRequest(BaseModel):
    session_id: str = Field(min_length=1)
    set_index: int = 0
    point: list[float]
    point_version: int
    justification: Optional[str] = None


class VoteResponse(BaseModel):
    accepted: bool
    committed: bool = False
    version: int = 0


class RejectionDetail(BaseModel):
    accepted: bool = False
    reason: str
    info: dict = {}


class ElicitationRequest(BaseModel):
    session_id: str = Field(min_length=1)
    ideals: list[float]
    weights: list[float]
    deficit_weight: float = 5.0


class ElicitationResponse(BaseModel):
    accepted: bool
    all_default_weights: bool


class FeedbackRequest(BaseModel):
    session_id: Optional[str] = None
    text: str = Field(min_length=1)


class OkResponse(BaseModel):
    ok: bool = True
