"""Request/response models for the pipeline service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict

from ..config import RunConfig


class CommandRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfig = RunConfig()
    out: str = "out"


class AblateRequest(CommandRequest):
    jobs: int = 1


class NeighborsRequest(CommandRequest):
    entity_id: str
    k: int | None = None


class CommandResponse(BaseModel):
    command: str
    run_name: str
    config_hash: str
    outputs: list[str]
    summary: dict


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    error: str
    message: str
