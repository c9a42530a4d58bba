"""FastAPI service exposing the pipeline commands.

Each endpoint wraps one pipeline function: the request carries the full
run config plus the output directory; the response carries the command
summary, produced artifacts, and the config hash. Missing inputs map to
404, invalid configs and other user errors to 400.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException

from .. import __version__, pipeline
from ..core import HcfError
from ..pipeline import MissingInputError
from .schemas import (AblateRequest, CommandRequest, CommandResponse,
                      HealthResponse, NeighborsRequest)

log = logging.getLogger(__name__)


def _respond(command: str, req: CommandRequest, result: dict) -> CommandResponse:
    return CommandResponse(command=command, run_name=req.config.run_name,
                           config_hash=result["config_hash"],
                           outputs=result["outputs"], summary=result["summary"])


def _run(command: str, req: CommandRequest, fn, *args, **kwargs) -> CommandResponse:
    try:
        result = fn(req.config, req.out, *args, **kwargs)
    except MissingInputError as exc:
        raise HTTPException(status_code=404,
                            detail={"error": "missing_input", "message": str(exc)})
    except HcfError as exc:
        raise HTTPException(status_code=400,
                            detail={"error": "invalid_request", "message": str(exc)})
    return _respond(command, req, result)


def create_app() -> FastAPI:
    app = FastAPI(title="hcfkit", version=__version__)

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/synth", response_model=CommandResponse)
    def synth(req: CommandRequest):
        return _run("synth", req, pipeline.run_synth)

    @app.post("/v1/filter", response_model=CommandResponse)
    def filter_items(req: CommandRequest):
        return _run("filter", req, pipeline.run_filter)

    @app.post("/v1/embed", response_model=CommandResponse)
    def embed(req: CommandRequest):
        return _run("embed", req, pipeline.run_embed)

    @app.post("/v1/train", response_model=CommandResponse)
    def train(req: CommandRequest):
        return _run("train", req, pipeline.run_train)

    @app.post("/v1/eval", response_model=CommandResponse)
    def evaluate(req: CommandRequest):
        return _run("eval", req, pipeline.run_eval)

    @app.post("/v1/ablate", response_model=CommandResponse)
    def ablate(req: AblateRequest):
        return _run("ablate", req, pipeline.run_ablate, jobs=req.jobs)

    @app.post("/v1/communities", response_model=CommandResponse)
    def communities(req: CommandRequest):
        return _run("communities", req, pipeline.run_communities)

    @app.post("/v1/neighbors", response_model=CommandResponse)
    def neighbors(req: NeighborsRequest):
        return _run("neighbors", req, pipeline.run_neighbors,
                    entity_id=req.entity_id, k=req.k)

    return app
