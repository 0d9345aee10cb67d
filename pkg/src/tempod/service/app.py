"""HTTP facade over the pipeline stages.

Each POST endpoint mirrors one CLI subcommand and returns its files as
a {relative path: text} mapping; the caller decides where to write
them.  Validation problems (bad configs, malformed payloads) come back
as 400 with a message, request-shape errors as FastAPI's usual 422,
and stage failures as 500.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..detect import items_from_csv
from ..events import dataset_from_jsonl
from ..models import model_from_dict
from ..pipeline import (
    run_experiment,
    stage_detect,
    stage_evaluate,
    stage_inject,
    stage_simulate,
    stage_train,
    stage_verify_bounds,
)
from .schemas import (
    DetectRequest,
    EvaluateRequest,
    FilesResponse,
    HealthResponse,
    InjectRequest,
    RunRequest,
    SimulateRequest,
    TrainRequest,
    VerifyRequest,
)

__all__ = ["create_app", "app"]


def create_app() -> FastAPI:
    app = FastAPI(title="tempod", version=__version__)

    @app.exception_handler(ValueError)
    async def bad_input(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(Exception)
    async def stage_failure(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=500, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=FilesResponse)
    def simulate(request: SimulateRequest) -> FilesResponse:
        return FilesResponse(files=stage_simulate(request.config))

    @app.post("/inject", response_model=FilesResponse)
    def inject(request: InjectRequest) -> FilesResponse:
        data = dataset_from_jsonl(request.dataset.jsonl)
        return FilesResponse(files=stage_inject(request.config, data))

    @app.post("/train", response_model=FilesResponse)
    def train(request: TrainRequest) -> FilesResponse:
        data = dataset_from_jsonl(request.dataset.jsonl)
        return FilesResponse(files=stage_train(request.config, data))

    @app.post("/detect", response_model=FilesResponse)
    def detect(request: DetectRequest) -> FilesResponse:
        model = model_from_dict(request.model)
        data = dataset_from_jsonl(request.dataset.jsonl)
        train = dataset_from_jsonl(request.train.jsonl) if request.train else None
        return FilesResponse(files=stage_detect(request.config, model, data, train))

    @app.post("/evaluate", response_model=FilesResponse)
    def evaluate(request: EvaluateRequest) -> FilesResponse:
        return FilesResponse(files=stage_evaluate(items_from_csv(request.items_csv)))

    @app.post("/verify-bounds", response_model=FilesResponse)
    def verify_bounds(request: VerifyRequest) -> FilesResponse:
        return FilesResponse(files=stage_verify_bounds(request.config))

    @app.post("/run", response_model=FilesResponse)
    def run(request: RunRequest) -> FilesResponse:
        return FilesResponse(files=run_experiment(request.config, jobs=request.jobs))

    return app


app = create_app()
