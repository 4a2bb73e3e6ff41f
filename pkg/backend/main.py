"""
FastAPI application exposing the experiment database under ``/api/v1``.

Handlers are plain functions over the store: reads take the current snapshot,
writes go through the store's single writer. Every non-2xx response carries
``{"error": {"code", "message", "details"}}``.
"""

import argparse
import socket
import sys
from contextlib import asynccontextmanager
from typing import List, Optional

import structlog
import uvicorn
from fastapi import Depends, FastAPI, Query, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import ValidationError
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from backend import __version__
from backend.config import Settings, split_bind
from backend.errors import BindFailed, ExpDBError, ParseFailed
from backend.formats import MEDIA_TYPES, WRITABLE, read_dataset, write_dataset
from backend.logging_config import configure_logging
from backend.registry import FlowSpec, Store, open_store, queries
from backend.schemas import (
    ChallengeRequest,
    DatasetCreated,
    FlowCreated,
    HealthResponse,
    RunCreated,
    RunRequest,
    SolutionRequest,
    TaskRequest,
    TaskSummary,
)
from backend.tasks import task_document

logger = structlog.get_logger(__name__)

API = "/api/v1"

_HTTP_CODES = {
    404: "not_found",
    405: "method_not_allowed",
    413: "payload_too_large",
}


def _error(status_code: int, code: str, message: str, details: Optional[list] = None) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={"error": {"code": code, "message": message, "details": details or []}},
    )


def _validation_details(errors) -> list:
    return [
        {"loc": [str(part) for part in e.get("loc", ())], "msg": str(e.get("msg")), "type": e.get("type")}
        for e in errors
    ]


def _dump(record) -> dict:
    return record.model_dump(mode="json")


def _created(payload: dict, created: bool) -> JSONResponse:
    return JSONResponse(
        status_code=status.HTTP_201_CREATED if created else status.HTTP_200_OK, content=payload
    )


def _id_list(raw: str, what: str) -> List[int]:
    try:
        ids = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ParseFailed(f"{what} must be a comma-separated list of ids", [raw]) from None
    if not ids:
        raise ParseFailed(f"{what} must name at least one id", [raw])
    return ids


def get_store(request: Request) -> Store:
    return request.app.state.store


def create_app(store: Optional[Store] = None, settings: Optional[Settings] = None) -> FastAPI:
    """Build the API over ``store``; without one, the lifespan opens the configured store."""
    settings = settings or Settings.from_env()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if store is not None:
            yield
            return
        app.state.store = open_store(settings.store_root)
        try:
            yield
        finally:
            app.state.store.close()

    app = FastAPI(
        title="Experiment Database",
        description="Shared datasets, tasks, flows, runs and challenges for machine learning experiments",
        version=__version__,
        lifespan=lifespan,
    )
    if store is not None:
        app.state.store = store

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_origins,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ExpDBError)
    async def expdb_error_handler(request: Request, exc: ExpDBError):
        if exc.status_code >= 500:
            logger.error("request_failed", path=request.url.path, code=exc.code, error=exc.message)
        return JSONResponse(status_code=exc.status_code, content=exc.to_dict())

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(request: Request, exc: StarletteHTTPException):
        code = _HTTP_CODES.get(exc.status_code, "http_error")
        return _error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def request_validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, "malformed_request", "request did not validate", _validation_details(exc.errors()))

    @app.exception_handler(ValidationError)
    async def model_validation_handler(request: Request, exc: ValidationError):
        return _error(400, "malformed_request", "request did not validate", _validation_details(exc.errors()))

    @app.exception_handler(Exception)
    async def unexpected_error_handler(request: Request, exc: Exception):
        logger.exception("unexpected_error", path=request.url.path)
        return _error(500, "internal_error", "internal server error")

    @app.get("/health", response_model=HealthResponse)
    def health(store: Store = Depends(get_store)):
        return HealthResponse(status="ok", version=__version__, counts=store.counts())

    # datasets

    @app.post(f"{API}/datasets")
    async def upload_dataset(
        request: Request,
        format: str = Query("arff"),
        name: str = Query(..., min_length=1),
        target: Optional[str] = None,
        description: str = "",
        store: Store = Depends(get_store),
    ):
        blob = await request.body()
        registration = await run_in_threadpool(
            store.register_dataset, blob, format, name, target, description
        )
        record = registration.record
        body = DatasetCreated(dataset_id=record.dataset_id, name=record.name, version=record.version)
        return _created(_dump(body), registration.created)

    @app.get(f"{API}/datasets")
    def list_datasets(
        limit: int = Query(100, ge=0),
        offset: int = Query(0, ge=0),
        store: Store = Depends(get_store),
    ):
        return [_dump(r) for r in queries.list_records(store.snapshot, "datasets", limit, offset)]

    @app.get(f"{API}/datasets/{{dataset_id}}")
    def get_dataset(dataset_id: int, store: Store = Depends(get_store)):
        return _dump(store.snapshot.dataset(dataset_id))

    @app.get(f"{API}/datasets/{{dataset_id}}/file")
    def get_dataset_file(
        dataset_id: int,
        format: Optional[str] = None,
        store: Store = Depends(get_store),
    ):
        record, blob = store.get_dataset_blob(dataset_id)
        target = format or record.format
        if target not in WRITABLE:
            raise ParseFailed(f"unknown download format {target!r}", [target])
        if target != record.format:
            blob = write_dataset(read_dataset(blob, record.format), target)
        return Response(content=blob, media_type=MEDIA_TYPES[target])

    @app.get(f"{API}/datasets/{{dataset_id}}/leaderboard")
    def dataset_leaderboard(dataset_id: int, measure: str, store: Store = Depends(get_store)):
        return [_dump(e) for e in queries.leaderboard(store.snapshot, dataset_id, measure)]

    # tasks

    @app.post(f"{API}/tasks", status_code=status.HTTP_201_CREATED)
    def create_task(body: TaskRequest, store: Store = Depends(get_store)):
        record = store.create_task(
            body.dataset_id,
            target=body.target,
            type=body.type,
            procedure=body.procedure,
            measures=body.measures,
            input_features=body.input_features,
        )
        return Response(
            content=task_document(record.task),
            status_code=status.HTTP_201_CREATED,
            media_type="application/json",
        )

    @app.get(f"{API}/tasks")
    def list_tasks(
        limit: int = Query(100, ge=0),
        offset: int = Query(0, ge=0),
        store: Store = Depends(get_store),
    ):
        return [
            _dump(
                TaskSummary(
                    task_id=r.task.task_id,
                    name=r.task.name,
                    type=r.task.type.value,
                    dataset_id=r.task.dataset_id,
                    target=r.task.target,
                )
            )
            for r in queries.list_records(store.snapshot, "tasks", limit, offset)
        ]

    @app.get(f"{API}/tasks/{{task_id}}")
    def get_task(task_id: int, store: Store = Depends(get_store)):
        task = store.snapshot.task(task_id).task
        return Response(content=task_document(task), media_type="application/json")

    # flows

    @app.post(f"{API}/flows")
    def register_flow(body: FlowSpec, store: Store = Depends(get_store)):
        registration = store.register_flow(body)
        record = registration.record
        created = FlowCreated(flow_id=record.flow_id, name=record.name, version=record.version)
        return _created(_dump(created), registration.created)

    @app.get(f"{API}/flows")
    def list_flows(
        limit: int = Query(100, ge=0),
        offset: int = Query(0, ge=0),
        store: Store = Depends(get_store),
    ):
        return [_dump(r) for r in queries.list_records(store.snapshot, "flows", limit, offset)]

    @app.get(f"{API}/flows/{{flow_id}}")
    def get_flow(flow_id: int, store: Store = Depends(get_store)):
        return _dump(store.snapshot.flow(flow_id))

    @app.get(f"{API}/flows/{{flow_id}}/overview")
    def flow_overview(flow_id: int, store: Store = Depends(get_store)):
        return _dump(queries.flow_overview(store.snapshot, flow_id))

    @app.get(f"{API}/flows/{{flow_id}}/parameter-impact")
    def parameter_impact(
        flow_id: int,
        param: str,
        measure: str,
        dataset: Optional[int] = None,
        store: Store = Depends(get_store),
    ):
        return _dump(queries.parameter_impact(store.snapshot, flow_id, param, measure, dataset))

    # runs

    @app.post(f"{API}/runs", status_code=status.HTTP_201_CREATED)
    def submit_run(body: RunRequest, store: Store = Depends(get_store)):
        run = store.submit_run(body.task_id, body.flow_id, body.settings, body.predictions)
        return _dump(
            RunCreated(
                run_id=run.run_id, task_id=run.task_id, flow_id=run.flow_id, evaluation=run.evaluation
            )
        )

    @app.get(f"{API}/runs")
    def list_runs(
        task: Optional[int] = None,
        flow: Optional[int] = None,
        limit: int = Query(100, ge=0),
        offset: int = Query(0, ge=0),
        store: Store = Depends(get_store),
    ):
        records = queries.list_records(
            store.snapshot, "runs", limit, offset, task_id=task, flow_id=flow
        )
        return [_dump(r) for r in records]

    @app.get(f"{API}/runs/{{run_id}}")
    def get_run(run_id: int, store: Store = Depends(get_store)):
        return _dump(store.snapshot.run(run_id))

    # challenges

    @app.post(f"{API}/challenges", status_code=status.HTTP_201_CREATED)
    def create_challenge(body: ChallengeRequest, store: Store = Depends(get_store)):
        return _dump(store.create_challenge(body.name, body.task_ids, body.description))

    @app.get(f"{API}/challenges")
    def list_challenges(
        limit: int = Query(100, ge=0),
        offset: int = Query(0, ge=0),
        store: Store = Depends(get_store),
    ):
        return [_dump(r) for r in queries.list_records(store.snapshot, "challenges", limit, offset)]

    @app.get(f"{API}/challenges/{{challenge_id}}")
    def get_challenge(challenge_id: int, store: Store = Depends(get_store)):
        return _dump(store.snapshot.challenge(challenge_id))

    @app.get(f"{API}/challenges/{{challenge_id}}/leaderboard")
    def challenge_leaderboard(challenge_id: int, store: Store = Depends(get_store)):
        return _dump(queries.challenge_leaderboard(store.snapshot, challenge_id))

    @app.post(f"{API}/challenges/{{challenge_id}}/solutions", status_code=status.HTTP_201_CREATED)
    def submit_solution(challenge_id: int, body: SolutionRequest, store: Store = Depends(get_store)):
        run = store.submit_solution(challenge_id, body.task_id, body.name, body.predictions)
        return _dump(
            RunCreated(
                run_id=run.run_id,
                task_id=run.task_id,
                solution_name=run.solution_name,
                challenge_id=run.challenge_id,
                evaluation=run.evaluation,
            )
        )

    # search and comparison

    @app.get(f"{API}/search")
    def search(q: str = "", store: Store = Depends(get_store)):
        return [_dump(hit) for hit in queries.search(store.snapshot, q)]

    @app.get(f"{API}/compare")
    def compare(
        flows: str,
        datasets: str,
        measure: str,
        format: str = "json",
        store: Store = Depends(get_store),
    ):
        if format not in ("json", "csv"):
            raise ParseFailed(f"unknown compare format {format!r}", [format])
        table = queries.compare(
            store.snapshot, _id_list(flows, "flows"), _id_list(datasets, "datasets"), measure
        )
        if format == "csv":
            return Response(content=queries.comparison_csv(table), media_type=MEDIA_TYPES["csv"])
        return _dump(table)

    return app


app = create_app()


def bind_socket(bind: str) -> socket.socket:
    try:
        host, port = split_bind(bind)
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host.strip("[]"), port))
        sock.listen(128)
    except (OSError, ValueError) as exc:
        raise BindFailed(f"cannot bind {bind}: {exc}", [bind]) from None
    return sock


def serve(store: Store, bind: str, log_level: str = "info") -> None:
    """Serve ``store`` on ``bind`` until SIGINT/SIGTERM; in-flight requests finish first."""
    sock = bind_socket(bind)
    config = uvicorn.Config(create_app(store), log_level=log_level.lower())
    server = uvicorn.Server(config)
    logger.info("server_listening", bind=bind, store=str(store.root))
    server.run(sockets=[sock])
    logger.info("server_stopped")


def run(argv: Optional[List[str]] = None) -> int:
    settings = Settings.from_env()
    parser = argparse.ArgumentParser(prog="expdb-server", description="Run the experiment database API")
    parser.add_argument("--bind", default=settings.bind, help="host:port to listen on")
    parser.add_argument("--store", default=settings.store_root, help="store root directory")
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--json-log", action="store_true", default=settings.log_json)
    args = parser.parse_args(argv)

    configure_logging(args.log_level, args.json_log)
    store = open_store(args.store)
    try:
        serve(store, args.bind, args.log_level)
    except BindFailed as exc:
        logger.error("bind_failed", bind=args.bind, error=exc.message)
        return 1
    finally:
        store.close()
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
