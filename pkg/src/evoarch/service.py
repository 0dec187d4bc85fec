"""FastAPI service wrapping the search engine.

Decode/analyze/export are stateless; searches run through a small
registry so clients can either block on a run or poll its status.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException

from . import __version__
from .analysis import count_macs, count_params
from .archspace import decode_genotype, ir_to_document, reference_unet, validate
from .evolution import EvolutionConfig, evolve, resume
from .fitness import DEFAULT_TIMEOUT, build_evaluator
from .genome import SearchSpaceConfig, parse_genotype
from .runlog import RunLog, RunLogError
from .schemas import (
    AnalyzeRequest,
    AnalyzeResponse,
    BlockModel,
    DecodeRequest,
    DecodeResponse,
    ExportRequest,
    HealthResponse,
    ResumeRequest,
    RunListResponse,
    RunStatusResponse,
    RunSummary,
    SearchRequest,
    TopGenome,
)

SERVICE_NAME = "evoarch"


def _bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def _space_from(params) -> SearchSpaceConfig:
    try:
        return SearchSpaceConfig(**params.overrides())
    except (TypeError, ValueError) as exc:
        raise _bad_request(f"invalid search space: {exc}") from exc


def _summary_from_log(log: RunLog, dispatches: int) -> RunSummary:
    best = log.final_best()
    return RunSummary(
        seed=log.config["rng_seed"],
        generations=len(log.records) - 1,
        total_evaluations=log.total_evaluations(),
        dispatches=dispatches,
        best_genome=best["genome"],
        best_fitness=best["fitness"],
        per_generation_best=log.best_fitness_trajectory(),
        top_genomes=[
            TopGenome(genome=m["genome"], fitness=m["fitness"])
            for m in log.top_genomes(5)
        ],
        run_dir=str(log.run_dir) if log.run_dir else None,
    )


@dataclass
class _RunState:
    run_id: str
    status: str = "queued"  # queued | running | done | failed
    summary: RunSummary | None = None
    error: str | None = None
    error_kind: str | None = None  # config | runtime
    future: Future | None = None

    def to_response(self) -> RunStatusResponse:
        return RunStatusResponse(
            run_id=self.run_id,
            status=self.status,
            summary=self.summary,
            error=self.error,
        )


class RunRegistry:
    """Tracks search runs executed on a bounded worker pool."""

    def __init__(self, max_parallel_runs: int = 2):
        self._runs: dict[str, _RunState] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_parallel_runs)

    def submit(self, job) -> _RunState:
        state = _RunState(run_id=uuid.uuid4().hex[:12])
        with self._lock:
            self._runs[state.run_id] = state
            self._order.append(state.run_id)

        def execute() -> None:
            state.status = "running"
            try:
                state.summary = job()
                state.status = "done"
            except Exception as exc:  # surfaced via status + HTTP
                state.error = str(exc)
                state.error_kind = (
                    "config" if isinstance(exc, (ValueError, RunLogError))
                    else "runtime"
                )
                state.status = "failed"

        state.future = self._pool.submit(execute)
        return state

    def get(self, run_id: str) -> _RunState | None:
        with self._lock:
            return self._runs.get(run_id)

    def all(self) -> list[_RunState]:
        with self._lock:
            return [self._runs[run_id] for run_id in self._order]


def create_app(max_parallel_runs: int = 2) -> FastAPI:
    app = FastAPI(title=SERVICE_NAME, version=__version__)
    registry = RunRegistry(max_parallel_runs=max_parallel_runs)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", service=SERVICE_NAME,
                              version=__version__)

    @app.post("/decode", response_model=DecodeResponse)
    def decode(request: DecodeRequest) -> DecodeResponse:
        space = _space_from(request.space)
        try:
            genotype = parse_genotype(request.genome, space)
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        ir = decode_genotype(genotype, space)
        violations = validate(ir)
        return DecodeResponse(
            genome=request.genome,
            blocks=[
                BlockModel(
                    label=label,
                    op_id=block.op.op_id,
                    op_units=list(block.op.units),
                    active_nodes=list(block.active_nodes),
                    edges=[list(e) for e in block.edges],
                    input_targets=list(block.input_targets),
                    output_sources=list(block.output_sources),
                )
                for label, block in ir.blocks.items()
            ],
            valid=not violations,
            violations=violations,
        )

    @app.post("/analyze", response_model=AnalyzeResponse)
    def analyze(request: AnalyzeRequest) -> AnalyzeResponse:
        if (request.genome is None) == (request.baseline is None):
            raise _bad_request("provide exactly one of genome or baseline")
        try:
            if request.baseline is not None:
                if request.baseline != "unet":
                    raise ValueError(
                        f"unknown baseline {request.baseline!r} (only 'unet')"
                    )
                ref = reference_unet()
                params = count_params(ref, in_channels=request.input_shape[0])
                macs = count_macs(ref, input_shape=request.input_shape)
                channels = None
                source = "unet"
            else:
                space = _space_from(request.space)
                genotype = parse_genotype(request.genome, space)
                ir = decode_genotype(genotype, space, request.in_channels)
                params = count_params(ir, request.channels,
                                      request.input_shape[0])
                macs = count_macs(ir, request.channels, request.input_shape)
                channels = (request.channels if request.channels is not None
                            else space.channels)
                source = "genome"
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return AnalyzeResponse(
            params=params,
            macs=macs,
            model_size_bytes=params * 4,
            source=source,
            channels=channels,
            input_shape=request.input_shape,
        )

    @app.post("/export")
    def export(request: ExportRequest) -> dict:
        space = _space_from(request.space)
        try:
            genotype = parse_genotype(request.genome, space)
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        ir = decode_genotype(genotype, space, request.in_channels)
        return ir_to_document(ir)

    def _prepare_search(request: SearchRequest):
        space = _space_from(request.space)
        overrides = request.evolution.overrides()
        if request.seed is not None:
            overrides["rng_seed"] = request.seed
        if request.strategy is not None:
            overrides["selection_strategy"] = request.strategy
        try:
            cfg = EvolutionConfig.from_dict(overrides)
        except (TypeError, ValueError) as exc:
            raise _bad_request(f"invalid evolution config: {exc}") from exc
        try:
            evaluator = build_evaluator(
                request.evaluator, space,
                workers=request.workers or request.parallelism,
                timeout=request.timeout_s or DEFAULT_TIMEOUT,
                eval_config=request.eval_config or None,
            )
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return cfg, space, evaluator

    def _run_search(request: SearchRequest, cfg, space, evaluator) -> RunSummary:
        try:
            log = evolve(
                cfg, space, evaluator,
                run_dir=request.out_dir,
                parallelism=request.parallelism,
            )
        finally:
            shutdown = getattr(evaluator, "shutdown", None)
            if shutdown is not None:
                shutdown()
        return _summary_from_log(log, evaluator.dispatch_count)

    @app.post("/runs", response_model=RunStatusResponse)
    def start_run(request: SearchRequest) -> RunStatusResponse:
        cfg, space, evaluator = _prepare_search(request)
        state = registry.submit(
            lambda: _run_search(request, cfg, space, evaluator)
        )
        if request.wait:
            state.future.result()
            if state.status == "failed":
                _raise_run_failure(state)
        return state.to_response()

    @app.post("/runs/resume", response_model=RunStatusResponse)
    def resume_run(request: ResumeRequest) -> RunStatusResponse:
        try:
            log = RunLog.load(request.run_dir)
            space = SearchSpaceConfig.from_dict(log.space)
            evaluator = build_evaluator(
                log.evaluator_spec, space,
                workers=request.workers or request.parallelism,
                timeout=request.timeout_s or DEFAULT_TIMEOUT,
                **log.evaluator_options,
            )
        except (RunLogError, ValueError, TypeError) as exc:
            raise _bad_request(str(exc)) from exc

        def job() -> RunSummary:
            try:
                resumed = resume(
                    request.run_dir, evaluator=evaluator,
                    parallelism=request.parallelism,
                )
            finally:
                shutdown = getattr(evaluator, "shutdown", None)
                if shutdown is not None:
                    shutdown()
            return _summary_from_log(resumed, evaluator.dispatch_count)

        state = registry.submit(job)
        if request.wait:
            state.future.result()
            if state.status == "failed":
                _raise_run_failure(state)
        return state.to_response()

    @app.get("/runs", response_model=RunListResponse)
    def list_runs() -> RunListResponse:
        return RunListResponse(
            runs=[state.to_response() for state in registry.all()]
        )

    @app.get("/runs/{run_id}", response_model=RunStatusResponse)
    def run_status(run_id: str) -> RunStatusResponse:
        state = registry.get(run_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        return state.to_response()

    return app


def _raise_run_failure(state: _RunState) -> None:
    message = state.error or "search failed"
    if state.error_kind == "config":
        raise _bad_request(message)
    raise HTTPException(status_code=500, detail=message)


app = create_app()
