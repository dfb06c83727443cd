"""HTTP surface: submit runs, compare metric files, health probe."""
from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import ExperimentConfig, apply_overrides, parse_config
from .errors import ConfigError, InputError
from .runner import compare_runs, comparison_table, parse_metrics_csv, run_experiment

log = logging.getLogger(__name__)

app = FastAPI(title="aspire-ease", version=__version__)


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    overrides: dict[str, str] = {}


class RunSummary(BaseModel):
    model_config = ConfigDict(extra="allow")
    mode: str
    iterations: int
    vtime: float
    final_gap: float
    worst_loss: float


class RunResponse(BaseModel):
    resolved_config: dict
    summary: RunSummary
    metrics_csv: str
    trace_jsonl: str


class CompareEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    metrics_csv: str
    config: dict | None = None


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    runs: list[CompareEntry]
    eps: float = 1e-3


class CompareResponse(BaseModel):
    result: dict
    table: str


class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/runs", response_model=RunResponse)
def submit_run(req: RunRequest) -> RunResponse:
    try:
        raw = apply_overrides(req.config, req.overrides)
        cfg: ExperimentConfig = parse_config(raw)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    try:
        art = run_experiment(cfg)
    except (ConfigError, InputError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    except Exception as exc:  # runtime failure inside the engine
        log.exception("run failed")
        raise HTTPException(status_code=500, detail=str(exc)) from None
    return RunResponse(
        resolved_config=art.resolved_config,
        summary=RunSummary(**art.summary),
        metrics_csv=art.metrics_csv(),
        trace_jsonl=art.trace_jsonl(),
    )


@app.post("/compare", response_model=CompareResponse)
def submit_compare(req: CompareRequest) -> CompareResponse:
    try:
        runs = [
            {"name": e.name, "rows": parse_metrics_csv(e.metrics_csv),
             "config": e.config}
            for e in req.runs
        ]
        result = compare_runs(runs, eps=req.eps)
    except InputError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    return CompareResponse(result=result, table=comparison_table(result))
