"""FastAPI service exposing the cascade engine to multiple clients.

Dumps travel inline as JSONL text (the same bytes the CLI reads from
disk); domain errors map to HTTP 422 with the raising module attached.
"""

from __future__ import annotations

import io

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..calibration import Temperature, fit_temperature
from ..cascade import route_dataset
from ..data import ModelLadder, ModelProfile, align, parse_logits_file
from ..demo import run_demo
from ..errors import CascadeKitError
from ..metrics import ece
from ..thresholds import solve_for_speedup, sweep
from . import schemas

app = FastAPI(
    title="cascadekit",
    version=__version__,
    description="Calibrated model-cascade routing over logits dumps",
)


@app.exception_handler(CascadeKitError)
async def domain_error_handler(request: Request, exc: CascadeKitError):
    return JSONResponse(
        status_code=422,
        content={"module": exc.module, "detail": str(exc)},
    )


def _ladder(spec: schemas.LadderSpec) -> ModelLadder:
    profiles = tuple(
        ModelProfile(m.model_id, m.stage_index, m.cost_units)
        for m in sorted(spec.models, key=lambda m: m.stage_index)
    )
    return ModelLadder(profiles, spec.num_classes)


def _temps(entries: list[schemas.TemperatureEntry] | None):
    if entries is None:
        return None
    return {
        e.model_id: Temperature(e.model_id, e.T, e.fit_nll, e.fit_size, e.pinned)
        for e in entries
    }


def _parse(content: str, strict: bool):
    return parse_logits_file(io.StringIO(content), strict=strict)


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/validate", response_model=schemas.ValidateResponse)
def validate(req: schemas.ValidateRequest):
    parsed = _parse(req.content, req.strict)
    return schemas.ValidateResponse(
        mode=parsed.header.mode,
        num_classes=parsed.header.num_classes,
        num_records=len(parsed.records),
        diagnostics=[
            schemas.Diagnostic(line=line, reason=reason)
            for line, reason in parsed.diagnostics
        ],
    )


@app.post("/align", response_model=schemas.AlignResponse)
def align_endpoint(req: schemas.AlignRequest):
    dataset = align(_parse(req.content, req.strict), _ladder(req.ladder))
    return schemas.AlignResponse(
        n_examples=len(dataset),
        num_stages=len(dataset.examples[0].stage_records) if len(dataset) else 0,
        mode=dataset.mode,
        groups=list(dataset.groups),
    )


@app.post("/fit-temperature", response_model=schemas.FitTemperatureResponse)
def fit_temperature_endpoint(req: schemas.FitTemperatureRequest):
    ladder = _ladder(req.ladder)
    dataset = align(_parse(req.content, req.strict), ladder)
    temps = []
    for profile in ladder.profiles:
        val = [
            (ex.stage_records[profile.stage_index].logits, ex.label)
            for ex in dataset.examples
            if ex.label is not None and (req.group is None or ex.group == req.group)
        ]
        t = fit_temperature(
            val, bounds=(req.t_min, req.t_max), tol=req.tol, model_id=profile.model_id
        )
        temps.append(
            schemas.TemperatureEntry(
                model_id=t.model_id, T=t.value, fit_nll=t.fit_nll,
                fit_size=t.fit_size, pinned=t.pinned,
            )
        )
    return schemas.FitTemperatureResponse(temperatures=temps)


@app.post("/route", response_model=schemas.RouteResponse, response_model_exclude_none=False)
def route(req: schemas.RouteRequest):
    ladder = _ladder(req.ladder)
    dataset = align(_parse(req.content, req.strict), ladder)
    run = route_dataset(
        dataset, ladder, _temps(req.temperatures), req.threshold,
        similarity=req.similarity,
    )
    decisions = None
    if req.include_decisions:
        decisions = [schemas.DecisionEntry(**d.to_json()) for d in run.decisions]
    return schemas.RouteResponse(
        n=run.n,
        mean_cost=run.mean_cost,
        speedup=run.speedup,
        accuracy=run.accuracy,
        exit_counts=list(run.exit_counts),
        per_group={g: schemas.GroupRow(**row) for g, row in run.per_group.items()},
        threshold=run.threshold,
        mode=run.mode,
        temperatures=run.temperatures,
        decisions=decisions,
    )


@app.post("/solve", response_model=schemas.SolveResponse, response_model_by_alias=True)
def solve(req: schemas.SolveRequest):
    ladder = _ladder(req.ladder)
    dataset = align(_parse(req.content, req.strict), ladder)
    result = solve_for_speedup(
        dataset, ladder, _temps(req.temperatures),
        target_speedup=req.target_speedup, rel_tol=req.rel_tol,
        similarity=req.similarity,
    )
    return schemas.SolveResponse(
        threshold=result.threshold,
        achieved_speedup=result.achieved_speedup,
        target_speedup=result.target_speedup,
        attainable=result.attainable,
        ceiling_speedup=result.ceiling_speedup,
    )


@app.post("/sweep", response_model=schemas.SweepResponse, response_model_by_alias=True)
def sweep_endpoint(req: schemas.SweepRequest):
    ladder = _ladder(req.ladder)
    dataset = align(_parse(req.content, req.strict), ladder)
    points = sweep(
        dataset, ladder, _temps(req.temperatures),
        "auto" if req.grid is None else req.grid,
        similarity=req.similarity,
    )
    return schemas.SweepResponse(
        points=[
            schemas.SweepPointEntry(
                threshold=p.threshold,
                speedup=p.speedup,
                accuracy=p.accuracy,
                mean_cost=p.mean_cost,
                exit_histogram=list(p.exit_histogram),
            )
            for p in points
        ]
    )


@app.post("/ece", response_model=schemas.EceResponse)
def ece_endpoint(req: schemas.EceRequest):
    report = ece(req.confidences, req.correctness, req.num_bins)
    return schemas.EceResponse(
        ece=report.ece,
        ece_percent=100.0 * report.ece,
        n=report.n,
        bins=[schemas.BinEntry(**b.to_json()) for b in report.bins],
    )


@app.post("/demo")
def demo(req: schemas.DemoRequest):
    return run_demo(req.seed, targets=tuple(req.targets), bins=req.bins)
