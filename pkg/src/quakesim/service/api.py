"""HTTP API: scenario what-ifs, batch runs with polling, MCT reports.

Scenario requests run synchronously against shared read-only inputs; batch
jobs run one at a time on a background thread and persist through the run
store.  Monetary JSON fields are strings of integer cents.
"""

from __future__ import annotations

import threading
from typing import Literal, Optional

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..errors import (
    OutOfWindowError,
    QuakesimError,
    RunStoreError,
    SignificanceUnreachableError,
    UnknownRunError,
)
from ..evt import build_mct_report
from ..exposure import InsuranceTerms, to_cents
from ..geo import GeoPoint
from ..lossengine import run_batch
from .config import RunConfig, assemble_inputs
from .scenario import ScenarioRequest, run_scenario
from .store import RunStore


class EpicenterModel(BaseModel):
    lon: float
    lat: float


class TermsOverrideModel(BaseModel):
    zone: str
    property_type: Literal["residential", "commercial_industrial"]
    penetration: float = Field(ge=0.0, le=1.0)
    deductible: float = Field(ge=0.0, lt=1.0)
    limit: float = Field(gt=0.0, le=1.0)


class ScenarioBody(BaseModel):
    epicenter: EpicenterModel
    magnitude: Optional[float] = None  # omit or null => random draw
    seed: int = 0
    insurance_overrides: list[TermsOverrideModel] = []
    wald_noise_sd: float = 0.0
    bakun_noise_sd: float = 0.0


class BatchBody(BaseModel):
    n_years: int = Field(ge=1)
    seed: int = 0
    run_id: Optional[str] = None


def _error_response(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details or {}},
    )


def create_app(config: RunConfig, store_root=None) -> FastAPI:
    app = FastAPI(title="quakesim", version="1")
    inputs = assemble_inputs(config)
    store = RunStore(store_root or (config.base_dir / "runs"))
    jobs: dict[str, dict] = {}
    batch_lock = threading.Lock()  # one running batch at a time

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(422, "validation_error", "invalid request body", exc.errors())

    @app.exception_handler(QuakesimError)
    async def domain_handler(request: Request, exc: QuakesimError):
        if isinstance(exc, (UnknownRunError,)):
            return _error_response(404, "unknown_run", str(exc))
        if isinstance(exc, SignificanceUnreachableError):
            return _error_response(409, "significance_unreachable", str(exc))
        if isinstance(exc, OutOfWindowError):
            return _error_response(422, "out_of_window", str(exc))
        if isinstance(exc, RunStoreError):
            return _error_response(500, "run_store_error", str(exc))
        return _error_response(422, "domain_error", str(exc))

    @app.get("/api/v1/health")
    def health():
        return {
            "status": "ok",
            "n_csds": len(inputs.csd_geoms),
            "n_hazard_sites": len(inputs.hazard_grid),
            "config_digest": config.digest(),
        }

    @app.post("/api/v1/scenario")
    def scenario(body: ScenarioBody):
        if body.magnitude is not None and not body.magnitude > 6.0:
            return _error_response(
                422, "invalid_magnitude", "fixed magnitude must exceed 6",
                {"magnitude": body.magnitude},
            )
        overrides = tuple(
            InsuranceTerms(o.zone, o.property_type, o.penetration, o.deductible, o.limit)
            for o in body.insurance_overrides
        )
        req = ScenarioRequest(
            epicenter=GeoPoint(body.epicenter.lon, body.epicenter.lat),
            magnitude=body.magnitude,
            seed=body.seed,
            insurance_overrides=overrides,
            wald_noise_sd=body.wald_noise_sd,
            bakun_noise_sd=body.bakun_noise_sd,
        )
        return run_scenario(inputs, config.engine_config(), req)

    def _batch_worker(run_id: str, n_years: int, seed: int):
        job = jobs[run_id]
        with batch_lock:
            job["status"] = "running"
            try:
                run = run_batch(
                    n_years,
                    seed,
                    config.engine_config(),
                    inputs,
                    run_id=run_id,
                    progress=lambda y, n: job.update(progress=y / n),
                )
                store.save(run, config.input_digests())
                job["status"] = "done"
                job["progress"] = 1.0
            except Exception as exc:  # job failures surface via polling
                job["status"] = "failed"
                job["error"] = str(exc)

    @app.post("/api/v1/batch")
    def batch(body: BatchBody):
        run_id = body.run_id or f"run-{body.seed}-{body.n_years}"
        if run_id in jobs and jobs[run_id]["status"] in ("queued", "running"):
            return _error_response(409, "duplicate_run", f"run {run_id} already in flight")
        if store.has_run(run_id):
            return _error_response(409, "duplicate_run", f"run {run_id} already stored")
        jobs[run_id] = {"status": "queued", "progress": 0.0, "seed": body.seed,
                        "n_years": body.n_years}
        thread = threading.Thread(
            target=_batch_worker, args=(run_id, body.n_years, body.seed), daemon=True
        )
        thread.start()
        return {"run_id": run_id, "status": "queued"}

    @app.get("/api/v1/batch/{run_id}")
    def batch_status(run_id: str):
        if run_id in jobs:
            job = jobs[run_id]
            out = {"run_id": run_id, "status": job["status"], "progress": job["progress"]}
            if "error" in job:
                out["error"] = job["error"]
            return out
        if store.has_run(run_id):
            return {"run_id": run_id, "status": "done", "progress": 1.0}
        raise UnknownRunError(f"no run {run_id!r}")

    @app.get("/api/v1/batch/{run_id}/mct")
    def batch_mct(
        run_id: str,
        epsilon: list[float] = Query(default=None),
        method: list[str] = Query(default=None),
        source: Literal["loss", "claim"] = "loss",
    ):
        if not store.has_run(run_id):
            raise UnknownRunError(f"no run {run_id!r}")
        epsilons = epsilon or [1.0 / 500.0]
        methods = tuple(method or ["pearson", "kendall"])
        series, n_years = store.load_annual_series(run_id, source)

        def cents(cad: float | None) -> str | None:
            return None if cad is None else str(to_cents(cad))

        reports = []
        for eps in epsilons:
            report = build_mct_report(series, n_years, eps, methods)
            reports.append(
                {
                    "epsilon": eps,
                    "return_period": 1.0 / eps,
                    "simulated_pml_cents": {p: cents(v) for p, v in report.simulated.items()},
                    "estimated_pml_cents": {p: cents(v) for p, v in report.estimated.items()},
                    "east_pml_cents": cents(report.east_pml),
                    "west_pml_cents": cents(report.west_pml),
                    "total_pml_cents": cents(report.total_pml),
                    "osfi_cents": cents(report.osfi_value),
                    "pearson_cents": cents(report.corr_value_pearson),
                    "kendall_cents": cents(report.corr_value_kendall),
                }
            )
        return {"run_id": run_id, "source": source, "reports": reports}

    @app.get("/api/v1/exposure/{csd_id}")
    def exposure(csd_id: str):
        if csd_id not in inputs.exposures:
            return _error_response(404, "unknown_csd", f"no exposure for {csd_id!r}")
        exp = inputs.exposures[csd_id]
        return {
            "csd_id": exp.csd_id,
            "province": exp.province,
            "total_cents": str(exp.total_cents()),
            "classes": [
                {
                    "occupancy": cls.occupancy_code,
                    "material": cls.material,
                    "building_cents": str(b),
                    "content_cents": str(c),
                }
                for cls, (b, c) in sorted(
                    exp.by_class.items(), key=lambda kv: (kv[0].occupancy_code, kv[0].material)
                )
            ],
        }

    return app
