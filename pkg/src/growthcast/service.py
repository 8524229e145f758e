"""HTTP JSON service exposing prediction, risk and cluster-curve endpoints.

The model is loaded once and treated as immutable; every request is pure
given its body (and seed), so responses are reproducible. Schema
violations return 400, domain violations 422, and unexpected errors a
bare 500 that leaks nothing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .cohort import GrowthSeries, Observation, stable_seed
from .errors import GrowthcastError
from .mixture import TrainedModel, credible_band, predict, sample_trajectories
from .risk import DEFAULT_THRESHOLDS, OverweightSpec, overweight_probability

logger = logging.getLogger(__name__)

MAX_WIRE_SAMPLES = 200


@dataclass
class ServiceConfig:
    model_path: str
    host: str = "127.0.0.1"
    port: int = 8000
    max_body_bytes: int = 1_000_000
    cors_origins: list[str] = field(default_factory=list)


class WireObservation(BaseModel):
    age_months: float = Field(ge=0)
    bmi: float = Field(gt=0)


class PredictRequest(BaseModel):
    sex: str = Field(pattern="^[FM]$")
    observations: list[WireObservation]
    target_ages: list[float] = Field(min_length=1)
    n_samples: int | None = Field(default=None, ge=1)
    seed: int | None = None


class RiskRequest(BaseModel):
    sex: str = Field(pattern="^[FM]$")
    observations: list[WireObservation]
    target_age_months: float = Field(default=120.0, gt=0)
    threshold: float | None = Field(default=None, gt=0)
    method: str = Field(default="closed_form", pattern="^(closed_form|monte_carlo)$")
    n_samples: int = Field(default=100_000, ge=1)
    seed: int | None = None


def _series_from_wire(sex: str, observations: list[WireObservation]) -> GrowthSeries:
    obs = sorted(observations, key=lambda o: o.age_months)
    ages = [o.age_months for o in obs]
    if len(set(ages)) != len(ages):
        raise GrowthcastError("duplicate observation ages")
    return GrowthSeries(
        id="request",
        sex=sex,
        observations=tuple(Observation(age=o.age_months, bmi=o.bmi) for o in obs),
    )


def create_app(model: TrainedModel, config: ServiceConfig | None = None, model_version: str = "1") -> FastAPI:
    app = FastAPI(title="growthcast", docs_url=None, redoc_url=None)
    config = config or ServiceConfig(model_path="")
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def _schema_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "schema violation", "detail": exc.errors()})

    @app.exception_handler(GrowthcastError)
    async def _domain_error(request: Request, exc: GrowthcastError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        logger.exception("internal error")
        return JSONResponse(status_code=500, content={"error": "internal error"})

    @app.middleware("http")
    async def _limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > config.max_body_bytes:
            return JSONResponse(status_code=413, content={"error": "request body too large"})
        return await call_next(request)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model_version": model_version}

    @app.get("/v1/clusters")
    def clusters():
        out = []
        for k in range(model.n_clusters):
            post = model.hyper_posterior(k)
            sd = post.sd
            z = 1.959963984540054  # normal 97.5% quantile
            out.append(
                {
                    "weight": float(model.mixing[k]),
                    "mean": post.mean.tolist(),
                    "lower95": (post.mean - z * sd).tolist(),
                    "upper95": (post.mean + z * sd).tolist(),
                }
            )
        return {"grid_months": model.grid.tolist(), "clusters": out}

    @app.post("/v1/predict")
    def predict_endpoint(body: PredictRequest):
        series = _series_from_wire(body.sex, body.observations)
        prediction = predict(model, series, np.asarray(body.target_ages, dtype=float))
        band = credible_band(prediction, 0.95)
        response = {
            "target_ages": prediction.target_times.tolist(),
            "mean": prediction.mean.tolist(),
            "mixture_lower95": band.lower.tolist(),
            "mixture_upper95": band.upper.tolist(),
            "weights": prediction.weights.tolist(),
        }
        if body.n_samples:
            n = min(body.n_samples, MAX_WIRE_SAMPLES)
            seed = body.seed if body.seed is not None else stable_seed("predict", body.model_dump_json())
            response["samples"] = sample_trajectories(prediction, n, seed).tolist()
            response["seed"] = seed
        return response

    @app.post("/v1/risk")
    def risk_endpoint(body: RiskRequest):
        series = _series_from_wire(body.sex, body.observations)
        threshold = body.threshold if body.threshold is not None else DEFAULT_THRESHOLDS[body.sex]
        spec = OverweightSpec(target_age=body.target_age_months, n_samples=body.n_samples)
        prediction = predict(model, series, [body.target_age_months])
        seed = body.seed if body.seed is not None else stable_seed("risk", body.model_dump_json())
        result = overweight_probability(
            prediction,
            spec,
            body.sex,
            seed=seed,
            method=body.method,
            threshold=threshold,
        )
        return {
            "probability": result.probability,
            "method": result.method,
            "threshold_used": threshold,
        }

    return app


def serve(config: ServiceConfig) -> None:
    """Load the model (exiting non-zero on failure) and run the server."""
    import sys

    import uvicorn

    from .mixture import load_model

    try:
        model = load_model(config.model_path)
    except Exception as exc:
        print(f"failed to load model from {config.model_path}: {exc}", file=sys.stderr)
        raise SystemExit(1)
    app = create_app(model, config)
    uvicorn.run(app, host=config.host, port=config.port)
