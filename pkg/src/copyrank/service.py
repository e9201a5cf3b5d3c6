"""HTTP scoring service over one immutable, process-lifetime model bundle.

Responses for /rank and the quantitative parts of /insights and
/opportunities are pure functions of (bundle, request); narration endpoints
stay fully functional without a chat client by defaulting ``narrate`` to
false. Schema violations map to 400 with field-level messages, internal
failures to 500 with an opaque id (details go to the log).
"""

from __future__ import annotations

import logging
import uuid
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import pipeline
from .bundle import ModelBundle
from .errors import CopyrankError, ValidationError

logger = logging.getLogger(__name__)


class VariantIn(BaseModel):
    id: str
    text: str


class RankRequest(BaseModel):
    variants: list[VariantIn]


class ArmIn(BaseModel):
    id: str
    text: str
    impressions: int = Field(ge=0)
    clicks: int = Field(ge=0)


class InsightsRequest(BaseModel):
    arms: list[ArmIn]
    k: int = 3
    narrate: bool = False


class OpportunitiesRequest(BaseModel):
    variants: list[VariantIn]
    history_means: Optional[list[float]] = None
    k: int = 3
    narrate: bool = False


def create_app(
    bundle: ModelBundle,
    embedder: pipeline.TreatmentEmbedder,
    chat_client=None,
) -> FastAPI:
    app = FastAPI(title="copyrank service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def on_schema_error(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(ValidationError)
    async def on_validation_error(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CopyrankError)
    @app.exception_handler(Exception)
    async def on_internal_error(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex
        logger.exception("internal failure %s: %s", error_id, exc)
        return JSONResponse(status_code=500, content={"error_id": error_id})

    @app.get("/health")
    def health():
        return {"status": "ok", "bundle_version": bundle.format_version}

    @app.get("/model")
    def model():
        return {
            "provider_id": bundle.provider_id,
            "dims": bundle.dims,
            "lambda": bundle.impact.lam,
            "ridge": bundle.ranker.ridge,
            "config_hash": bundle.metadata.get("config_hash"),
            "created_at": bundle.metadata.get("created_at"),
            "n_training_experiments": bundle.metadata.get("n_training_experiments"),
        }

    @app.post("/rank")
    def rank(request: RankRequest):
        return pipeline.rank_report(
            bundle, embedder, [v.model_dump() for v in request.variants]
        )

    @app.post("/insights")
    def insights(request: InsightsRequest):
        return pipeline.insight_report(
            bundle,
            embedder,
            [a.model_dump() for a in request.arms],
            k=request.k,
            narrate=request.narrate,
            chat_client=chat_client,
        )

    @app.post("/opportunities")
    def opportunities(request: OpportunitiesRequest):
        return pipeline.opportunity_report(
            bundle,
            embedder,
            [v.model_dump() for v in request.variants],
            history_means=request.history_means,
            k=request.k,
            narrate=request.narrate,
            chat_client=chat_client,
        )

    return app


def serve(app: FastAPI, port: int = 8080, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
