"""HTTP surface over the experiment commands, traced with OpenTelemetry."""

import logging
from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool
from netfex_api.config.env import env
from netfex_api.core.telemetry import run_span
from netfex_api.models.run_config import GraphConfig, RunConfig
from netfex_api.services.experiments import build_graph, cmd_search
from netfex_lib.exceptions import NumericError, PreconditionError, UndefinedMetricError
from netfex_lib.services.postprocessing import compare_terms
from pydantic import BaseModel, Field
from typing import Any

logger = logging.getLogger(__name__)
experiments_router = APIRouter(tags=["experiments"], prefix=env.API_PREFIX + "/experiments")


class GraphRequest(BaseModel):
    graph: GraphConfig = Field(default_factory=GraphConfig)
    seed: int = Field(0, ge=0)


class GraphSummary(BaseModel):
    n_nodes: int
    n_arcs: int
    mean_in_degree: float
    max_in_degree: int
    max_out_degree: int
    weakly_connected: bool


class SmapeRequest(BaseModel):
    inferred: dict[str, float]
    truth: dict[str, float]


class SmapeResponse(BaseModel):
    smape: float
    terms: list[dict[str, Any]]


@experiments_router.get("/healthcheck")
async def healthcheck() -> dict:
    """Service health check."""
    logger.info("🔍 Health check called")
    return {"status": "ok", "service": "netfex-api"}


@experiments_router.post("/graph")
async def generate_graph(request: GraphRequest) -> GraphSummary:
    """Generate a network from a graph configuration and summarize its degrees."""
    with run_span("generate_graph", kind=request.graph.kind, n=request.graph.n, seed=request.seed):
        try:
            graph = build_graph(request.graph, request.seed)
        except (ValueError, PreconditionError) as e:
            raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e)) from e
        except OSError as e:
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e)) from e
        in_degree = graph.in_degree
        return GraphSummary(
            n_nodes=graph.n_nodes,
            n_arcs=graph.n_arcs,
            mean_in_degree=float(in_degree.mean()),
            max_in_degree=int(in_degree.max()),
            max_out_degree=int(graph.out_degree.max()),
            weakly_connected=graph.is_weakly_connected(),
        )


@experiments_router.post("/smape")
async def smape(request: SmapeRequest) -> SmapeResponse:
    """Term-level sMAPE between an inferred and a true coefficient map."""
    try:
        table = compare_terms(request.inferred, request.truth)
    except UndefinedMetricError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e)) from e
    return SmapeResponse(smape=table.smape, terms=table.to_records())


@experiments_router.post("/search")
async def search(cfg: RunConfig) -> dict:
    """Run a full search into the runs directory and return its report.

    Long-running: the request blocks until every dimension is fine-tuned.
    """
    logger.info(f"🔄 Search requested for preset {cfg.preset}")
    try:
        return await run_in_threadpool(cmd_search, cfg)
    except NumericError as e:
        logger.exception("💥 Search failed numerically")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e)) from e
    except (ValueError, PreconditionError) as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e)) from e
    except OSError as e:
        logger.exception("❌ Could not write the run directory")
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e)) from e
