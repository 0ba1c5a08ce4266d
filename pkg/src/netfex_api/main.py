"""FastAPI service exposing graph generation, sMAPE scoring and structure searches."""

import logging
from collections.abc import AsyncGenerator
from contextlib import asynccontextmanager
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from netfex_api.__version__ import __api_name__, __description__, __version__
from netfex_api.config.env import env
from netfex_api.core.middelware import LoggingMiddleware
from netfex_api.core.telemetry import run_span, setup_logging, setup_opentelemetry
from netfex_api.routers.experiments import experiments_router
from netfex_lib.__version__ import __lib_name__, __version__ as __lib_version__
from netfex_lib.services.presets import PRESETS
from opentelemetry.instrumentation.fastapi import FastAPIInstrumentor

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(_app: FastAPI) -> AsyncGenerator[None, None]:
    setup_logging()
    setup_opentelemetry("api")

    with run_span("app_startup", environment=env.APP_ENVIRONMENT):
        env.validate()
        logger.info(f"🚀 Starting {__api_name__} v{__version__} on {__lib_name__} v{__lib_version__}")
        logger.info(f"📁 Search runs go to {env.RUNS_DIR.resolve()} with {env.NETFEX_THREADS} worker threads")
        logger.info(f"🧪 Presets: {', '.join(PRESETS)}")

    yield

    logger.info(f"👋 {__api_name__} stopped")


app = FastAPI(
    title=__api_name__,
    description=__description__,
    version=__version__,
    lifespan=lifespan,
    root_path=env.API_ROOT_PATH,
)

if not env.EXPORT_TRACES:
    logger.warning("⚠️ Trace export disabled, logging requests locally")
    app.add_middleware(LoggingMiddleware)

# Must run after the app exists
FastAPIInstrumentor.instrument_app(app)

app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["GET", "POST"], allow_headers=["*"])
app.include_router(experiments_router)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("netfex_api.main:app")
