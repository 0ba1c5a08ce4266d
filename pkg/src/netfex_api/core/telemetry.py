"""Logging and OpenTelemetry setup shared by the ``netfex`` CLI and the HTTP service."""

from __future__ import annotations

import logging
import os
import time
from collections.abc import Iterator
from contextlib import contextmanager
from netfex_api.__version__ import __api_name__, __version__
from netfex_api.config.env import env
from opentelemetry import _logs, trace
from opentelemetry.exporter.otlp.proto.http._log_exporter import OTLPLogExporter
from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.instrumentation.logging import LoggingInstrumentor
from opentelemetry.sdk._logs import LoggerProvider, LoggingHandler
from opentelemetry.sdk._logs.export import BatchLogRecordProcessor
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor
from opentelemetry.trace import Span
from typing import Literal
from uuid import uuid4

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
THIRDPARTY_LOGGERS = ("urllib3.connectionpool", "httpcore", "httpx", "matplotlib", "PIL")

_configured_for: str | None = None


def setup_logging(level: str | None = None) -> None:
    """Configure the root logger at ``NETFEX_LOG`` verbosity unless ``level`` is given."""
    logging.basicConfig(level=(level or env.NETFEX_LOG).upper(), format=LOG_FORMAT)
    thirdparty_loglevels_setup()


def setup_opentelemetry(component: Literal["api", "cli"] = "api") -> None:
    """Export traces and logs to ``OTEL_EXPORTER_OTLP_ENDPOINT`` when it is set.

    ``component`` suffixes the service name so CLI runs and the HTTP service show up
    separately. Providers are installed once per process.
    """
    global _configured_for  # noqa: PLW0603
    base_endpoint = os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT")
    if not base_endpoint:
        logger.debug("⚠️ No OTLP endpoint configured, spans stay local no-ops")
        return
    if _configured_for is not None:
        logger.debug(f"🔁 OpenTelemetry already configured for {_configured_for}")
        return
    try:
        resource = Resource.create(
            {
                "service.environment": env.APP_ENVIRONMENT,
                "service.name": f"{__api_name__}-{component}",
                "service.version": __version__,
                "service.instance-uuid": str(uuid4()),
                "netfex.runs_dir": str(env.RUNS_DIR),
                "netfex.threads": env.NETFEX_THREADS,
            }
        )
        if env.EXPORT_TRACES:
            traces_setup(base_endpoint, resource)
        # FastAPI instrumentation happens in main.py, after the app exists
        LoggingInstrumentor().instrument()
        logs_setup(base_endpoint, resource)
        thirdparty_loglevels_setup()
        _configured_for = component
        logger.info(f"🎉 OpenTelemetry exporting {resource.attributes['service.name']} to {base_endpoint}")
    except Exception:
        logger.exception("❌ OpenTelemetry setup failed, continuing without export")


def traces_setup(base_endpoint: str, resource: Resource) -> None:
    tracer_provider = TracerProvider(resource=resource)
    exporter = OTLPSpanExporter(endpoint=f"{base_endpoint.rstrip('/')}/traces")
    tracer_provider.add_span_processor(BatchSpanProcessor(exporter))
    trace.set_tracer_provider(tracer_provider)


def logs_setup(base_endpoint: str, resource: Resource) -> None:
    logger_provider = LoggerProvider(resource=resource)
    exporter = OTLPLogExporter(endpoint=f"{base_endpoint.rstrip('/')}/logs")
    logger_provider.add_log_record_processor(BatchLogRecordProcessor(exporter))
    _logs.set_logger_provider(logger_provider)
    logging.getLogger().addHandler(LoggingHandler(logger_provider=logger_provider))


def thirdparty_loglevels_setup() -> None:
    for name in THIRDPARTY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


@contextmanager
def run_span(name: str, **attributes: str | int | float | bool) -> Iterator[Span]:
    """Span for one experiment command; attributes are recorded as ``netfex.<key>``.

    The wall time of a command that returns normally is added as ``netfex.seconds``.
    """
    with trace.get_tracer("netfex").start_as_current_span(name) as span:
        for key, value in attributes.items():
            span.set_attribute(f"netfex.{key}", value)
        started = time.perf_counter()
        yield span
        span.set_attribute("netfex.seconds", time.perf_counter() - started)
