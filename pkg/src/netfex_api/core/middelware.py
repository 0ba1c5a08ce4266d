# Request logging for when EXPORT_TRACES is disabled

import logging
import time
from collections.abc import Awaitable, Callable
from netfex_api.config.env import env
from starlette.middleware.base import BaseHTTPMiddleware
from starlette.requests import Request
from starlette.responses import Response

logger = logging.getLogger(__name__)


class LoggingMiddleware(BaseHTTPMiddleware):
    """Log every request and its duration; excluded URLs only at debug level."""

    async def dispatch(self, request: Request, call_next: Callable[[Request], Awaitable[Response]]) -> Response:
        started = time.perf_counter()
        method, path = request.method, request.url.path
        level = logging.DEBUG if _is_excluded(path) else logging.INFO

        logger.log(level, f"➡️ Incoming request: {method} {path}")
        response = await call_next(request)
        duration = time.perf_counter() - started
        logger.log(
            level, f"⬅️ Completed request: {method} {path} | Status: {response.status_code} | {duration:.3f}s"
        )
        return response


def _is_excluded(endpoint: str) -> bool:
    return endpoint.replace(env.API_PREFIX, "") in env.OTEL_PYTHON_EXCLUDED_URLS
