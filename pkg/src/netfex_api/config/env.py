"""Environment variables management for the netfex experiment driver."""

import os
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables from .env file if it exists
if Path(".env").exists():
    load_dotenv(Path(".env"))

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class Environment:
    """Environment variables configuration."""

    APP_ENVIRONMENT = os.getenv("APP_ENVIRONMENT", "local")
    if APP_ENVIRONMENT not in ["local", "development", "production"]:
        raise ValueError(
            f"Invalid APP_ENVIRONMENT: {APP_ENVIRONMENT}. Must be one of 'local', 'development', 'production'."
        )

    # API specific
    API_ROOT_PATH = os.getenv("API_ROOT_PATH", "")
    API_PREFIX = os.getenv("API_PREFIX", "")

    # Logging
    NETFEX_LOG = os.getenv("NETFEX_LOG", "INFO").upper()
    if NETFEX_LOG not in LOG_LEVELS:
        raise ValueError(f"Invalid NETFEX_LOG: {NETFEX_LOG}. Must be one of {', '.join(LOG_LEVELS)}.")

    # Directories (created on first use, not at import)
    RUNS_DIR = Path(os.getenv("NETFEX_RUNS_DIR", "./runs"))

    # Worker threads for coarse-tunes and fine-tunes; unset means all cores
    _threads = os.getenv("NETFEX_THREADS", "")
    NETFEX_THREADS = int(_threads) if _threads else os.cpu_count() or 1

    # Telemetry
    _traces = os.getenv("EXPORT_TRACES", "true").lower()
    EXPORT_TRACES = _traces not in ["0", "false", "no"]

    _excluded_urls = os.getenv("OTEL_PYTHON_EXCLUDED_URLS", "")
    OTEL_PYTHON_EXCLUDED_URLS = _excluded_urls.split(",") if _excluded_urls else []

    @classmethod
    def validate(cls) -> None:
        """Check that the configured values are usable."""
        if cls.NETFEX_THREADS < 1:
            raise ValueError(f"NETFEX_THREADS must be positive, got {cls.NETFEX_THREADS}")
        if cls.RUNS_DIR.exists() and not cls.RUNS_DIR.is_dir():
            raise ValueError(f"NETFEX_RUNS_DIR {cls.RUNS_DIR} exists and is not a directory")


# Global environment instance
env = Environment()
