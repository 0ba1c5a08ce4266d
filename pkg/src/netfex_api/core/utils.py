"""Run directory and JSON helpers shared by the CLI and the HTTP routes."""

from __future__ import annotations

import json
from logging import getLogger
from netfex_api.config.env import env
from pathlib import Path
from pydantic import BaseModel
from typing import Any

logger = getLogger(__name__)


def prepare_run_dir(out: Path | None, name: str) -> Path:
    """``out`` if given, otherwise ``<NETFEX_RUNS_DIR>/<name>``; created if missing."""
    run_dir = out if out is not None else env.RUNS_DIR / name
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.debug(f"📁 Run directory: {run_dir}")
    return run_dir


def write_json(payload: dict[str, Any] | BaseModel, path: Path) -> Path:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))
