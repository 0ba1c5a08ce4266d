"""JSON run configuration shared by every experiment command."""

from __future__ import annotations

import math
from netfex_lib.models.search import SearchConfig
from netfex_lib.services.presets import PRESETS
from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Any, Literal

_STRICT = ConfigDict(extra="forbid", frozen=True)


class GraphConfig(BaseModel):
    """Network on which the data is simulated.

    ``ba`` grows a Barabasi-Albert graph and, when ``directed`` is set, prunes it into a
    directed scale-free network; ``er`` draws a directed Erdos-Renyi graph; ``file`` reads
    an edge list.
    """

    model_config = _STRICT

    kind: Literal["ba", "er", "file"] = "ba"
    n: int = Field(100, ge=2)
    m: int = Field(5, ge=1)
    p: float = Field(0.05, ge=0.0, le=1.0)
    directed: bool = True
    remove_fraction: float = Field(0.5, ge=0.0, lt=1.0)
    path: Path | None = None

    @model_validator(mode="after")
    def _check_source(self) -> GraphConfig:
        if self.kind == "file" and self.path is None:
            raise ValueError("graph.kind='file' needs graph.path")
        if self.kind == "ba" and self.m >= self.n:
            raise ValueError(f"graph.m={self.m} must be smaller than graph.n={self.n}")
        return self


class DynamicsConfig(BaseModel):
    """Overrides of the preset's simulation settings; unset fields keep the preset values."""

    model_config = _STRICT

    T: float | None = Field(None, gt=0.0)
    dt: float | None = Field(None, gt=0.0)
    params: dict[str, float] = Field(default_factory=dict)
    normalization: Literal["none", "in_degree"] | None = None
    x0: Path | None = None


class CorruptionConfig(BaseModel):
    model_config = _STRICT

    keep_fraction: float = Field(1.0, gt=0.0, le=1.0)
    snr_db: float = math.inf
    perturb_fraction: float = Field(0.0, ge=0.0, le=0.5)
    perturb_mode: Literal["add", "remove"] = "add"


class RobustnessConfig(BaseModel):
    """One-factor sweeps, each applied to the clean data on its own.

    ``fixed_structure`` fits the known operator sequences; ``search`` runs the full
    structure search for every scenario.
    """

    model_config = _STRICT

    mode: Literal["fixed_structure", "search"] = "fixed_structure"
    downsample: tuple[float, ...] = (1.0, 0.1, 0.05)
    snr_db: tuple[float, ...] = ()
    perturb: tuple[float, ...] = ()
    perturb_mode: Literal["add", "remove"] = "add"


class BenchConfig(BaseModel):
    model_config = _STRICT

    sizes: tuple[int, ...] = (64, 128, 256, 512)
    batch_size: int = Field(32, ge=2)
    repeats: int = Field(3, ge=1)
    T: float = Field(0.2, gt=0.0)


class RolloutConfig(BaseModel):
    model_config = _STRICT

    T: float = Field(50.0, gt=0.0)
    nodes: tuple[int, ...] = (0,)


class RunConfig(BaseModel):
    """Everything a command needs; unknown keys are rejected at every level."""

    model_config = _STRICT

    preset: Literal["hr", "fhn", "rossler"] = "fhn"
    graph: GraphConfig = Field(default_factory=GraphConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    robustness: RobustnessConfig = Field(default_factory=RobustnessConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    rollout: RolloutConfig | None = None
    data: Path | None = None
    seed: int = Field(0, ge=0)
    threads: int | None = Field(None, ge=1)
    out: Path | None = None

    @model_validator(mode="before")
    @classmethod
    def _preset_defaults(cls, data: Any) -> Any:
        """Fill search depths, normalization and seed from the preset unless given explicitly."""
        if not isinstance(data, dict):
            return data
        data = dict(data)
        search = data.get("search", {})
        if isinstance(search, dict):
            preset = PRESETS.get(str(data.get("preset", "fhn")))
            if preset is None:
                return data
            search = dict(search)
            search.setdefault("depth_f", preset.depth_f)
            search.setdefault("depth_g", preset.depth_g)
            search.setdefault("normalization", preset.normalization)
            search.setdefault("seed", data.get("seed", 0))
            data["search"] = search
        return data

    def with_overrides(self, seed: int | None = None, out: Path | None = None, threads: int | None = None) -> RunConfig:
        """Apply command-line overrides; a new seed also reseeds the search."""
        update: dict[str, Any] = {}
        search_update: dict[str, Any] = {}
        if seed is not None:
            update["seed"] = seed
            search_update["seed"] = seed
        if out is not None:
            update["out"] = out
        if threads is not None:
            update["threads"] = threads
            search_update["threads"] = threads
        if search_update:
            update["search"] = self.search.model_copy(update=search_update)
        return self.model_copy(update=update)

    def effective_search(self, default_threads: int) -> SearchConfig:
        """Search settings with a worker count filled in from the run or ``default_threads``."""
        if self.search.threads is not None:
            return self.search
        return self.search.model_copy(update={"threads": self.threads or default_threads})
