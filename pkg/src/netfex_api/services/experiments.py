"""Experiment commands: data generation, search, robustness sweeps and the RBM timing benchmark.

Each command is a function of its :class:`RunConfig` (seed included) to files in the run
directory. All randomness comes from the run seed through named streams.
"""

from __future__ import annotations

import logging
import math
import numpy as np
import pandas as pd
from dataclasses import dataclass
from netfex_api.config.env import env
from netfex_api.core.telemetry import run_span
from netfex_api.core.utils import prepare_run_dir, read_json, write_json
from netfex_api.models.run_config import CorruptionConfig, GraphConfig, RunConfig
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DynamicsSpec, TimeSeries
from netfex_lib.services.expressions import default_variable_names, to_symbolic
from netfex_lib.services.losses import LossContext
from netfex_lib.services.networks import (
    generate_ba,
    generate_er,
    load_edge_list,
    perturb_links,
    prune_to_directed,
    save_edge_list,
)
from netfex_lib.services.postprocessing import rollout_compare, spec_from_terms, system_smape, write_rollout
from netfex_lib.services.preprocessing import add_noise, downsample, five_point_derivative
from netfex_lib.services.presets import Preset, get_preset, known_expressions, truth_terms
from netfex_lib.services.processing import (
    benchmark_coarse_step,
    fit_structure,
    run_search,
    torch_single_thread,
)
from netfex_lib.services.seeding import int_seed
from netfex_lib.services.simulation import integrate, load_series, random_initial_state, save_series
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

GRAPH_FILE = "graph.edgelist"
SERIES_FILE = "series.csv"
CONFIG_FILE = "config.json"
REPORT_FILE = "report.json"


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Clean simulation plus the graph it ran on."""

    preset: Preset
    graph: DirectedGraph
    spec: DynamicsSpec
    series: TimeSeries
    x0: np.ndarray


def config_snapshot(cfg: RunConfig) -> dict[str, Any]:
    """Serialized config without the settings that may change between runs of one experiment."""
    return cfg.model_dump(mode="json", exclude={"threads": True, "out": True, "search": {"threads"}})


def build_graph(cfg: GraphConfig, seed: int) -> DirectedGraph:
    graph_seed = int_seed(seed, "graph")
    if cfg.kind == "file":
        return load_edge_list(cfg.path)
    if cfg.kind == "er":
        return generate_er(cfg.n, cfg.p, graph_seed)
    graph = generate_ba(cfg.n, cfg.m, graph_seed)
    if cfg.directed:
        graph = prune_to_directed(graph, cfg.remove_fraction, int_seed(seed, "prune"))
    return graph


def initial_state(cfg: RunConfig, n_nodes: int, d: int) -> np.ndarray:
    """``dynamics.x0`` (CSV of ``n_nodes`` rows by ``d`` columns, no header) or a seeded uniform draw."""
    if cfg.dynamics.x0 is not None:
        x0 = pd.read_csv(cfg.dynamics.x0, header=None).to_numpy(dtype=np.float64)
        if x0.shape != (n_nodes, d):
            raise ValueError(f"Initial state file has shape {x0.shape}, expected ({n_nodes}, {d})")
        return x0
    return random_initial_state(n_nodes, d, int_seed(cfg.seed, "x0"))


def dynamics_spec(cfg: RunConfig, preset: Preset, n_nodes: int) -> DynamicsSpec:
    spec = preset.dynamics(n_nodes, seed=int_seed(cfg.seed, "omega"))
    params = {**spec.params, **cfg.dynamics.params}
    normalization = cfg.dynamics.normalization or spec.normalization
    return DynamicsSpec(spec.kind, spec.d, params, normalization, omega=spec.omega)


def simulate(cfg: RunConfig) -> ExperimentData:
    preset = get_preset(cfg.preset)
    graph = build_graph(cfg.graph, cfg.seed)
    spec = dynamics_spec(cfg, preset, graph.n_nodes)
    x0 = initial_state(cfg, graph.n_nodes, preset.d)
    T = cfg.dynamics.T or preset.T
    dt = cfg.dynamics.dt or preset.dt
    logger.info(f"🧪 Simulating {preset.name} on {graph.n_nodes} nodes / {graph.n_arcs} arcs, T={T}, dt={dt}")
    series = integrate(spec, graph, x0, dt, T)
    return ExperimentData(preset, graph, spec, series, x0)


def corrupt(
    series: TimeSeries, graph: DirectedGraph, corruption: CorruptionConfig, seed: int
) -> tuple[TimeSeries, DirectedGraph]:
    """Observed data and topology: downsampled, noised and with perturbed links, in that order."""
    observed = downsample(series, corruption.keep_fraction)
    observed = add_noise(observed, corruption.snr_db, int_seed(seed, "noise"))
    topology = perturb_links(graph, corruption.perturb_fraction, corruption.perturb_mode, int_seed(seed, "perturb"))
    return observed, topology


def truth_for(cfg: RunConfig, preset: Preset) -> list[tuple[dict[str, float], dict[str, float]]] | None:
    """Ground-truth term maps, unless parameter overrides make the preset ones wrong."""
    if cfg.dynamics.params or cfg.dynamics.normalization not in (None, preset.normalization):
        logger.warning("⚠️ Dynamics parameters overridden; skipping comparison against the preset truth")
        return None
    return truth_terms(preset)


def load_data(cfg: RunConfig) -> tuple[Preset, TimeSeries, DirectedGraph]:
    """Observed series and graph, read from ``cfg.data`` when set or simulated and corrupted in memory."""
    preset = get_preset(cfg.preset)
    if cfg.data is not None:
        series, _ = load_series(cfg.data / SERIES_FILE)
        graph = load_edge_list(cfg.data / GRAPH_FILE, n_nodes=series.n_nodes)
        return preset, series, graph
    data = simulate(cfg)
    series, graph = corrupt(data.series, data.graph, cfg.corruption, cfg.seed)
    return preset, series, graph


def cmd_gen(cfg: RunConfig) -> Path:
    """Write ``graph.edgelist``, ``series.csv`` with its metadata and the config snapshot."""
    with run_span("cmd_gen", preset=cfg.preset, seed=cfg.seed):
        run_dir = prepare_run_dir(cfg.out, f"gen-{cfg.preset}-{cfg.seed}")
        data = simulate(cfg)
        series, graph = corrupt(data.series, data.graph, cfg.corruption, cfg.seed)
        save_edge_list(graph, run_dir / GRAPH_FILE)
        metadata = {
            "preset": data.preset.name,
            "kind": data.spec.kind,
            "seed": cfg.seed,
            "normalization": data.spec.normalization,
            "omega": None if data.spec.omega is None else data.spec.omega.tolist(),
        }
        save_series(series, run_dir / SERIES_FILE, metadata)
        write_json(config_snapshot(cfg), run_dir / CONFIG_FILE)
        logger.info(f"💾 Wrote {series.n_samples} samples of {series.n_nodes} nodes to {run_dir}")
        return run_dir


def _rollout(cfg: RunConfig, preset: Preset, report: dict[str, Any], graph: DirectedGraph, run_dir: Path) -> None:
    """Compare the selected expressions against the true system from a fresh initial state."""
    if cfg.rollout is None or len(report["dimensions"]) != preset.d:
        return
    f_terms = [entry["f_terms"] for entry in report["dimensions"]]
    g_terms = [entry["g_terms"] for entry in report["dimensions"]]
    inferred = spec_from_terms(f_terms, g_terms, cfg.search.normalization)
    truth = dynamics_spec(cfg, preset, graph.n_nodes)
    x0 = random_initial_state(graph.n_nodes, preset.d, int_seed(cfg.seed, "rollout"))
    dt = cfg.dynamics.dt or preset.dt
    comparison = rollout_compare(inferred, truth, graph, x0, dt, cfg.rollout.T)
    write_rollout(comparison, run_dir / "rollout.csv", run_dir / "rollout.svg", cfg.rollout.nodes)
    report["rollout"] = comparison.to_dict()


def cmd_search(cfg: RunConfig, resume: bool = False) -> dict[str, Any]:
    """Search every requested dimension and write ``report.json`` (plus checkpoints and score logs)."""
    with run_span("cmd_search", preset=cfg.preset, seed=cfg.seed, resume=resume) as span:
        run_dir = prepare_run_dir(cfg.out, f"search-{cfg.preset}-{cfg.seed}")
        snapshot = config_snapshot(cfg)
        if resume and (run_dir / CONFIG_FILE).exists() and read_json(run_dir / CONFIG_FILE) != snapshot:
            raise ValueError(f"Cannot resume {run_dir}: its config snapshot differs from the given config")
        write_json(snapshot, run_dir / CONFIG_FILE)

        preset, series, graph = load_data(cfg)
        truth = truth_for(cfg, preset)
        search = cfg.effective_search(env.NETFEX_THREADS)
        span.set_attribute("netfex.nodes", graph.n_nodes)
        span.set_attribute("netfex.threads", search.threads or 1)
        report = run_search(series, graph, search, run_dir=run_dir, resume=resume, truth=truth)
        report["preset"] = preset.name
        _rollout(cfg, preset, report, graph, run_dir)
        write_json(report, run_dir / REPORT_FILE)
        if "smape" in report:
            logger.info(f"📏 Pooled sMAPE {report['smape']['pooled']:.4f}")
        return report


def _scenarios(cfg: RunConfig) -> list[tuple[str, float, CorruptionConfig]]:
    sweep = cfg.robustness
    base = CorruptionConfig()
    scenarios = [("downsample", k, base.model_copy(update={"keep_fraction": k})) for k in sweep.downsample]
    scenarios += [("snr_db", s, base.model_copy(update={"snr_db": s})) for s in sweep.snr_db]
    scenarios += [
        ("perturb", f, base.model_copy(update={"perturb_fraction": f, "perturb_mode": sweep.perturb_mode}))
        for f in sweep.perturb
    ]
    return scenarios


def _fixed_structure_terms(
    cfg: RunConfig, preset: Preset, series: TimeSeries, graph: DirectedGraph
) -> list[tuple[dict[str, float], dict[str, float]]]:
    search = cfg.effective_search(env.NETFEX_THREADS)
    dims = range(preset.d) if search.dims is None else search.dims
    self_names = default_variable_names(preset.d)
    pair_names = default_variable_names(2 * preset.d, pair=True)
    estimate = five_point_derivative(series)
    terms = []
    with torch_single_thread():
        for dim in dims:
            f_expr, g_expr = known_expressions(preset, dim)
            result = fit_structure(f_expr, g_expr, estimate, graph, search, dim)
            terms.append((to_symbolic(result.f_expr, self_names), to_symbolic(result.g_expr, pair_names)))
    return terms


def cmd_robustness(cfg: RunConfig) -> dict[str, Any]:
    """sMAPE against the preset truth for every downsampling, noise and link-perturbation scenario."""
    with run_span("cmd_robustness", preset=cfg.preset, seed=cfg.seed, mode=cfg.robustness.mode):
        run_dir = prepare_run_dir(cfg.out, f"robustness-{cfg.preset}-{cfg.seed}")
        write_json(config_snapshot(cfg), run_dir / CONFIG_FILE)
        data = simulate(cfg)
        truth = truth_for(cfg, data.preset)
        if truth is None:
            raise ValueError("Robustness sweeps need the preset dynamics to compare against")
        dims = list(range(data.preset.d)) if cfg.search.dims is None else list(cfg.search.dims)

        rows = []
        for factor, value, corruption in _scenarios(cfg):
            logger.info(f"🧭 Robustness scenario {factor}={value}")
            series, graph = corrupt(data.series, data.graph, corruption, cfg.seed)
            if cfg.robustness.mode == "fixed_structure":
                inferred = _fixed_structure_terms(cfg, data.preset, series, graph)
            else:
                search = cfg.effective_search(env.NETFEX_THREADS)
                report = run_search(series, graph, search)
                inferred = [(entry["f_terms"], entry["g_terms"]) for entry in report["dimensions"]]
            scores = system_smape(inferred, [truth[k] for k in dims])
            rows.append(
                {
                    "factor": factor,
                    "value": value,
                    "smape": scores.pooled,
                    "per_dimension": list(scores.per_dimension),
                    "terms": [{"f": f, "g": g} for f, g in inferred],
                }
            )

        table = pd.DataFrame([{k: r[k] for k in ("factor", "value", "smape")} for r in rows])
        table.to_csv(run_dir / "robustness.csv", index=False)
        result = {"preset": data.preset.name, "mode": cfg.robustness.mode, "scenarios": rows}
        write_json(result, run_dir / REPORT_FILE)
        return result


def loglog_slope(sizes: list[int], seconds: list[float]) -> float:
    """Least-squares slope of ``log(seconds)`` against ``log(N)``."""
    slope, _ = np.polyfit(np.log(sizes), np.log(seconds), 1)
    return float(slope)


def cmd_bench_rbm(cfg: RunConfig) -> dict[str, Any]:
    """Seconds per coarse-tune step for every interaction versus random batches, as ``N`` grows.

    Losses use dense pairing so the cost follows the number of evaluated node pairs.
    """
    with run_span("cmd_bench_rbm", preset=cfg.preset, seed=cfg.seed, batch_size=cfg.bench.batch_size):
        run_dir = prepare_run_dir(cfg.out, f"bench-{cfg.preset}-{cfg.seed}")
        bench = cfg.bench
        preset = get_preset(cfg.preset)
        f_expr, g_expr = known_expressions(preset, 0)
        rows = []
        with torch_single_thread():
            for n in bench.sizes:
                sized = cfg.model_copy(
                    update={
                        "graph": cfg.graph.model_copy(update={"n": n}),
                        "dynamics": cfg.dynamics.model_copy(update={"T": bench.T}),
                    }
                )
                data = simulate(sized)
                ctx = LossContext.from_series(
                    data.series, data.graph, 0, data.spec.normalization, pairing="dense"
                )
                for mode, batch in (("full", None), ("rbm", min(bench.batch_size, n))):
                    seconds = benchmark_coarse_step(ctx, f_expr, g_expr, batch, bench.repeats, seed=cfg.seed)
                    rows.append({"N": n, "mode": mode, "seconds_per_iter": seconds})
                    logger.info(f"⏱️ N={n} {mode}: {seconds:.4f} s/iter")

        table = pd.DataFrame(rows, columns=["N", "mode", "seconds_per_iter"])
        table.to_csv(run_dir / "bench.csv", index=False)
        slopes = {}
        for mode in ("full", "rbm"):
            part = table[table["mode"] == mode]
            if len(part) < 2:
                slopes[mode] = math.nan
                continue
            slopes[mode] = loglog_slope(part["N"].tolist(), part["seconds_per_iter"].tolist())
        result = {"preset": preset.name, "batch_size": bench.batch_size, "slopes": slopes, "rows": rows}
        write_json(result, run_dir / "bench.json")
        logger.info(f"📈 log-log slopes: full {slopes['full']:.2f}, rbm {slopes['rbm']:.2f}")
        return result
