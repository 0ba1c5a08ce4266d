"""Structure search: sample, coarse-tune, pool, update the controllers, fine-tune and select."""

from __future__ import annotations

import json
import logging
import math
import numpy as np
import pandas as pd
import time
import torch
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from netfex_lib.__version__ import __lib_name__, __version__
from netfex_lib.exceptions import NumericError, ParameterError, PreconditionError
from netfex_lib.models.expression import Expression, OperatorSet, TreeTemplate
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.search import Candidate, FineTuneResult, Pool, SearchConfig
from netfex_lib.models.series import DerivativeEstimate, TimeSeries
from netfex_lib.services.controller import Controller, policy_update
from netfex_lib.services.expressions import (
    build_template,
    default_variable_names,
    expression_to_dict,
    filter_coefficients,
    random_theta,
    to_symbolic,
)
from netfex_lib.services.losses import (
    LossContext,
    full_loss,
    joint_theta,
    loss_tensor,
    random_partition,
)
from netfex_lib.services.optimizers import AdamState, CosineSchedule, bfgs_minimize, value_and_grad
from netfex_lib.services.postprocessing import system_smape
from netfex_lib.services.preprocessing import five_point_derivative
from netfex_lib.services.seeding import int_seed, rng_for
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

TermPair = tuple[dict[str, float], dict[str, float]]


@dataclass(frozen=True)
class SearchSpace:
    """Templates of both trees and the operator set they draw from."""

    f_template: TreeTemplate
    g_template: TreeTemplate
    operators: OperatorSet

    @classmethod
    def from_config(cls, cfg: SearchConfig, d: int) -> SearchSpace:
        return cls(
            f_template=build_template(cfg.depth_f, d),
            g_template=build_template(cfg.depth_g, 2 * d),
            operators=OperatorSet(tuple(cfg.unary), tuple(cfg.binary)),
        )

    @classmethod
    def from_expressions(cls, f_expr: Expression, g_expr: Expression) -> SearchSpace:
        if f_expr.operators != g_expr.operators:
            raise ParameterError("Both trees must share one operator set")
        return cls(f_expr.template, g_expr.template, f_expr.operators)

    def expressions(
        self,
        f_sequence: Sequence[int],
        g_sequence: Sequence[int],
        theta_f: np.ndarray | None = None,
        theta_g: np.ndarray | None = None,
    ) -> tuple[Expression, Expression]:
        theta_f = np.zeros(self.f_template.n_params) if theta_f is None else theta_f
        theta_g = np.zeros(self.g_template.n_params) if theta_g is None else theta_g
        return (
            Expression(self.f_template, self.operators, tuple(f_sequence), theta_f),
            Expression(self.g_template, self.operators, tuple(g_sequence), theta_g),
        )

    def candidate_expressions(self, cand: Candidate) -> tuple[Expression, Expression]:
        return self.expressions(cand.f_sequence, cand.g_sequence, cand.theta_f, cand.theta_g)


@dataclass(frozen=True)
class CoarseTuneResult:
    theta_f: np.ndarray
    theta_g: np.ndarray
    loss: float
    score: float


def score_from_loss(loss: float) -> float:
    """``1 / (1 + loss)``; a non-finite loss scores 0."""
    if not math.isfinite(loss) or loss < 0:
        return 0.0
    return 1.0 / (1.0 + loss)


def effective_batch_size(cfg: SearchConfig, n_nodes: int) -> int | None:
    """RBM batch size capped at the node count; ``None`` when the graph is too small to batch."""
    if n_nodes < 2:
        return None
    return min(cfg.rbm_batch, n_nodes)


def _partition(n_nodes: int, batch_size: int | None, rng: np.random.Generator) -> list[np.ndarray] | None:
    return None if batch_size is None else random_partition(n_nodes, batch_size, rng)


def validation_partition(cfg: SearchConfig, n_nodes: int) -> list[np.ndarray] | None:
    """Fixed partition used to score every candidate on equal footing."""
    return _partition(n_nodes, effective_batch_size(cfg, n_nodes), np.random.default_rng(cfg.validation_seed))


def coarse_tune(
    f_sequence: Sequence[int],
    g_sequence: Sequence[int],
    ctx: LossContext,
    cfg: SearchConfig,
    space: SearchSpace,
    init_rng: np.random.Generator,
    rbm_rng: np.random.Generator,
    theta: tuple[np.ndarray, np.ndarray] | None = None,
) -> CoarseTuneResult:
    """Adam then BFGS on the random-batch loss, scored on the validation partition.

    Parameters start from ``theta`` when given, otherwise scales are drawn from
    U[-0.5, 0.5] with zero biases. Adam redraws the partition every step unless
    ``cfg.rbm_fixed_partition`` is set; BFGS always works on one partition. Any numeric
    failure yields score 0.
    """
    if theta is None:
        theta = (random_theta(space.f_template, init_rng), random_theta(space.g_template, init_rng))
    f_expr, g_expr = space.expressions(f_sequence, g_sequence, *theta)
    n_f = space.f_template.n_params
    start = joint_theta(f_expr, g_expr)
    batch_size = effective_batch_size(cfg, ctx.n_nodes)
    fixed = _partition(ctx.n_nodes, batch_size, rbm_rng)

    def _adam_loss(th: torch.Tensor) -> torch.Tensor:
        batches = fixed if cfg.rbm_fixed_partition else _partition(ctx.n_nodes, batch_size, rbm_rng)
        return loss_tensor(ctx, f_expr, g_expr, th, batches, cfg.rbm_mean_field)

    current = start
    try:
        if cfg.adam_steps:
            adam = AdamState.create(start, lr=cfg.lr_adam)
            for _ in range(cfg.adam_steps):
                adam.step(_adam_loss)
            current = adam.theta
        if cfg.bfgs_steps:
            bfgs_batches = fixed if cfg.rbm_fixed_partition else _partition(ctx.n_nodes, batch_size, rbm_rng)
            fn = value_and_grad(lambda th: loss_tensor(ctx, f_expr, g_expr, th, bfgs_batches, cfg.rbm_mean_field))
            current = bfgs_minimize(current, fn, cfg.bfgs_steps, lr=cfg.lr_bfgs).theta
        validation = validation_partition(cfg, ctx.n_nodes)
        with torch.no_grad():
            loss = float(loss_tensor(ctx, f_expr, g_expr, torch.from_numpy(current), validation, cfg.rbm_mean_field))
    except NumericError as err:
        logger.debug(f"⚠️ Coarse-tune failed numerically: {err}")
        return CoarseTuneResult(start[:n_f], start[n_f:], math.inf, 0.0)
    if not math.isfinite(loss):
        loss = math.inf
    return CoarseTuneResult(current[:n_f].copy(), current[n_f:].copy(), loss, score_from_loss(loss))


@dataclass(eq=False)
class DimensionSearch:
    """Mutable state of the controller loop for one output dimension."""

    dim: int
    cfg: SearchConfig
    space: SearchSpace
    ctx: LossContext
    f_controller: Controller
    g_controller: Controller
    pool: Pool
    iteration: int = 0
    score_rows: list[dict[str, Any]] = field(default_factory=list)

    @classmethod
    def start(cls, ctx: LossContext, cfg: SearchConfig, space: SearchSpace) -> DimensionSearch:
        dim = ctx.output_dim
        return cls(
            dim=dim,
            cfg=cfg,
            space=space,
            ctx=ctx,
            f_controller=Controller(
                space.f_template, space.operators, int_seed(cfg.seed, "controller", dim, 0), lr=cfg.lr_controller
            ),
            g_controller=Controller(
                space.g_template, space.operators, int_seed(cfg.seed, "controller", dim, 1), lr=cfg.lr_controller
            ),
            pool=Pool(cfg.pool_size),
        )

    def step(self, executor: Executor | None = None) -> list[Candidate]:
        """Sample ``M`` sequence pairs, coarse-tune them, pool them and update both controllers."""
        cfg, t, dim = self.cfg, self.iteration, self.dim
        sample_rng = rng_for(cfg.seed, "sample", dim, t)
        samples = [
            (self.f_controller.sample(cfg.epsilon, sample_rng), self.g_controller.sample(cfg.epsilon, sample_rng))
            for _ in range(cfg.batch)
        ]

        def _tune(k: int) -> CoarseTuneResult:
            f_sample, g_sample = samples[k]
            return coarse_tune(
                f_sample.sequence,
                g_sample.sequence,
                self.ctx,
                cfg,
                self.space,
                init_rng=rng_for(cfg.seed, "init", dim, t, k),
                rbm_rng=rng_for(cfg.seed, "rbm", dim, t, k),
            )

        results = list(executor.map(_tune, range(cfg.batch))) if executor else [_tune(k) for k in range(cfg.batch)]

        candidates = []
        for k, ((f_sample, g_sample), res) in enumerate(zip(samples, results, strict=True)):
            cand = Candidate(
                f_sequence=f_sample.sequence,
                g_sequence=g_sample.sequence,
                theta_f=res.theta_f,
                theta_g=res.theta_g,
                score=res.score,
                output_dim=dim,
                loss=res.loss,
            )
            self.pool.insert(cand)
            candidates.append(cand)
            self.score_rows.append({"iteration": t, "candidate": k, "score": res.score})

        policy_update(self.f_controller, [(f, r.score) for (f, _), r in zip(samples, results, strict=True)], cfg.nu)
        policy_update(self.g_controller, [(g, r.score) for (_, g), r in zip(samples, results, strict=True)], cfg.nu)
        self.iteration += 1
        best = max(r.score for r in results)
        logger.debug(f"🔁 dim {dim + 1} iteration {t + 1}/{cfg.iterations}: best batch score {best:.6f}")
        return candidates

    def checkpoint(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "iteration": self.iteration,
            "pool": self.pool.to_dict(),
            "f_controller": self.f_controller.state_dict(),
            "g_controller": self.g_controller.state_dict(),
            "scores": self.score_rows,
        }

    def restore(self, payload: dict[str, Any]) -> None:
        if int(payload["dim"]) != self.dim:
            raise PreconditionError(f"Checkpoint belongs to dimension {payload['dim']}, not {self.dim}")
        self.iteration = int(payload["iteration"])
        self.pool = Pool.from_dict(payload["pool"])
        self.f_controller.load_state_dict(payload["f_controller"])
        self.g_controller.load_state_dict(payload["g_controller"])
        self.score_rows = list(payload["scores"])


def checkpoint_path(run_dir: Path, dim: int) -> Path:
    return run_dir / f"dim{dim + 1}_checkpoint.json"


def scores_path(run_dir: Path, dim: int) -> Path:
    return run_dir / f"dim{dim + 1}_scores.csv"


def _write_checkpoint(search: DimensionSearch, run_dir: Path) -> None:
    checkpoint_path(run_dir, search.dim).write_text(json.dumps(search.checkpoint()), encoding="utf-8")
    columns = ["iteration", "candidate", "score"]
    pd.DataFrame(search.score_rows, columns=columns).to_csv(scores_path(run_dir, search.dim), index=False)


def _as_estimate(data: TimeSeries | DerivativeEstimate) -> DerivativeEstimate:
    return data if isinstance(data, DerivativeEstimate) else five_point_derivative(data)


def validate_search_inputs(estimate: DerivativeEstimate, graph: DirectedGraph, cfg: SearchConfig) -> list[int]:
    """Check data, graph and configuration agree; returns the output dimensions to search."""
    n, d, _ = estimate.states.shape
    if n != graph.n_nodes:
        raise PreconditionError(f"Data has {n} nodes, graph has {graph.n_nodes}")
    if cfg.fine_tune_nodes > n:
        raise ParameterError(f"fine_tune_nodes={cfg.fine_tune_nodes} exceeds the {n} nodes of the graph")
    dims = list(range(d)) if cfg.dims is None else list(cfg.dims)
    bad = [k for k in dims if not 0 <= k < d]
    if bad:
        raise ParameterError(f"Output dimensions {bad} outside [0, {d})")
    if len(set(dims)) != len(dims):
        raise ParameterError(f"Duplicate output dimensions in {dims}")
    return dims


@contextmanager
def torch_single_thread() -> Iterator[None]:
    """Pin torch to one intra-op thread so results do not depend on the worker count."""
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(previous)


def search_loop(
    data: TimeSeries | DerivativeEstimate,
    graph: DirectedGraph,
    cfg: SearchConfig,
    dim: int = 0,
    run_dir: Path | None = None,
    resume: bool = False,
    executor: Executor | None = None,
    on_iteration: Callable[[DimensionSearch], None] | None = None,
) -> Pool:
    """Run the controller loop for output dimension ``dim`` and return its candidate pool.

    With ``run_dir`` a checkpoint and the score log are written every
    ``cfg.checkpoint_every`` iterations; ``resume`` continues from that checkpoint.
    """
    estimate = _as_estimate(data)
    validate_search_inputs(estimate, graph, cfg.model_copy(update={"dims": (dim,)}))
    ctx = LossContext.from_estimate(
        estimate, graph, dim, cfg.normalization, time_stride=cfg.coarse_time_stride, pairing=cfg.pairing
    )
    search = DimensionSearch.start(ctx, cfg, SearchSpace.from_config(cfg, ctx.d))
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    if resume and run_dir is not None and checkpoint_path(run_dir, dim).exists():
        search.restore(json.loads(checkpoint_path(run_dir, dim).read_text(encoding="utf-8")))
        logger.info(f"⏯️ Resuming dimension {dim + 1} at iteration {search.iteration}")

    logger.info(f"🔎 Searching dimension {dim + 1}: {cfg.iterations} iterations of {cfg.batch} candidates")
    while search.iteration < cfg.iterations:
        search.step(executor)
        if on_iteration is not None:
            on_iteration(search)
        done = search.iteration == cfg.iterations
        if run_dir is not None and (done or search.iteration % cfg.checkpoint_every == 0):
            _write_checkpoint(search, run_dir)
    if run_dir is not None and not checkpoint_path(run_dir, dim).exists():
        _write_checkpoint(search, run_dir)
    logger.info(f"🏁 Dimension {dim + 1} pool scores: {[round(s, 6) for s in search.pool.scores]}")
    return search.pool


def _fine_tune_run(
    f_expr: Expression, g_expr: Expression, ctx: LossContext, cfg: SearchConfig
) -> tuple[np.ndarray, float] | None:
    adam = AdamState.create(joint_theta(f_expr, g_expr), lr=cfg.lr_fine_tune)
    schedule = CosineSchedule(cfg.lr_fine_tune, max(cfg.fine_tune_steps, 1))
    scheduler = torch.optim.lr_scheduler.LambdaLR(adam.optimizer, schedule.factor)

    def _loss(th: torch.Tensor) -> torch.Tensor:
        return loss_tensor(ctx, f_expr, g_expr, th)

    try:
        last = math.inf
        for _ in range(cfg.fine_tune_steps):
            last = adam.step(_loss)
            scheduler.step()
    except NumericError as err:
        logger.debug(f"⚠️ Fine-tune run diverged: {err}")
        return None
    return adam.theta, last


def fine_tune(
    cand: Candidate,
    ctx: LossContext,
    cfg: SearchConfig,
    space: SearchSpace,
    stream: int = 0,
) -> FineTuneResult:
    """Average of ``L`` filtered full-interaction fits on random node samples.

    Each run draws ``S`` nodes without replacement and runs ``T3`` Adam steps with a
    cosine-decayed rate, starting from the candidate's coarse-tuned parameters. Runs that
    diverge are left out of the average. The result carries the full-graph loss.
    """
    n = ctx.n_nodes
    if cfg.fine_tune_nodes > n:
        raise ParameterError(f"fine_tune_nodes={cfg.fine_tune_nodes} exceeds the {n} nodes of the graph")
    f_expr, g_expr = space.candidate_expressions(cand)
    n_f = space.f_template.n_params
    thetas, run_losses = [], []
    for run in range(cfg.fine_tune_runs):
        rng = rng_for(cfg.seed, "fine_tune", ctx.output_dim, stream, run)
        nodes = np.sort(rng.choice(n, size=cfg.fine_tune_nodes, replace=False))
        sub = ctx.restricted(nodes, full_neighborhood=cfg.fine_tune_full_neighborhood)
        fitted = _fine_tune_run(f_expr, g_expr, sub, cfg)
        if fitted is None:
            continue
        theta, last = fitted
        f_run = filter_coefficients(f_expr.with_theta(theta[:n_f]), cfg.tau)
        g_run = filter_coefficients(g_expr.with_theta(theta[n_f:]), cfg.tau)
        thetas.append(joint_theta(f_run, g_run))
        run_losses.append(last)

    if not thetas:
        return FineTuneResult(cand, f_expr, g_expr, math.inf, ())
    mean = np.mean(np.stack(thetas), axis=0)
    f_final, g_final = f_expr.with_theta(mean[:n_f]), g_expr.with_theta(mean[n_f:])
    loss = full_loss(ctx, f_final, g_final, time_chunk=cfg.loss_time_chunk)
    return FineTuneResult(cand, f_final, g_final, loss, tuple(run_losses))


def select_best(results: Sequence[FineTuneResult]) -> int:
    """Index of the lowest full-graph loss; ties go to fewer nonzero parameters, then pool order."""
    if not results:
        raise ParameterError("Nothing to select from")
    return min(range(len(results)), key=lambda k: (results[k].loss, results[k].n_nonzero, k))


def fit_structure(
    f_expr: Expression,
    g_expr: Expression,
    data: TimeSeries | DerivativeEstimate,
    graph: DirectedGraph,
    cfg: SearchConfig,
    dim: int,
) -> FineTuneResult:
    """Coarse-tune then fine-tune a fixed pair of operator sequences, skipping the controller."""
    estimate = _as_estimate(data)
    validate_search_inputs(estimate, graph, cfg.model_copy(update={"dims": (dim,)}))
    space = SearchSpace.from_expressions(f_expr, g_expr)
    coarse_ctx = LossContext.from_estimate(
        estimate, graph, dim, cfg.normalization, time_stride=cfg.coarse_time_stride, pairing=cfg.pairing
    )
    fine_ctx = LossContext.from_estimate(estimate, graph, dim, cfg.normalization, time_stride=cfg.fine_time_stride)
    tuned = coarse_tune(
        f_expr.sequence,
        g_expr.sequence,
        coarse_ctx,
        cfg,
        space,
        init_rng=rng_for(cfg.seed, "init", dim, 0, 0),
        rbm_rng=rng_for(cfg.seed, "rbm", dim, 0, 0),
    )
    cand = Candidate(f_expr.sequence, g_expr.sequence, tuned.theta_f, tuned.theta_g, tuned.score, dim, tuned.loss)
    return fine_tune(cand, fine_ctx, cfg, space)


def dimension_report(result: FineTuneResult, pool: Pool | None, d: int) -> dict[str, Any]:
    self_names = default_variable_names(d)
    pair_names = default_variable_names(2 * d, pair=True)
    return {
        "dim": result.candidate.output_dim + 1,
        "loss": result.loss,
        "f": expression_to_dict(result.f_expr, self_names),
        "g": expression_to_dict(result.g_expr, pair_names),
        "f_terms": to_symbolic(result.f_expr, self_names),
        "g_terms": to_symbolic(result.g_expr, pair_names),
        "pool_scores": None if pool is None else pool.scores,
        "coarse_score": result.candidate.score,
        "fine_tune_run_losses": list(result.run_losses),
    }


def attach_smape(report: dict[str, Any], truth: Sequence[TermPair]) -> dict[str, Any]:
    """Add pooled and per-dimension sMAPE against ``truth`` (indexed by output dimension)."""
    dims = [entry["dim"] - 1 for entry in report["dimensions"]]
    inferred = [(entry["f_terms"], entry["g_terms"]) for entry in report["dimensions"]]
    scores = system_smape(inferred, [truth[k] for k in dims])
    report["smape"] = {
        "pooled": scores.pooled,
        "per_dimension": {str(k + 1): v for k, v in zip(dims, scores.per_dimension, strict=True)},
        "tables": {
            str(k + 1): None if table is None else table.to_records()
            for k, table in zip(dims, scores.tables, strict=True)
        },
    }
    return report


def write_report(report: dict[str, Any], path: Path) -> Path:
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run_search(
    data: TimeSeries,
    graph: DirectedGraph,
    cfg: SearchConfig,
    run_dir: Path | None = None,
    resume: bool = False,
    truth: Sequence[TermPair] | None = None,
) -> dict[str, Any]:
    """Search, fine-tune and select every requested output dimension; returns the report.

    Dimensions are searched independently. Coarse-tunes within an iteration and the
    fine-tunes of one pool run on ``cfg.threads`` workers; results do not depend on it.
    """
    estimate = five_point_derivative(data)
    dims = validate_search_inputs(estimate, graph, cfg)
    d = estimate.states.shape[1]
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    report: dict[str, Any] = {
        "library": f"{__lib_name__} {__version__}",
        "config": cfg.model_dump(mode="json", exclude={"threads"}),
        "dimensions": [],
    }
    workers = cfg.threads or 1
    with torch_single_thread(), ThreadPoolExecutor(max_workers=workers) as executor:
        runner = executor if workers > 1 else None
        for dim in dims:
            pool = search_loop(estimate, graph, cfg, dim, run_dir=run_dir, resume=resume, executor=runner)
            space = SearchSpace.from_config(cfg, d)
            fine_ctx = LossContext.from_estimate(
                estimate, graph, dim, cfg.normalization, time_stride=cfg.fine_time_stride
            )
            logger.info(f"🎯 Fine-tuning {len(pool)} candidates of dimension {dim + 1}")

            def _fine(
                k: int, pool: Pool = pool, space: SearchSpace = space, ctx: LossContext = fine_ctx
            ) -> FineTuneResult:
                return fine_tune(pool[k], ctx, cfg, space, stream=k)

            indices = range(len(pool))
            results = list(runner.map(_fine, indices)) if runner else [_fine(k) for k in indices]
            best = results[select_best(results)]
            logger.info(f"✅ Dimension {dim + 1} selected with full loss {best.loss:.3e}")
            report["dimensions"].append(dimension_report(best, pool, d))
    if truth is not None:
        attach_smape(report, truth)
    if run_dir is not None:
        write_report(report, run_dir / "report.json")
    return report


def benchmark_coarse_step(
    ctx: LossContext,
    f_expr: Expression,
    g_expr: Expression,
    batch_size: int | None,
    repeats: int = 3,
    seed: int = 0,
) -> float:
    """Median wall-clock seconds of one coarse-tune Adam step (forward, backward, update).

    ``batch_size=None`` evaluates every interaction; otherwise a fresh random partition
    is drawn per step as in coarse-tuning.
    """
    rng = np.random.default_rng(seed)
    adam = AdamState.create(joint_theta(f_expr, g_expr))
    timings = []
    for _ in range(repeats):
        batches = None if batch_size is None else random_partition(ctx.n_nodes, batch_size, rng)
        began = time.perf_counter()
        adam.step(lambda th, batches=batches: loss_tensor(ctx, f_expr, g_expr, th, batches))
        timings.append(time.perf_counter() - began)
    return float(np.median(timings))
