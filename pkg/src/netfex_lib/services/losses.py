"""Network least-squares loss with full and random-batch interaction sums."""

from __future__ import annotations

import logging
import math
import numpy as np
import threading
import torch
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from netfex_lib.exceptions import NumericError, ParameterError, PreconditionError
from netfex_lib.models.expression import Expression
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DerivativeEstimate, Normalization, TimeSeries
from netfex_lib.services.expressions import evaluate_tensor
from netfex_lib.services.preprocessing import five_point_derivative
from typing import Literal

logger = logging.getLogger(__name__)

Pairing = Literal["arcs", "dense"]


class PairCounter:
    """Thread-safe tally of ordered (receiver, sender) pairs whose interaction was evaluated."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.pairs = 0
        self.calls = 0

    def add(self, pairs: int) -> None:
        with self._lock:
            self.pairs += int(pairs)
            self.calls += 1


@dataclass(frozen=True, eq=False)
class LossContext:
    """Aligned states ``[N, T, d]`` and derivative targets ``[N, T]`` for one output dimension.

    ``rows`` restricts the residual to a subset of nodes while their interaction sums
    still run over the whole graph.
    """

    graph: DirectedGraph
    states: torch.Tensor
    targets: torch.Tensor
    dt: float
    output_dim: int = 0
    normalization: Normalization = "none"
    pairing: Pairing = "arcs"
    rows: np.ndarray | None = None
    counter: PairCounter | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n, t, _ = self.states.shape
        if n != self.graph.n_nodes:
            raise PreconditionError(f"Data has {n} nodes, graph has {self.graph.n_nodes}")
        if tuple(self.targets.shape) != (n, t):
            raise ParameterError(f"Targets shape {tuple(self.targets.shape)} does not match states ({n}, {t})")
        if self.normalization not in ("none", "in_degree"):
            raise ParameterError(f"Unknown normalization {self.normalization!r}")
        if self.pairing not in ("arcs", "dense"):
            raise ParameterError(f"Unknown pairing mode {self.pairing!r}")

    @classmethod
    def from_estimate(
        cls,
        estimate: DerivativeEstimate,
        graph: DirectedGraph,
        output_dim: int,
        normalization: Normalization = "none",
        time_stride: int = 1,
        pairing: Pairing = "arcs",
    ) -> LossContext:
        if time_stride < 1:
            raise ParameterError(f"time_stride must be at least 1, got {time_stride}")
        if not 0 <= output_dim < estimate.states.shape[1]:
            raise ParameterError(f"Output dimension {output_dim} outside [0, {estimate.states.shape[1]})")
        states = np.ascontiguousarray(estimate.states[:, :, ::time_stride].transpose(0, 2, 1))
        targets = np.ascontiguousarray(estimate.derivatives[:, output_dim, ::time_stride])
        return cls(
            graph=graph,
            states=torch.from_numpy(states),
            targets=torch.from_numpy(targets),
            dt=estimate.dt,
            output_dim=output_dim,
            normalization=normalization,
            pairing=pairing,
        )

    @classmethod
    def from_series(
        cls,
        ts: TimeSeries,
        graph: DirectedGraph,
        output_dim: int,
        normalization: Normalization = "none",
        time_stride: int = 1,
        pairing: Pairing = "arcs",
    ) -> LossContext:
        return cls.from_estimate(five_point_derivative(ts), graph, output_dim, normalization, time_stride, pairing)

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def d(self) -> int:
        return int(self.states.shape[2])

    @property
    def n_times(self) -> int:
        return int(self.states.shape[1])

    @cached_property
    def row_index(self) -> torch.Tensor:
        rows = np.arange(self.n_nodes) if self.rows is None else np.asarray(self.rows)
        return torch.as_tensor(rows, dtype=torch.long)

    @cached_property
    def src(self) -> torch.Tensor:
        return torch.as_tensor(self.graph.src, dtype=torch.long)

    @cached_property
    def dst(self) -> torch.Tensor:
        return torch.as_tensor(self.graph.dst, dtype=torch.long)

    @cached_property
    def adjacency(self) -> torch.Tensor:
        return torch.from_numpy(self.graph.adjacency())

    @cached_property
    def inv_in_degree(self) -> torch.Tensor:
        """``1 / k_in`` per node, 0 for nodes without in-neighbors."""
        k = self.graph.in_degree.astype(np.float64)
        return torch.from_numpy(np.divide(1.0, k, out=np.zeros_like(k), where=k > 0))

    def with_counter(self, counter: PairCounter | None) -> LossContext:
        return replace(self, counter=counter)

    def restricted(self, nodes: Sequence[int], full_neighborhood: bool = False) -> LossContext:
        """Context for a node sample.

        By default the graph is cut down to the induced subgraph on ``nodes``; with
        ``full_neighborhood`` the residual covers only ``nodes`` but every in-neighbor
        still contributes.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        if full_neighborhood:
            return replace(self, rows=nodes)
        index = torch.as_tensor(nodes, dtype=torch.long)
        return replace(
            self,
            graph=self.graph.induced_subgraph(nodes.tolist()),
            states=self.states.index_select(0, index),
            targets=self.targets.index_select(0, index),
            rows=None,
        )

    def time_slice(self, start: int, stop: int) -> LossContext:
        return replace(self, states=self.states[:, start:stop], targets=self.targets[:, start:stop])


def split_theta(f_expr: Expression, theta: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    n_f = f_expr.template.n_params
    return theta[:n_f], theta[n_f:]


def joint_theta(f_expr: Expression, g_expr: Expression) -> np.ndarray:
    return np.concatenate([f_expr.theta, g_expr.theta])


def _check_inputs(ctx: LossContext, f_expr: Expression, g_expr: Expression) -> None:
    if f_expr.template.input_dim != ctx.d:
        raise ParameterError(f"Self tree takes {f_expr.template.input_dim} inputs, data has d={ctx.d}")
    if g_expr.template.input_dim != 2 * ctx.d:
        raise ParameterError(f"Interaction tree takes {g_expr.template.input_dim} inputs, needs {2 * ctx.d}")


def _arc_interaction(
    ctx: LossContext, g_expr: Expression, theta_g: torch.Tensor, keep: np.ndarray | None
) -> torch.Tensor:
    src, dst = ctx.src, ctx.dst
    if ctx.rows is not None:
        wanted = np.zeros(ctx.n_nodes, dtype=bool)
        wanted[ctx.rows] = True
        row_mask = wanted[ctx.graph.dst]
        keep = row_mask if keep is None else keep & row_mask
    if keep is not None:
        selected = torch.from_numpy(np.flatnonzero(keep))
        src, dst = src.index_select(0, selected), dst.index_select(0, selected)
    if ctx.counter is not None:
        ctx.counter.add(int(dst.numel()))
    out = torch.zeros(ctx.n_nodes, ctx.n_times, dtype=torch.float64)
    if dst.numel() == 0:
        return out
    pair_inputs = torch.cat([ctx.states.index_select(0, dst), ctx.states.index_select(0, src)], dim=-1)
    return out.index_add(0, dst, evaluate_tensor(g_expr, theta_g, pair_inputs))


def _dense_block(
    ctx: LossContext, g_expr: Expression, theta_g: torch.Tensor, receivers: torch.Tensor, senders: torch.Tensor
) -> torch.Tensor:
    """Interaction sums for ``receivers`` over every ordered pair with ``senders``, masked by ``A``."""
    r, c = receivers.numel(), senders.numel()
    if ctx.counter is not None:
        overlap = np.intersect1d(receivers.numpy(), senders.numpy()).size
        ctx.counter.add(r * c - overlap)
    xi = ctx.states.index_select(0, receivers)[:, None].expand(r, c, ctx.n_times, ctx.d)
    xj = ctx.states.index_select(0, senders)[None, :].expand(r, c, ctx.n_times, ctx.d)
    values = evaluate_tensor(g_expr, theta_g, torch.cat([xi, xj], dim=-1))
    mask = ctx.adjacency.index_select(0, receivers).index_select(1, senders)
    return (values * mask[:, :, None]).sum(dim=1)


def _interaction(
    ctx: LossContext,
    g_expr: Expression,
    theta_g: torch.Tensor,
    batches: Sequence[np.ndarray] | None,
    mean_field: bool,
) -> torch.Tensor:
    """Interaction term for every node ``[N, T]`` with normalization applied."""
    n = ctx.n_nodes
    if ctx.pairing == "arcs":
        if batches is None:
            total = _arc_interaction(ctx, g_expr, theta_g, None)
        else:
            batch_of = np.empty(n, dtype=np.int64)
            for k, batch in enumerate(batches):
                batch_of[batch] = k
            keep = batch_of[ctx.graph.src] == batch_of[ctx.graph.dst]
            total = _arc_interaction(ctx, g_expr, theta_g, keep)
    else:
        total = torch.zeros(n, ctx.n_times, dtype=torch.float64)
        if batches is None:
            receivers = ctx.row_index
            total = total.index_copy(0, receivers, _dense_block(ctx, g_expr, theta_g, receivers, torch.arange(n)))
        else:
            for batch in batches:
                members = torch.as_tensor(np.asarray(batch), dtype=torch.long)
                total = total.index_copy(0, members, _dense_block(ctx, g_expr, theta_g, members, members))
    if batches is not None and mean_field:
        sizes = np.zeros(n)
        for batch in batches:
            sizes[batch] = len(batch)
        factor = np.divide(n - 1.0, sizes - 1.0, out=np.zeros(n), where=sizes > 1)
        total = total * torch.from_numpy(factor)[:, None]
    if ctx.normalization == "in_degree":
        total = total * ctx.inv_in_degree[:, None]
    return total


def loss_tensor(
    ctx: LossContext,
    f_expr: Expression,
    g_expr: Expression,
    theta: torch.Tensor,
    batches: Sequence[np.ndarray] | None = None,
    mean_field: bool = False,
) -> torch.Tensor:
    """Differentiable mean squared residual over ``ctx.rows`` and all times.

    ``theta`` is the self-tree parameters followed by the interaction-tree parameters.
    ``batches`` partitions the nodes for the random-batch form; ``None`` keeps every
    interaction. Expression overflow propagates as :class:`ExpressionOverflowError`.
    """
    _check_inputs(ctx, f_expr, g_expr)
    theta_f, theta_g = split_theta(f_expr, theta)
    rows = ctx.row_index
    drift = evaluate_tensor(f_expr, theta_f, ctx.states.index_select(0, rows))
    interaction = _interaction(ctx, g_expr, theta_g, batches, mean_field).index_select(0, rows)
    residual = drift + interaction - ctx.targets.index_select(0, rows)
    return (residual**2).mean()


def random_partition(n_nodes: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform random split of ``0..n_nodes-1`` into ``ceil(n_nodes / batch_size)`` batches."""
    if batch_size < 2:
        raise ParameterError(f"RBM batch size must be at least 2, got {batch_size}")
    if batch_size > n_nodes:
        raise ParameterError(f"RBM batch size {batch_size} exceeds node count {n_nodes}")
    order = rng.permutation(n_nodes)
    return [np.sort(order[k : k + batch_size]) for k in range(0, n_nodes, batch_size)]


def _as_float(compute: Callable[[], float | torch.Tensor]) -> float:
    try:
        with torch.no_grad():
            value = float(compute())
    except NumericError as err:
        logger.debug(f"⚠️ Loss evaluation overflowed: {err}")
        return math.inf
    return value if math.isfinite(value) else math.inf


def full_loss(ctx: LossContext, f_expr: Expression, g_expr: Expression, time_chunk: int | None = None) -> float:
    """Full-interaction loss at the expressions' own parameters; ``inf`` on numeric failure.

    ``time_chunk`` evaluates the mean in slices of that many samples to bound memory.
    """
    theta = torch.from_numpy(joint_theta(f_expr, g_expr))
    if time_chunk is None or time_chunk >= ctx.n_times:
        return _as_float(lambda: loss_tensor(ctx, f_expr, g_expr, theta))

    def _chunked() -> float:
        total = 0.0
        for start in range(0, ctx.n_times, time_chunk):
            part = ctx.time_slice(start, start + time_chunk)
            total += float(loss_tensor(part, f_expr, g_expr, theta)) * part.n_times
        return total / ctx.n_times

    return _as_float(_chunked)


def rbm_loss(
    ctx: LossContext,
    f_expr: Expression,
    g_expr: Expression,
    batch_size: int,
    seed: int | np.random.Generator,
    mean_field: bool = False,
) -> float:
    """Random-batch loss with one fresh partition drawn from ``seed``; ``inf`` on numeric failure."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batches = random_partition(ctx.n_nodes, batch_size, rng)
    theta = torch.from_numpy(joint_theta(f_expr, g_expr))
    return _as_float(lambda: loss_tensor(ctx, f_expr, g_expr, theta, batches, mean_field))
