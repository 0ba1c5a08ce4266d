"""Synthetic network generation, perturbation and edge-list I/O."""

from __future__ import annotations

import logging
import networkx as nx
import numpy as np
from netfex_lib.exceptions import ParameterError, PreconditionError, RetriesExhaustedError
from netfex_lib.models.graph import DirectedGraph
from pathlib import Path
from typing import Literal

logger = logging.getLogger(__name__)


def generate_er(n: int, p: float, seed: int) -> DirectedGraph:
    """Directed Erdos-Renyi graph.

    Every unordered pair becomes an edge with probability ``p``; a realized edge is then
    oriented ``i -> j``, ``j -> i`` or both, each with probability 1/3.
    """
    if n < 2:
        raise ParameterError(f"ER graph needs n >= 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"ER edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(rows.size) < p
    rows, cols = rows[keep], cols[keep]
    orientation = rng.integers(0, 3, size=rows.size)
    arcs: list[tuple[int, int]] = []
    for i, j, o in zip(rows.tolist(), cols.tolist(), orientation.tolist(), strict=True):
        if o in (0, 2):
            arcs.append((i, j))
        if o in (1, 2):
            arcs.append((j, i))
    logger.debug(f"🕸️ ER graph n={n} p={p}: {rows.size} edges, {len(arcs)} arcs")
    return DirectedGraph.from_arcs(n, arcs)


def _draw_targets(repeated: list[int], m: int, rng: np.random.Generator) -> list[int]:
    targets: set[int] = set()
    while len(targets) < m:
        targets.add(repeated[int(rng.integers(len(repeated)))])
    return sorted(targets)


def generate_ba(n: int, m: int, seed: int) -> DirectedGraph:
    """Barabasi-Albert graph stored as reciprocal arc pairs.

    Growth starts from ``m`` isolated seed nodes; the first arrival links to all of them and
    every later arrival attaches ``m`` edges with probability proportional to degree.
    """
    if not 1 <= m < n:
        raise ParameterError(f"BA graph needs 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    targets = list(range(m))
    repeated: list[int] = []
    arcs: list[tuple[int, int]] = []
    for source in range(m, n):
        for t in targets:
            arcs.extend(((source, t), (t, source)))
        repeated.extend(targets)
        repeated.extend([source] * m)
        targets = _draw_targets(repeated, m, rng)
    logger.debug(f"🕸️ BA graph n={n} m={m}: {len(arcs) // 2} edges")
    return DirectedGraph.from_arcs(n, arcs)


def _remove_keeping_weak_connectivity(
    g: DirectedGraph, target: int, rng: np.random.Generator
) -> tuple[set[tuple[int, int]], int]:
    undirected = nx.Graph()
    undirected.add_nodes_from(range(g.n_nodes))
    undirected.add_edges_from(g.undirected_edges())
    present = set(g.arcs)
    removed = 0
    for idx in rng.permutation(g.n_arcs).tolist():
        if removed >= target:
            break
        src, dst = g.arcs[idx]
        if (dst, src) in present:
            present.discard((src, dst))
            removed += 1
            continue
        undirected.remove_edge(src, dst)
        if nx.has_path(undirected, src, dst):
            present.discard((src, dst))
            removed += 1
        else:
            undirected.add_edge(src, dst)
    return present, removed


def prune_to_directed(g: DirectedGraph, remove_fraction: float, seed: int) -> DirectedGraph:
    """Remove up to ``remove_fraction`` of the arcs while keeping the graph weakly connected."""
    if not 0.0 <= remove_fraction < 1.0:
        raise ParameterError(f"remove_fraction must lie in [0, 1), got {remove_fraction}")
    if not g.is_weakly_connected():
        raise PreconditionError("Pruning requires a weakly connected graph")
    target = round(remove_fraction * g.n_arcs)
    if target == 0:
        return g
    present, removed = _remove_keeping_weak_connectivity(g, target, np.random.default_rng(seed))
    logger.debug(f"✂️ Pruned {removed}/{target} arcs, {len(present)} remain")
    return DirectedGraph.from_arcs(g.n_nodes, present)


def perturb_links(
    g: DirectedGraph,
    fraction: float,
    mode: Literal["add", "remove"],
    seed: int,
    max_retries: int = 10,
) -> DirectedGraph:
    """Insert spurious arcs or delete existing ones, ``round(fraction * |arcs|)`` of them."""
    if not 0.0 <= fraction <= 0.5:
        raise ParameterError(f"Perturbation fraction must lie in [0, 0.5], got {fraction}")
    if mode not in ("add", "remove"):
        raise ParameterError(f"Unknown perturbation mode {mode!r}")
    count = round(fraction * g.n_arcs)
    if count == 0:
        return g
    rng = np.random.default_rng(seed)

    if mode == "add":
        present = set(g.arcs)
        absent = [(s, d) for s in range(g.n_nodes) for d in range(g.n_nodes) if s != d and (s, d) not in present]
        if count > len(absent):
            raise RetriesExhaustedError(f"Cannot add {count} arcs, only {len(absent)} are absent")
        picks = rng.choice(len(absent), size=count, replace=False)
        logger.debug(f"➕ Adding {count} spurious arcs")
        return DirectedGraph.from_arcs(g.n_nodes, [*g.arcs, *(absent[k] for k in sorted(picks.tolist()))])

    if not g.is_weakly_connected():
        raise PreconditionError("Link removal requires a weakly connected graph")
    for attempt in range(max_retries):
        present, removed = _remove_keeping_weak_connectivity(g, count, rng)
        if removed == count:
            logger.debug(f"➖ Removed {count} arcs (attempt {attempt + 1})")
            return DirectedGraph.from_arcs(g.n_nodes, present)
    raise RetriesExhaustedError(f"Could not remove {count} arcs without breaking weak connectivity")


def save_edge_list(g: DirectedGraph, path: Path) -> None:
    """Write ``src dst`` lines, 0-based, with a ``# nodes N`` header comment."""
    lines = [f"# nodes {g.n_nodes}", *(f"{s} {d}" for s, d in g.arcs)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_edge_list(path: Path, n_nodes: int | None = None) -> DirectedGraph:
    """Read an edge list written by :func:`save_edge_list` (or any ``src dst`` file)."""
    arcs: list[tuple[int, int]] = []
    declared: int | None = None
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if len(fields) == 2 and fields[0] == "nodes":
                declared = int(fields[1])
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParameterError(f"Malformed edge-list line: {raw!r}")
        arcs.append((int(fields[0]), int(fields[1])))
    size = n_nodes or declared or (max(max(a) for a in arcs) + 1 if arcs else 1)
    return DirectedGraph.from_arcs(size, arcs)
