"""Directed network topology."""

from __future__ import annotations

import networkx as nx
import numpy as np
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from netfex_lib.exceptions import ParameterError


@dataclass(frozen=True)
class DirectedGraph:
    """Immutable directed graph on nodes ``0..n_nodes-1``.

    An arc ``(j, i)`` means node ``j`` feeds node ``i``: ``A[i, j] = 1`` and ``j`` is an
    in-neighbor of ``i``. Arcs are kept as a sorted edge list; per-node in/out indices
    are derived lazily.
    """

    n_nodes: int
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise ParameterError(f"Graph needs at least one node, got {self.n_nodes}")
        arcs = tuple(sorted((int(s), int(d)) for s, d in self.arcs))
        for src, dst in arcs:
            if src == dst:
                raise ParameterError(f"Self-loop on node {src} is not allowed")
            if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
                raise ParameterError(f"Arc ({src}, {dst}) outside [0, {self.n_nodes})")
        if len(set(arcs)) != len(arcs):
            raise ParameterError("Duplicate arcs are not allowed")
        object.__setattr__(self, "arcs", arcs)

    @classmethod
    def from_arcs(cls, n_nodes: int, arcs: Iterable[Sequence[int]]) -> DirectedGraph:
        """Build a graph from any iterable of ``(src, dst)`` pairs."""
        return cls(n_nodes=n_nodes, arcs=tuple((int(a[0]), int(a[1])) for a in arcs))

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @cached_property
    def src(self) -> np.ndarray:
        """Source node of every arc, aligned with ``arcs``."""
        return np.fromiter((a[0] for a in self.arcs), dtype=np.int64, count=self.n_arcs)

    @cached_property
    def dst(self) -> np.ndarray:
        """Destination node of every arc, aligned with ``arcs``."""
        return np.fromiter((a[1] for a in self.arcs), dtype=np.int64, count=self.n_arcs)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes).astype(np.int64)

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes).astype(np.int64)

    @cached_property
    def _in_index(self) -> tuple[np.ndarray, ...]:
        order = np.argsort(self.dst, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(self.in_degree)])
        srcs = self.src[order]
        return tuple(srcs[bounds[i] : bounds[i + 1]] for i in range(self.n_nodes))

    def in_neighbors(self, node: int) -> np.ndarray:
        """Nodes ``j`` with an arc ``j -> node``."""
        return self._in_index[node]

    def adjacency(self) -> np.ndarray:
        """Dense ``A`` with ``A[i, j] = 1`` when ``j -> i``."""
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        a[self.dst, self.src] = 1.0
        return a

    def undirected_edges(self) -> set[tuple[int, int]]:
        """Unordered node pairs joined by at least one arc, as ``(min, max)``."""
        return {(min(s, d), max(s, d)) for s, d in self.arcs}

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n_nodes))
        g.add_edges_from(self.arcs)
        return g

    def is_weakly_connected(self) -> bool:
        return nx.is_weakly_connected(self.to_networkx())

    def induced_subgraph(self, nodes: Sequence[int]) -> DirectedGraph:
        """Subgraph on ``nodes``, relabelled ``0..len(nodes)-1`` in the given order."""
        relabel = {int(n): k for k, n in enumerate(nodes)}
        if len(relabel) != len(nodes):
            raise ParameterError("Induced subgraph nodes must be distinct")
        arcs = ((relabel[s], relabel[d]) for s, d in self.arcs if s in relabel and d in relabel)
        return DirectedGraph.from_arcs(len(relabel), arcs)
