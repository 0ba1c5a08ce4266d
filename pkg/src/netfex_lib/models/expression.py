"""Finite-expression binary trees: operator sets, templates and parameterized expressions."""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field
from functools import cached_property
from netfex_lib.exceptions import ParameterError
from typing import Literal

UNARY_OPERATORS: tuple[str, ...] = ("0", "1", "id", "square", "cube", "quartic", "exp", "sin", "cos", "tanh", "sigmoid")
BINARY_OPERATORS: tuple[str, ...] = ("add", "sub", "mul")


@dataclass(frozen=True)
class OperatorSet:
    """Ordered unary and binary operator lists; the order fixes the controller output layout."""

    unary: tuple[str, ...] = UNARY_OPERATORS
    binary: tuple[str, ...] = BINARY_OPERATORS

    def __post_init__(self) -> None:
        object.__setattr__(self, "unary", tuple(self.unary))
        object.__setattr__(self, "binary", tuple(self.binary))
        for name, ops, allowed in (("unary", self.unary, UNARY_OPERATORS), ("binary", self.binary, BINARY_OPERATORS)):
            if not ops:
                raise ParameterError(f"The {name} operator list must not be empty")
            if len(set(ops)) != len(ops):
                raise ParameterError(f"Duplicate {name} operators in {ops}")
            unknown = [op for op in ops if op not in allowed]
            if unknown:
                raise ParameterError(f"Unknown {name} operators: {', '.join(unknown)}")

    def for_arity(self, arity: Literal["unary", "binary"]) -> tuple[str, ...]:
        return self.unary if arity == "unary" else self.binary


@dataclass(frozen=True)
class TemplateNode:
    index: int
    arity: Literal["unary", "binary"]
    children: tuple[int, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class TreeTemplate:
    """Preorder node layout of a depth-``L`` tree.

    Depth 1 is a single unary leaf; depth ``L`` is a unary root over a binary node whose two
    children are depth ``L - 1`` templates. Every unary node owns ``alpha`` weights (one per
    input at leaves, a scalar elsewhere) followed by a bias ``beta``.
    """

    depth: int
    input_dim: int
    nodes: tuple[TemplateNode, ...]

    @cached_property
    def unary_nodes(self) -> tuple[int, ...]:
        return tuple(n.index for n in self.nodes if n.arity == "unary")

    @cached_property
    def binary_nodes(self) -> tuple[int, ...]:
        return tuple(n.index for n in self.nodes if n.arity == "binary")

    @property
    def n_unary(self) -> int:
        return len(self.unary_nodes)

    @property
    def n_binary(self) -> int:
        return len(self.binary_nodes)

    @cached_property
    def param_layout(self) -> dict[int, tuple[int, int]]:
        """``node index -> (offset, n_alpha)``; the bias sits at ``offset + n_alpha``."""
        layout: dict[int, tuple[int, int]] = {}
        offset = 0
        for idx in self.unary_nodes:
            n_alpha = self.input_dim if self.nodes[idx].is_leaf else 1
            layout[idx] = (offset, n_alpha)
            offset += n_alpha + 1
        return layout

    @cached_property
    def n_params(self) -> int:
        return sum(n_alpha + 1 for _, n_alpha in self.param_layout.values())

    @cached_property
    def alpha_mask(self) -> np.ndarray:
        """True for scale entries of ``theta``, False for biases."""
        mask = np.zeros(self.n_params, dtype=bool)
        for offset, n_alpha in self.param_layout.values():
            mask[offset : offset + n_alpha] = True
        return mask


@dataclass(frozen=True, eq=False)
class Expression:
    """A template with one operator per node (preorder) and its parameter vector."""

    template: TreeTemplate
    operators: OperatorSet
    sequence: tuple[int, ...]
    theta: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequence", tuple(int(s) for s in self.sequence))
        if len(self.sequence) != len(self.template.nodes):
            raise ParameterError(
                f"Operator sequence has {len(self.sequence)} entries, template has {len(self.template.nodes)} nodes"
            )
        for node, choice in zip(self.template.nodes, self.sequence, strict=True):
            if not 0 <= choice < len(self.operators.for_arity(node.arity)):
                raise ParameterError(f"Operator index {choice} invalid for {node.arity} node {node.index}")
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != self.template.n_params:
            raise ParameterError(f"theta has {theta.size} entries, template needs {self.template.n_params}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def op_name(self, node_index: int) -> str:
        node = self.template.nodes[node_index]
        return self.operators.for_arity(node.arity)[self.sequence[node_index]]

    @property
    def op_names(self) -> tuple[str, ...]:
        return tuple(self.op_name(n.index) for n in self.template.nodes)

    def with_theta(self, theta: np.ndarray) -> Expression:
        return Expression(self.template, self.operators, self.sequence, theta)
