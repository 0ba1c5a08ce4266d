"""Building, evaluating, printing and sparsifying finite-expression trees."""

from __future__ import annotations

import logging
import numpy as np
import sympy
import torch
from collections.abc import Callable, Mapping, Sequence
from netfex_lib.exceptions import ExpressionOverflowError, ParameterError
from netfex_lib.models.expression import Expression, OperatorSet, TemplateNode, TreeTemplate
from typing import Any

logger = logging.getLogger(__name__)

MAX_DEPTH = 6
OVERFLOW_LIMIT = 1e30

_UNARY_TORCH: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "0": torch.zeros_like,
    "1": torch.ones_like,
    "id": lambda z: z,
    "square": lambda z: z**2,
    "cube": lambda z: z**3,
    "quartic": lambda z: z**4,
    "exp": torch.exp,
    "sin": torch.sin,
    "cos": torch.cos,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
}
_BINARY_TORCH: dict[str, Callable[[torch.Tensor, torch.Tensor], torch.Tensor]] = {
    "add": torch.add,
    "sub": torch.sub,
    "mul": torch.mul,
}

Sigmoid = sympy.Function("sigmoid")

_UNARY_SYMPY: dict[str, Callable[[sympy.Expr], sympy.Expr]] = {
    "0": lambda _: sympy.Integer(0),
    "1": lambda _: sympy.Integer(1),
    "id": lambda z: z,
    "square": lambda z: z**2,
    "cube": lambda z: z**3,
    "quartic": lambda z: z**4,
    "exp": sympy.exp,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tanh": sympy.tanh,
    "sigmoid": Sigmoid,
}
_BINARY_SYMPY: dict[str, Callable[[sympy.Expr, sympy.Expr], sympy.Expr]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
}


def build_template(depth: int, input_dim: int) -> TreeTemplate:
    """Preorder layout: a unary leaf at depth 1, otherwise unary -> binary -> two subtrees."""
    if depth < 1:
        raise ParameterError(f"Tree depth must be at least 1, got {depth}")
    if depth > MAX_DEPTH:
        raise ParameterError(f"Tree depth {depth} exceeds the size guard of {MAX_DEPTH}")
    if input_dim < 1:
        raise ParameterError(f"Input dimension must be at least 1, got {input_dim}")

    nodes: list[TemplateNode] = []

    def _grow(level: int) -> int:
        index = len(nodes)
        if level == 1:
            nodes.append(TemplateNode(index, "unary"))
            return index
        nodes.append(TemplateNode(index, "unary", (index + 1,)))
        nodes.append(TemplateNode(index + 1, "binary"))
        left = _grow(level - 1)
        right = _grow(level - 1)
        nodes[index + 1] = TemplateNode(index + 1, "binary", (left, right))
        return index

    _grow(depth)
    return TreeTemplate(depth=depth, input_dim=input_dim, nodes=tuple(nodes))


def random_theta(template: TreeTemplate, rng: np.random.Generator) -> np.ndarray:
    """Scales drawn from U[-0.5, 0.5], biases zero."""
    draws = rng.uniform(-0.5, 0.5, size=template.n_params)
    return np.where(template.alpha_mask, draws, 0.0)


def evaluate_tensor(expr: Expression, theta: torch.Tensor, x: torch.Tensor, guard: bool = True) -> torch.Tensor:
    """Differentiable evaluation over a batch of inputs ``x[..., input_dim]``.

    ``theta`` replaces ``expr.theta`` so that optimizers can track gradients through it.
    With ``guard`` set, a non-finite or oversized node value raises
    :class:`ExpressionOverflowError` with that node's preorder index.
    """
    template = expr.template
    if x.shape[-1] != template.input_dim:
        raise ParameterError(f"Input has {x.shape[-1]} features, expression expects {template.input_dim}")
    layout = template.param_layout

    def _node(index: int) -> torch.Tensor:
        node = template.nodes[index]
        name = expr.op_name(index)
        if node.arity == "binary":
            value = _BINARY_TORCH[name](_node(node.children[0]), _node(node.children[1]))
        else:
            offset, n_alpha = layout[index]
            alpha = theta[offset : offset + n_alpha]
            beta = theta[offset + n_alpha]
            if node.is_leaf:
                value = (_UNARY_TORCH[name](x) * alpha).sum(dim=-1) + beta
            else:
                value = alpha[0] * _UNARY_TORCH[name](_node(node.children[0])) + beta
        if guard:
            detached = value.detach()
            if not bool(torch.isfinite(detached).all()) or (detached.numel() and detached.abs().max() > OVERFLOW_LIMIT):
                raise ExpressionOverflowError(index)
        return value

    return _node(0)


def evaluate_batch(expr: Expression, x: np.ndarray) -> np.ndarray:
    """Evaluate on ``x[..., input_dim]`` without gradient tracking."""
    with torch.no_grad():
        theta = torch.as_tensor(expr.theta, dtype=torch.float64)
        inputs = torch.as_tensor(np.asarray(x, dtype=np.float64))
        return evaluate_tensor(expr, theta, inputs).numpy()


def evaluate(expr: Expression, x: Sequence[float] | np.ndarray) -> float:
    """Scalar value of the expression at a single input point."""
    point = np.asarray(x, dtype=np.float64)
    if point.shape != (expr.template.input_dim,):
        raise ParameterError(f"Expected an input of length {expr.template.input_dim}, got shape {point.shape}")
    return float(evaluate_batch(expr, point))


def default_variable_names(input_dim: int, pair: bool = False) -> list[str]:
    """``x1..xd`` for self trees, ``x_i1.. x_j1..`` for interaction trees over ``2d`` inputs."""
    if not pair:
        return [f"x{k + 1}" for k in range(input_dim)]
    if input_dim % 2:
        raise ParameterError(f"Interaction trees need an even input dimension, got {input_dim}")
    half = input_dim // 2
    return [f"x_i{k + 1}" for k in range(half)] + [f"x_j{k + 1}" for k in range(half)]


def _number(value: float) -> sympy.Float:
    return sympy.Float(float(value))


def to_sympy(expr: Expression, variable_names: Sequence[str] | None = None) -> sympy.Expr:
    """Unexpanded symbolic form; zero scales and biases are left out."""
    names = list(variable_names or default_variable_names(expr.template.input_dim))
    if len(names) != expr.template.input_dim:
        raise ParameterError(f"Need {expr.template.input_dim} variable names, got {len(names)}")
    symbols = [sympy.Symbol(name) for name in names]
    template = expr.template
    theta = expr.theta

    def _node(index: int) -> sympy.Expr:
        node = template.nodes[index]
        name = expr.op_name(index)
        if node.arity == "binary":
            return _BINARY_SYMPY[name](_node(node.children[0]), _node(node.children[1]))
        offset, n_alpha = template.param_layout[index]
        alpha = theta[offset : offset + n_alpha]
        beta = theta[offset + n_alpha]
        inputs = symbols if node.is_leaf else [_node(node.children[0])]
        value = sympy.Integer(0)
        for a, z in zip(alpha, inputs, strict=True):
            if a != 0.0:
                value += _number(a) * _UNARY_SYMPY[name](z)
        if beta != 0.0:
            value += _number(beta)
        return value

    return _node(0)


def _sort_key(base: sympy.Expr, order: Mapping[str, int]) -> tuple[int, int, str]:
    if isinstance(base, sympy.Symbol) and base.name in order:
        return (0, order[base.name], base.name)
    return (1, 0, sympy.sstr(base, full_prec=False))


def _canonical_term(monomial: sympy.Expr, order: Mapping[str, int]) -> tuple[str, int]:
    """Render a coefficient-free monomial as ``x1^2*x2*sin(...)`` plus its polynomial degree."""
    if monomial == 1:
        return "1", 0
    # exp(z) must stay an atom, so powers are read off explicit Pow factors only
    powers: dict[sympy.Expr, int] = {}
    for factor in sympy.Mul.make_args(monomial):
        if factor.is_Pow and factor.exp.is_Integer:
            base, exponent = factor.base, int(factor.exp)
        else:
            base, exponent = factor, 1
        powers[base] = powers.get(base, 0) + exponent
    parts = []
    for base in sorted(powers, key=lambda b: _sort_key(b, order)):
        exponent = powers[base]
        label = base.name if isinstance(base, sympy.Symbol) else sympy.sstr(base, full_prec=False)
        parts.append(label if exponent == 1 else f"{label}^{exponent}")
    return "*".join(parts), sum(powers.values())


def to_symbolic(expr: Expression, variable_names: Sequence[str] | None = None) -> dict[str, float]:
    """Expanded term map ``{canonical term: coefficient}``.

    Polynomial parts are fully expanded; transcendental subexpressions stay as opaque atoms
    such as ``sigmoid(x2)``. Zero coefficients are dropped and terms are ordered by
    degree, then by variable index.
    """
    names = list(variable_names or default_variable_names(expr.template.input_dim))
    order = {name: k for k, name in enumerate(names)}
    expanded = sympy.expand(to_sympy(expr, names))
    if expanded == 0:
        return {}
    collected: dict[str, tuple[int, float]] = {}
    for monomial, coefficient in expanded.as_coefficients_dict().items():
        value = float(coefficient)
        if value == 0.0:
            continue
        key, degree = _canonical_term(monomial, order)
        previous = collected.get(key, (degree, 0.0))[1]
        collected[key] = (degree, previous + value)
    ordered = sorted(collected.items(), key=lambda item: (item[1][0], item[0]))
    return {key: value for key, (_, value) in ordered if value != 0.0}


def terms_to_sympy(terms: Mapping[str, float]) -> sympy.Expr:
    total = sympy.Integer(0)
    for key, coefficient in terms.items():
        atom = sympy.sympify(key.replace("^", "**"), locals={"sigmoid": Sigmoid})
        total += _number(coefficient) * atom
    return total


def evaluate_terms(terms: Mapping[str, float], x: np.ndarray, variable_names: Sequence[str]) -> np.ndarray:
    """Evaluate a term map on ``x[..., len(variable_names)]``."""
    symbols = [sympy.Symbol(name) for name in variable_names]
    fn = sympy.lambdify(
        symbols,
        terms_to_sympy(terms),
        modules=[{"sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z))}, "numpy"],
    )
    x = np.asarray(x, dtype=np.float64)
    return np.broadcast_to(fn(*np.moveaxis(x, -1, 0)), x.shape[:-1]).astype(np.float64)


def format_terms(terms: Mapping[str, float], digits: int = 4) -> str:
    """Human-readable sum such as ``0.9942*x1 - 0.9998*x1^3``."""
    if not terms:
        return "0"
    out = ""
    for key, coefficient in terms.items():
        sign = "-" if coefficient < 0 else "+"
        body = f"{abs(coefficient):.{digits}f}" if key == "1" else f"{abs(coefficient):.{digits}f}*{key}"
        out += f"{sign} {body} " if out else f"{'-' if coefficient < 0 else ''}{body} "
    return out.strip()


def pretty(expr: Expression, variable_names: Sequence[str] | None = None) -> str:
    return sympy.sstr(to_sympy(expr, variable_names), full_prec=False)


def filter_coefficients(expr: Expression, tau: float) -> Expression:
    """Zero every parameter with ``|theta_i| < tau``."""
    if tau < 0:
        raise ParameterError(f"Filtering threshold must be non-negative, got {tau}")
    theta = np.array(expr.theta)
    theta[np.abs(theta) < tau] = 0.0
    return expr.with_theta(theta)


def expression_from_names(
    template: TreeTemplate, operators: OperatorSet, names: Sequence[str], theta: Sequence[float] | np.ndarray
) -> Expression:
    """Build an expression from preorder operator names instead of indices."""
    if len(names) != len(template.nodes):
        raise ParameterError(f"Got {len(names)} operator names for {len(template.nodes)} nodes")
    sequence = []
    for node, name in zip(template.nodes, names, strict=True):
        allowed = operators.for_arity(node.arity)
        if name not in allowed:
            raise ParameterError(f"Operator {name!r} not available for {node.arity} node {node.index}")
        sequence.append(allowed.index(name))
    return Expression(template, operators, tuple(sequence), np.asarray(theta, dtype=np.float64))


def expression_to_dict(expr: Expression, variable_names: Sequence[str] | None = None) -> dict[str, Any]:
    return {
        "depth": expr.template.depth,
        "input_dim": expr.template.input_dim,
        "unary": list(expr.operators.unary),
        "binary": list(expr.operators.binary),
        "operators": list(expr.op_names),
        "theta": [float(v) for v in expr.theta],
        "pretty": pretty(expr, variable_names),
    }


def expression_from_dict(payload: Mapping[str, Any]) -> Expression:
    template = build_template(int(payload["depth"]), int(payload["input_dim"]))
    operators = OperatorSet(tuple(payload["unary"]), tuple(payload["binary"]))
    return expression_from_names(template, operators, payload["operators"], payload["theta"])
