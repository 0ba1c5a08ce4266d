"""Benchmark systems: parameters, horizons, tree depths and their known expression trees."""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field
from netfex_lib.exceptions import ParameterError
from netfex_lib.models.expression import Expression, OperatorSet
from netfex_lib.models.series import DynamicsKind, DynamicsSpec, Normalization
from netfex_lib.services.expressions import (
    build_template,
    default_variable_names,
    expression_from_names,
    to_symbolic,
)

TermMap = dict[str, float]


@dataclass(frozen=True)
class KnownTree:
    """Preorder operator names and parameters of a tree that reproduces one true term."""

    depth: int
    ops: tuple[str, ...]
    theta: tuple[float, ...]


@dataclass(frozen=True)
class KnownDimension:
    f: KnownTree
    g: KnownTree


@dataclass(frozen=True)
class Preset:
    name: str
    kind: DynamicsKind
    d: int
    params: dict[str, float]
    normalization: Normalization
    T: float
    dt: float
    depth_f: int
    depth_g: int
    known: tuple[KnownDimension, ...]
    published: tuple[tuple[TermMap, TermMap], ...] = field(default=())
    omega_mean: float = 1.0
    omega_std: float = 0.1

    def dynamics(self, n_nodes: int, seed: int = 0) -> DynamicsSpec:
        """Dynamics for ``n_nodes`` nodes; Rossler frequencies are drawn once from ``seed``."""
        omega = None
        if self.kind == "Rossler":
            omega = np.random.default_rng(seed).normal(self.omega_mean, self.omega_std, size=n_nodes)
        return DynamicsSpec(self.kind, self.d, dict(self.params), self.normalization, omega=omega)


_ZERO_G3 = KnownTree(1, ("0",), (0.0,) * 7)
_ZERO_G2 = KnownTree(1, ("0",), (0.0,) * 5)

HR = Preset(
    name="hr",
    kind="HR",
    d=3,
    params={
        "a": 1.0,
        "b": 3.0,
        "c": 1.0,
        "u": 5.0,
        "s": 4.0,
        "r": 0.004,
        "x0": -1.6,
        "epsilon": 0.15,
        "V_syn": 2.0,
        "I_ext": 3.24,
    },
    normalization="none",
    T=500.0,
    dt=0.01,
    depth_f=4,
    depth_g=4,
    known=(
        KnownDimension(
            f=KnownTree(
                3,
                ("id", "add", "id", "add", "id", "cube", "id", "add", "square", "0"),
                (1, 0, 1, 0, 0, 1, -1, 3.24, -1, 0, 0, 0, 1, 0, 3, 0, 0, 0, 0, 0, 0, 0),
            ),
            g=KnownTree(
                2,
                ("id", "mul", "id", "sigmoid"),
                (1, 0, -0.15, 0, 0, 0, 0, 0, 0.3, 0, 0, 0, 1, 0, 0, 0),
            ),
        ),
        KnownDimension(
            f=KnownTree(2, ("id", "add", "id", "square"), (1, 0, 0, -1, 0, 1, -5, 0, 0, 0)),
            g=_ZERO_G3,
        ),
        KnownDimension(f=KnownTree(1, ("id",), (0.016, 0, -0.004, 0.0256)), g=_ZERO_G3),
    ),
    published=(
        (
            {"1": 3.2392, "x1^2": 2.9758, "x2": 0.9961, "x3": -0.9917, "x1^3": -1.0014},
            {"sigmoid(x_j1)": 0.2985, "x_i1*sigmoid(x_j1)": -0.1477},
        ),
        ({"1": 1.0004, "x1^2": -5.0001, "x2": -1.0001}, {}),
        ({"1": 0.0255, "x1": 0.0182, "x3": -0.0050}, {}),
    ),
)

FHN = Preset(
    name="fhn",
    kind="FHN",
    d=2,
    params={"a": 0.28, "b": 0.5, "c": -0.04, "epsilon": 1.0},
    normalization="in_degree",
    T=300.0,
    dt=0.01,
    depth_f=3,
    depth_g=3,
    known=(
        KnownDimension(
            f=KnownTree(2, ("id", "add", "id", "cube"), (1, 0, 1, -1, 0, -1, 0, 0)),
            g=KnownTree(1, ("id",), (1, 0, -1, 0, 0)),
        ),
        KnownDimension(f=KnownTree(1, ("id",), (0.5, -0.04, 0.28)), g=_ZERO_G2),
    ),
    published=(
        ({"x1": 0.9942, "x2": -0.9999, "x1^3": -0.9998}, {"x_i1": 1.0022, "x_j1": -1.0022}),
        ({"1": 0.2801, "x1": 0.5, "x2": -0.04}, {}),
    ),
)

ROSSLER = Preset(
    name="rossler",
    kind="Rossler",
    d=3,
    params={"a": 0.2, "b": 0.2, "c": -5.7, "epsilon": 0.15},
    normalization="none",
    T=100.0,
    dt=0.01,
    depth_f=3,
    depth_g=3,
    known=(
        KnownDimension(
            f=KnownTree(1, ("id",), (0, -1, -1, 0)),
            g=KnownTree(1, ("id",), (-0.15, 0, 0, 0.15, 0, 0, 0)),
        ),
        KnownDimension(f=KnownTree(1, ("id",), (1, 0.2, 0, 0)), g=_ZERO_G3),
        KnownDimension(
            f=KnownTree(2, ("id", "mul", "id", "id"), (1, 0.2, 0, 0, 1, 0, 1, 0, 0, -5.7)),
            g=_ZERO_G3,
        ),
    ),
    published=(
        ({"x2": -1.0093, "x3": -1.0027}, {"x_i1": -0.1491, "x_j1": 0.1491}),
        ({"x1": 0.9909, "x2": 0.2030}, {}),
        ({"1": 0.1967, "x3": -5.6653, "x1*x3": 0.9987}, {}),
    ),
)

PRESETS: dict[str, Preset] = {p.name: p for p in (HR, FHN, ROSSLER)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ParameterError(f"Unknown preset {name!r}; choose one of {', '.join(PRESETS)}") from None


def known_tree_expression(tree: KnownTree, input_dim: int, operators: OperatorSet | None = None) -> Expression:
    template = build_template(tree.depth, input_dim)
    return expression_from_names(template, operators or OperatorSet(), tree.ops, tree.theta)


def known_expressions(preset: Preset, dim: int, operators: OperatorSet | None = None) -> tuple[Expression, Expression]:
    """True self and interaction trees of output dimension ``dim``."""
    if not 0 <= dim < preset.d:
        raise ParameterError(f"{preset.name} has no dimension {dim}")
    known = preset.known[dim]
    return (
        known_tree_expression(known.f, preset.d, operators),
        known_tree_expression(known.g, 2 * preset.d, operators),
    )


def truth_terms(preset: Preset) -> list[tuple[TermMap, TermMap]]:
    """Ground-truth term maps per dimension (shared Rossler frequency at its mean)."""
    out = []
    for dim in range(preset.d):
        f_expr, g_expr = known_expressions(preset, dim)
        out.append(
            (
                to_symbolic(f_expr, default_variable_names(preset.d)),
                to_symbolic(g_expr, default_variable_names(2 * preset.d, pair=True)),
            )
        )
    return out
