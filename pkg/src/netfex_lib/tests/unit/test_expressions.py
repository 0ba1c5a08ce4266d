import math
import numpy as np
import pytest
from netfex_lib.exceptions import ExpressionOverflowError, ParameterError
from netfex_lib.models.expression import Expression, OperatorSet
from netfex_lib.services.expressions import (
    build_template,
    default_variable_names,
    evaluate,
    evaluate_batch,
    evaluate_terms,
    expression_from_dict,
    expression_from_names,
    expression_to_dict,
    filter_coefficients,
    format_terms,
    random_theta,
    to_symbolic,
)
from netfex_lib.services.presets import FHN, HR, known_expressions, truth_terms


def _expr(depth: int, input_dim: int, ops: list[str], theta: list[float]) -> Expression:
    return expression_from_names(build_template(depth, input_dim), OperatorSet(), ops, theta)


@pytest.mark.parametrize(("depth", "n_unary", "n_binary"), [(1, 1, 0), (2, 3, 1), (3, 7, 3), (4, 15, 7)])
def test_template_node_counts(depth: int, n_unary: int, n_binary: int):
    template = build_template(depth, 2)
    assert (template.n_unary, template.n_binary) == (n_unary, n_binary)


def test_template_preorder_layout():
    template = build_template(2, 3)
    assert [n.arity for n in template.nodes] == ["unary", "binary", "unary", "unary"]
    assert template.nodes[1].children == (2, 3)
    # root scale and bias, then two leaves with one scale per input plus a bias
    assert template.n_params == 2 + 4 + 4


@pytest.mark.parametrize("depth", [0, 7])
def test_template_depth_guard(depth: int):
    with pytest.raises(ParameterError):
        build_template(depth, 1)


def test_unknown_operator_rejected():
    with pytest.raises(ParameterError):
        OperatorSet(unary=("id", "log"))


def test_evaluate_sine_leaf():
    assert evaluate(_expr(1, 1, ["sin"], [2.0, 1.0]), [math.pi / 2]) == pytest.approx(3.0)


def test_constant_zero_operator_yields_bias():
    assert evaluate(_expr(1, 1, ["0"], [5.0, 0.7]), [3.0]) == pytest.approx(0.7)


def test_evaluate_depth_two_by_hand():
    expr = _expr(2, 1, ["square", "add", "id", "id"], [1, 0, 1, 0, 1, 0])
    assert evaluate(expr, [1.5]) == pytest.approx(9.0)


def test_overflow_names_the_node():
    with pytest.raises(ExpressionOverflowError) as info:
        evaluate(_expr(1, 1, ["exp"], [1000.0, 0.0]), [1.0])
    assert info.value.node_index == 0


def test_random_theta_zero_biases():
    template = build_template(3, 2)
    theta = random_theta(template, np.random.default_rng(0))
    assert np.all(theta[~template.alpha_mask] == 0.0)
    assert np.all(np.abs(theta[template.alpha_mask]) <= 0.5)


def test_symbolic_identity_leaf():
    assert to_symbolic(_expr(1, 2, ["id"], [1, 0, 0])) == {"x1": 1.0}


def test_symbolic_expands_sum_of_powers():
    terms = to_symbolic(_expr(2, 1, ["id", "add", "id", "cube"], [1, 0, 1, 0, -1, 0]))
    assert terms == {"x1": 1.0, "x1^3": -1.0}
    assert list(terms) == ["x1", "x1^3"]


def test_symbolic_keeps_transcendental_atoms():
    terms = to_symbolic(_expr(1, 2, ["sigmoid"], [0, 0.3, 0]))
    assert terms == {"sigmoid(x2)": pytest.approx(0.3)}


def test_symbolic_of_zero_expression_is_empty():
    assert to_symbolic(_expr(1, 2, ["0"], [1, 1, 0])) == {}


def test_fhn_truth_terms():
    (f1, g1), (f2, g2) = truth_terms(FHN)
    assert f1 == {"x1": 1.0, "x2": -1.0, "x1^3": -1.0}
    assert g1 == {"x_i1": 1.0, "x_j1": -1.0}
    assert f2 == pytest.approx({"1": 0.28, "x1": 0.5, "x2": -0.04})
    assert g2 == {}


def test_term_map_evaluates_like_the_tree():
    _, g_expr = known_expressions(HR, 0)
    names = default_variable_names(6, pair=True)
    x = np.random.default_rng(2).uniform(-2, 2, size=(50, 6))
    np.testing.assert_allclose(evaluate_terms(to_symbolic(g_expr, names), x, names), evaluate_batch(g_expr, x))


def test_filter_zeroes_small_parameters():
    expr = filter_coefficients(_expr(1, 1, ["id"], [0.005, 0.9]), 0.01)
    np.testing.assert_array_equal(expr.theta, [0.0, 0.9])


def test_filter_boundary_is_strict():
    expr = filter_coefficients(_expr(1, 1, ["id"], [-0.0099, 0.01]), 0.01)
    np.testing.assert_array_equal(expr.theta, [0.0, 0.01])


def test_filter_with_zero_threshold_is_identity():
    expr = _expr(1, 1, ["id"], [1e-9, -2.0])
    np.testing.assert_array_equal(filter_coefficients(expr, 0.0).theta, expr.theta)


def test_filter_rejects_negative_threshold():
    with pytest.raises(ParameterError):
        filter_coefficients(_expr(1, 1, ["id"], [1.0, 0.0]), -0.1)


def test_expression_theta_is_read_only():
    expr = _expr(1, 1, ["id"], [1.0, 0.0])
    with pytest.raises(ValueError, match="read-only"):
        expr.theta[0] = 2.0


def test_expression_dict_preserves_structure():
    f_expr, _ = known_expressions(HR, 0)
    payload = expression_to_dict(f_expr)
    restored = expression_from_dict(payload)
    assert restored.op_names == f_expr.op_names
    np.testing.assert_array_equal(restored.theta, f_expr.theta)
    assert "x1" in payload["pretty"]


def test_format_terms():
    assert format_terms({"x1": 0.9942, "x1^3": -0.9998}) == "0.9942*x1 - 0.9998*x1^3"
    assert format_terms({"1": -0.5, "x1": 2.0}) == "-0.5000 + 2.0000*x1"
    assert format_terms({}) == "0"
