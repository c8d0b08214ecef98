"""
Expression language: parsing, exact derivatives, evaluation.
"""
import math

import numpy as np
import pytest

from errors import DimensionError, EvaluationError, ExprSyntaxError, UnknownIdentifierError
from expr import differentiate, evaluate, parse, to_source

XY = ("x", "y")
XYZ = ("x", "y", "z")


def test_polynomial_evaluates():
    assert evaluate(parse("x^2+y^2", XY), (1.0, 2.0)) == 5.0


def test_constant_zero_is_zero_everywhere():
    e = parse("0", XY)
    assert e.is_zero()
    assert evaluate(e, (3.0, -7.0)) == 0.0


def test_unbalanced_parenthesis_reports_offset():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x*(", XY)
    assert err.value.offset == 3


def test_unexpected_character_reports_offset():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x + $y", XY)
    assert err.value.offset == 4


def test_unknown_identifier_names_the_symbol():
    with pytest.raises(UnknownIdentifierError) as err:
        parse("x + w", XY)
    assert err.value.name == "w"
    assert err.value.offset == 4


def test_unknown_function_is_rejected():
    with pytest.raises(UnknownIdentifierError):
        parse("tan(x)", XY)


def test_implicit_multiplication_is_a_syntax_error():
    with pytest.raises(ExprSyntaxError):
        parse("2x", XY)


def test_power_binds_tighter_than_unary_minus():
    assert evaluate(parse("-x^2", XY), (3.0, 0.0)) == -9.0
    assert evaluate(parse("(-x)^2", XY), (3.0, 0.0)) == 9.0


def test_negative_integer_exponent():
    assert evaluate(parse("x^-2", XY), (2.0, 0.0)) == pytest.approx(0.25)


def test_power_rule():
    d = differentiate(parse("x^2+y^2", XY), 0)
    assert evaluate(d, (1.5, 7.0)) == pytest.approx(3.0)


def test_derivative_of_independent_coordinate_is_zero():
    assert differentiate(parse("x", XY), 1).is_zero()


def test_product_with_sine_matches_central_difference():
    e = parse("x*sin(y)", XY)
    p = np.array([2.0, math.pi / 2])
    exact = evaluate(differentiate(e, 0), p)
    h = 1e-5
    fd = (evaluate(e, p + [h, 0.0]) - evaluate(e, p - [h, 0.0])) / (2 * h)
    assert exact == pytest.approx(1.0)
    assert exact == pytest.approx(fd, rel=1e-6)


def test_division_by_zero_is_an_error():
    with pytest.raises(EvaluationError):
        evaluate(parse("1/x", ("x",)), (0.0,))


def test_twisted_coefficient_value():
    assert evaluate(parse("4*x/(x^2+y^2)^2", XY), (1.0, 0.0)) == pytest.approx(4.0)


def test_quotient_rule_at_a_point():
    d = differentiate(parse("x/(1 + y^2)", XY), 1)
    # d/dy x/(1+y^2) = -2xy/(1+y^2)^2
    assert evaluate(d, (3.0, 1.0)) == pytest.approx(-1.5)


def test_exp_and_cos_derivatives():
    e = parse("exp(2*x) + cos(y)", XY)
    assert evaluate(differentiate(e, 0), (0.0, 0.0)) == pytest.approx(2.0)
    assert evaluate(differentiate(e, 1), (0.0, math.pi / 2)) == pytest.approx(-1.0)


def _random_polynomial(rng) -> str:
    terms = []
    for _ in range(rng.integers(2, 6)):
        c = round(float(rng.uniform(-2, 2)), 3)
        powers = rng.integers(0, 4, size=3)
        factors = [f"{name}^{k}" for name, k in zip(XYZ, powers) if k]
        terms.append("*".join([f"({c})"] + factors))
    return " + ".join(terms)


def test_random_polynomial_derivatives_match_central_differences(rng):
    h = 1e-5
    for _ in range(25):
        e = parse(_random_polynomial(rng), XYZ)
        p = rng.uniform(-1.0, 1.0, size=3)
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            fd = (evaluate(e, p + step) - evaluate(e, p - step)) / (2 * h)
            exact = evaluate(differentiate(e, k), p)
            assert abs(exact - fd) <= 1e-6 * max(1.0, abs(exact)), (to_source(e, XYZ), k)


@pytest.mark.parametrize("src", [
    "x^2+y^2",
    "x - (y - z)",
    "-x^2 / (1 + exp(-y))",
    "(x^2)^3 - 2.5e-3*z",
    "sin(x*y)^2 + cos(-z)",
    "x^-2 * (y + 1)",
])
def test_printed_source_parses_back_to_the_same_tree(src):
    e = parse(src, XYZ)
    assert parse(to_source(e, XYZ), XYZ) == e


def test_vectorized_evaluation_over_stacked_points():
    from expr import compile_exprs

    e = parse("x*y", XY)
    values = compile_exprs((e,))(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    np.testing.assert_allclose(values[0], [4.0, 10.0, 18.0])


@pytest.mark.parametrize("src, offset", [
    ("exp(1000)", 0),
    ("10^400", 2),
    ("1e400", 0),
    ("x + 1e300*1e300", 9),
    ("exp(1000)*x", 0),
])
def test_constants_out_of_range_are_syntax_errors(src, offset):
    with pytest.raises(ExprSyntaxError, match="out of range") as err:
        parse(src, XY)
    assert err.value.offset == offset


def test_long_sums_and_products_compile():
    n = 300
    total = parse(" + ".join(f"{k}*x" for k in range(1, n + 1)), XY)
    assert evaluate(total, (1.0, 0.0)) == n * (n + 1) / 2
    assert evaluate(differentiate(total, 0), (0.0, 0.0)) == n * (n + 1) / 2
    assert parse(to_source(total, XY), XY) == total
    product = parse("*".join(["x"] * n + ["y"]), XY)
    assert evaluate(product, (1.0, -2.0)) == -2.0
    alternating = parse(" - ".join(["x", "y"] * (n // 2)), XY)
    assert evaluate(alternating, (1.0, 1.0)) == 2.0 - n


def test_deeply_nested_parentheses_are_a_syntax_error():
    with pytest.raises(ExprSyntaxError, match="nested too deeply"):
        parse("(" * 400 + "x" + ")" * 400, XY)


def test_evaluation_with_a_chart_dimension_rejects_other_sizes():
    e = parse("x*y", XY)
    assert evaluate(e, (2.0, 3.0), dimension=2) == 6.0
    with pytest.raises(DimensionError):
        evaluate(e, (2.0, 3.0, 4.0), dimension=2)
    with pytest.raises(DimensionError):
        evaluate(e, (2.0,))
