import numpy as np
import pytest

from epia.expr import ExprDomainError, ExprError, parse_coefficient_expr


def test_basic_evaluation():
    f = parse_coefficient_expr("sin(x1)*u1 + 0.5", ["x1", "u1"])
    assert f(0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_power():
    f = parse_coefficient_expr("1 + x1^2", ["x1"])
    assert f(2.0) == pytest.approx(5.0, abs=1e-15)


def test_unit_mass_density_integral():
    # oracle: closed form of int_0^1 e^u du = e - 1
    f = parse_coefficient_expr("exp(u1)/ (exp(1)-1)", ["u1"])
    x, w = np.polynomial.legendre.leggauss(20)
    u = 0.5 * (x + 1.0)
    integral = 0.5 * w @ f(u)
    assert integral == pytest.approx(1.0, abs=1e-14)


def test_vectorized_over_arrays():
    f = parse_coefficient_expr("x1*u1 - cos(x1)", ["x1", "u1"])
    x = np.linspace(-1, 1, 7)
    u = np.linspace(0, 1, 7)
    expected = x * u - np.cos(x)
    np.testing.assert_allclose(f(x, u), expected, rtol=1e-15)


def test_operator_precedence_and_unary():
    f = parse_coefficient_expr("-x1^2 + 2*3", ["x1"])
    assert f(2.0) == pytest.approx(2.0)
    g = parse_coefficient_expr("2^3^1", ["x1"])  # right associative: 2^(3^1)
    assert g(0.0) == pytest.approx(8.0)


def test_constants_and_functions():
    f = parse_coefficient_expr("sin(pi/2) + max(x1, 0) + min(x1, 0)", ["x1"])
    assert f(-3.0) == pytest.approx(1.0 - 3.0)
    g = parse_coefficient_expr("ln(e)", [])
    assert g() == pytest.approx(1.0)
    h = parse_coefficient_expr("sqrt(abs(x1))", ["x1"])
    assert h(-4.0) == pytest.approx(2.0)


def test_parse_error_reports_position():
    with pytest.raises(ExprError) as err:
        parse_coefficient_expr("sin(x1", ["x1"])
    assert err.value.position >= 0
    with pytest.raises(ExprError):
        parse_coefficient_expr("1 + * 2", [])


def test_unknown_variable_and_function():
    with pytest.raises(ExprError, match="unknown variable"):
        parse_coefficient_expr("x1 + y", ["x1"])
    with pytest.raises(ExprError, match="unknown function"):
        parse_coefficient_expr("sinh(x1)", ["x1"])
    with pytest.raises(ExprError, match="argument"):
        parse_coefficient_expr("min(x1)", ["x1"])


def test_domain_error_carries_point():
    f = parse_coefficient_expr("ln(x1)", ["x1"])
    with pytest.raises(ExprDomainError) as err:
        f(np.array([1.0, 2.0, -3.0]))
    assert err.value.point["x1"] == pytest.approx(-3.0)
    g = parse_coefficient_expr("1/x1", ["x1"])
    with pytest.raises(ExprDomainError):
        g(0.0)
    h = parse_coefficient_expr("x1^0.5", ["x1"])
    with pytest.raises(ExprDomainError):
        h(-1.0)


def test_negative_base_integer_power_ok():
    f = parse_coefficient_expr("x1^2", ["x1"])
    assert f(-3.0) == pytest.approx(9.0)


def test_evaluator_is_reusable_and_deterministic():
    f = parse_coefficient_expr("exp(x1) - x1^3/ 7", ["x1"])
    x = np.linspace(-2, 2, 11)
    first = f(x)
    second = f(x)
    np.testing.assert_array_equal(first, second)
