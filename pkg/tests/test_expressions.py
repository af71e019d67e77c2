import numpy as np
import pytest

from beamplate.expressions import (
    Expression,
    ExpressionError,
    compile_sym_matrix,
    compile_vector,
    is_zero_vector,
)


def test_basic_arithmetic():
    f = Expression("1 + 2*x1 - x2/2 + x3**2")
    assert f(1.0, 2.0, 3.0) == pytest.approx(1 + 2 - 1 + 9)


def test_power_with_caret_not_supported():
    with pytest.raises((ExpressionError, SyntaxError)):
        Expression("x1^2")


def test_functions_and_constants():
    f = Expression("sin(pi*x1) + exp(-x3) + sqrt(abs(x2))")
    assert f(0.5, 4.0, 0.0) == pytest.approx(1.0 + 1.0 + 2.0)


def test_vectorized_evaluation():
    f = Expression("x1*x2 + cos(x3)")
    x = np.linspace(0, 1, 7)
    out = f(x, 2 * x, 0 * x)
    assert out.shape == x.shape
    assert np.allclose(out, 2 * x**2 + 1.0)


def test_constant_expression_broadcasts():
    f = Expression("3.5")
    out = f(np.zeros(5), np.zeros(5), np.zeros(5))
    assert out.shape == (5,)
    assert np.all(out == 3.5)


def test_rejects_unknown_names():
    with pytest.raises(ExpressionError):
        Expression("y + 1")


def test_rejects_calls_outside_whitelist():
    with pytest.raises(ExpressionError):
        Expression("__import__('os')")
    with pytest.raises(ExpressionError):
        Expression("open('x')")


def test_rejects_attribute_access():
    with pytest.raises(ExpressionError):
        Expression("x1.real")


def test_compile_vector_defaults_to_zero():
    v = compile_vector(None)
    assert is_zero_vector(v)
    assert all(f(1.0, 1.0, 1.0) == 0.0 for f in v)


def test_compile_vector_length_check():
    with pytest.raises(ExpressionError):
        compile_vector(["1", "2"])


def test_compile_sym_matrix_voigt_order():
    m = compile_sym_matrix(["1", "2", "3", "4", "5", "6"])
    vals = [f(0, 0, 0) for f in m]
    assert vals == [1, 2, 3, 4, 5, 6]


def test_numbers_accepted_as_components():
    v = compile_vector([1, "0", 2.5])
    assert v[0](0, 0, 0) == 1.0
    assert v[2](0, 0, 0) == 2.5
