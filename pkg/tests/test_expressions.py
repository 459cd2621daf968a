"""Whitelisted expression compiler for config-level functions."""

import numpy as np
import pytest

from extlab.errors import ExpressionError
from extlab.expressions import compile_scalar_field, compile_time_field


def test_scalar_field_with_norm_symbol():
    f = compile_scalar_field("2.0 / r", 2)
    assert f(np.array([3.0, 4.0])) == pytest.approx(0.4, rel=1e-14)


def test_scalar_field_with_coordinates():
    f = compile_scalar_field("1.0 / (abs(x1) + x2**2)", 2)
    assert f(np.array([-2.0, 3.0])) == pytest.approx(1.0 / 11.0, rel=1e-14)


def test_scalar_field_arithmetic():
    f = compile_scalar_field("(x1 - x2) * (x1 + x2) / r**3", 2)
    x = np.array([2.0, 1.0])
    assert f(x) == pytest.approx(3.0 / 5.0 ** 1.5, rel=1e-13)


def test_time_field_vector():
    f = compile_time_field(["t * x1", "0.5 - t"], 2)
    out = f(2.0, np.array([3.0, 7.0]))
    assert np.allclose(out, [6.0, -1.5])


def test_time_variable_only_in_time_fields():
    with pytest.raises(ExpressionError):
        compile_scalar_field("t + x1", 2)


def test_unknown_coordinate_rejected():
    with pytest.raises(ExpressionError):
        compile_scalar_field("x3 + 1.0", 2)


@pytest.mark.parametrize(
    "src",
    [
        "__import__('os')",
        "x1.real",
        "(lambda: 1)()",
        "x1 if x2 else 0.0",
        "[1.0, 2.0]",
        "x1 < x2",
        "abs(x1, x2)",
        "sin(x1)",
        "1j * x1",
    ],
)
def test_disallowed_constructs(src):
    with pytest.raises(ExpressionError):
        compile_scalar_field(src, 2)


def test_syntax_error_is_wrapped():
    with pytest.raises(ExpressionError):
        compile_scalar_field("1.0 +", 2)


def test_time_field_requires_one_expression_per_component():
    with pytest.raises(ExpressionError):
        compile_time_field(["t", "t", "t"], 2)
