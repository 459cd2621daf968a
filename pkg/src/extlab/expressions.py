"""Tiny expression language for config-level functions.

Grammar: real literals, the coordinate names x1..xn, the norm symbol r,
abs(), unary sign, and the operators + - * / **.  Perturbation component
expressions additionally see the time variable t.  Parsed through the ast
module with a strict whitelist, then compiled to a plain code object, so
evaluation costs one eval() of arithmetic with no attribute access and no
builtins beyond abs.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ExpressionError

__all__ = ["compile_scalar_field", "compile_time_field"]

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def _validate(node: ast.AST, names: set[str], src: str) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, names, src)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} is not a real number")
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ExpressionError(
                f"unknown name {node.id!r} in {src!r} (allowed: {sorted(names)})"
            )
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _validate(node.left, names, src)
        _validate(node.right, names, src)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _ALLOWED_UNARY):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _validate(node.operand, names, src)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id == "abs"):
            raise ExpressionError("only the abs() call is allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("abs() takes exactly one positional argument")
        _validate(node.args[0], names, src)
    else:
        raise ExpressionError(f"construct {type(node).__name__} not allowed in {src!r}")


def _compile(src: str, names: set[str]):
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from None
    _validate(tree, names, src)
    return compile(tree, "<expression>", "eval")


def compile_scalar_field(src: str, n: int) -> Callable[[np.ndarray], float]:
    """Compile an expression of x1..xn and r (= |x|) to a callable of x."""
    names = {f"x{i + 1}" for i in range(n)} | {"r"}
    code = _compile(src, names)

    def evaluator(x: np.ndarray) -> float:
        env = {f"x{i + 1}": float(x[i]) for i in range(n)}
        env["r"] = float(np.linalg.norm(x))
        env["abs"] = abs
        return float(eval(code, {"__builtins__": {}}, env))

    evaluator.source = src  # type: ignore[attr-defined]
    return evaluator


def compile_time_field(srcs: list[str], n: int) -> Callable[[float, np.ndarray], np.ndarray]:
    """Compile component expressions of t, x1..xn, r into a vector field f(t, x)."""
    if len(srcs) != n:
        raise ExpressionError(f"need {n} component expressions, got {len(srcs)}")
    names = {f"x{i + 1}" for i in range(n)} | {"r", "t"}
    codes = [_compile(s, names) for s in srcs]

    def evaluator(t: float, x: np.ndarray) -> np.ndarray:
        env = {f"x{i + 1}": float(x[i]) for i in range(n)}
        env["r"] = float(np.linalg.norm(x))
        env["t"] = float(t)
        env["abs"] = abs
        return np.array([eval(c, {"__builtins__": {}}, env) for c in codes])

    evaluator.source = list(srcs)  # type: ignore[attr-defined]
    return evaluator
