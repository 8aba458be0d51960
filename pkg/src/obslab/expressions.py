"""Tiny whitelisted expression evaluator for coefficient profiles.

Config files describe coefficients as strings over x, e.g. "0.1*sin(2*x)"
or "x*(pi - x)**2".  Only arithmetic, powers, and {sin, cos, exp} are
admitted; anything else is rejected at parse time.
"""

from __future__ import annotations

import ast
import math

import numpy as np

_ALLOWED_CALLS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_ALLOWED_NAMES = {"pi": math.pi, "e": math.e}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    """Coefficient expression uses something outside the whitelist."""


def _check(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_CALLS):
            raise ExpressionError(f"call to {ast.dump(node.func)} not allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("functions take exactly one positional argument")
        _check(node.args[0])
    elif isinstance(node, ast.Name):
        if node.id != "x" and node.id not in _ALLOWED_NAMES:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"constant {node.value!r} not allowed")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def parse_expression(expr: str):
    """Compile an expression string into a callable of the node array x."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {expr!r}: {exc}") from exc
    _check(tree)
    code = compile(tree, "<coefficient>", "eval")
    env = dict(_ALLOWED_CALLS) | _ALLOWED_NAMES

    def fn(x):
        return np.asarray(eval(code, {"__builtins__": {}}, env | {"x": x}), dtype=float) * np.ones_like(x)

    return fn
