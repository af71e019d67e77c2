"""Tiny closed-form expression grammar for source terms.

Source components are given in study configs as strings over the physical
coordinates ``x1, x2, x3`` with ``+ - * / **``, parentheses, numeric
literals, ``pi``, and the functions ``sin, cos, tan, exp, log, sqrt, abs``.
Expressions compile to numpy-vectorized callables ``f(x1, x2, x3)``; they
are evaluated exactly at mapped quadrature points, so the scaling pipeline
introduces no interpolation error.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_CONSTS = {"pi": np.pi, "e": np.e}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    """Raised for source expressions outside the supported grammar."""


def _check(node):
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"unknown function in expression: {ast.dump(node)}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("functions take exactly one positional argument")
        _check(node.args[0])
    elif isinstance(node, ast.Name):
        if node.id not in ("x1", "x2", "x3") and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r} in expression")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    else:
        raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


class Expression:
    """A compiled scalar expression of the physical coordinates."""

    def __init__(self, text):
        if isinstance(text, (int, float)):
            text = repr(float(text))
        self.text = text
        tree = ast.parse(text, mode="eval")
        _check(tree)
        self._code = compile(tree, "<source-expression>", "eval")
        ns = dict(_FUNCS)
        ns.update(_CONSTS)
        self._ns = ns

    def __call__(self, x1, x2, x3):
        env = {"x1": x1, "x2": x2, "x3": x3}
        out = eval(self._code, {"__builtins__": {}}, {**self._ns, **env})
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x1)).copy() \
            if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def __repr__(self):
        return f"Expression({self.text!r})"


ZERO = Expression("0")


def compile_vector(spec):
    """Three-component vector of expressions (``None`` -> all zero)."""
    if spec is None:
        return (ZERO, ZERO, ZERO)
    if len(spec) != 3:
        raise ExpressionError("vector sources need exactly 3 components")
    return tuple(Expression(s) for s in spec)


def compile_sym_matrix(spec):
    """Symmetric 3x3 source in Voigt order (11, 22, 33, 12, 13, 23)."""
    if spec is None:
        return tuple([ZERO] * 6)
    if len(spec) != 6:
        raise ExpressionError("matrix sources need 6 Voigt components")
    return tuple(Expression(s) for s in spec)


def is_zero_vector(exprs):
    return all(e.text.strip() == "0" for e in exprs)
