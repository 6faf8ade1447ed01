"""User-supplied utilities as arithmetic expressions.

Variables are ``x0_1 .. x0_C`` for today's bundle and ``xs_1 .. xs_C`` for
the state bundle; with one commodity ``x`` and ``y`` are accepted as
aliases. Allowed: numbers, ``+ - * / **``, unary minus and the functions
``ln``, ``log``, ``sqrt``, ``exp``, ``pow``, ``abs``. The expression is
compiled once into a vectorized numpy function; derivatives come from
finite differences only.
"""
from __future__ import annotations

import ast

import numpy as np

from .core import VnmOracle, fd_oracle
from .errors import ConfigError

__all__ = ["compile_expression", "expression_oracle"]

_FUNCS = {"ln": np.log, "log": np.log, "sqrt": np.sqrt, "exp": np.exp, "pow": np.power, "abs": np.abs}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


def _variables(C: int) -> dict:
    names = {f"x0_{i + 1}": i for i in range(C)}
    names.update({f"xs_{i + 1}": C + i for i in range(C)})
    if C == 1:
        names.update({"x": 0, "y": 1})
    return names


def compile_expression(text: str, commodities: int = 1):
    """Return ``f(X)`` evaluating ``text`` on an (n, 2C) batch; ConfigError on anything unsupported."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"expr: cannot parse {text!r}: {exc.msg}") from None
    names = _variables(commodities)

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            c = float(node.value)
            return lambda X: np.full(len(X), c)
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ConfigError(f"expr: unknown variable {node.id!r}")
            j = names[node.id]
            return lambda X: X[:, j]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            return (lambda X: -inner(X)) if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, left, right = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda X: op(left(X), right(X))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fn = _FUNCS.get(node.func.id)
            if fn is None:
                raise ConfigError(f"expr: unknown function {node.func.id!r}")
            args = [build(a) for a in node.args]
            arity = 2 if node.func.id == "pow" else 1
            if len(args) != arity:
                raise ConfigError(f"expr: {node.func.id} takes {arity} argument(s)")
            return lambda X: fn(*(a(X) for a in args))
        raise ConfigError(f"expr: unsupported syntax {type(node).__name__}")

    fn = build(tree)

    def value(X):
        with np.errstate(all="ignore"):
            return np.asarray(fn(np.atleast_2d(X)), dtype=float)

    return value


def expression_oracle(text: str, commodities: int = 1, step: float = 1e-5, hessian_step: float = 1e-4) -> VnmOracle:
    """Finite-difference oracle for an expression, with coordinate-relative steps."""
    value = compile_expression(text, commodities)
    probe = value(np.ones((1, 2 * commodities)))
    if probe.shape != (1,):
        raise ConfigError("expr: expression must produce one value per point")
    return fd_oracle(value, step, commodities, hessian_step=hessian_step, relative=True, name="expr")
