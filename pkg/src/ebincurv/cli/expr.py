"""Restricted arithmetic expressions over torus coordinates.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := ("+" | "-") factor | atom
    atom    := NUMBER | "pi" | VAR | FUNC "(" expr ")" | "(" expr ")"
    VAR     := "x1" | "x2" | ... | "xn"
    FUNC    := "sin" | "cos" | "exp"

Parsing goes through :mod:`ast` and rejects every node outside this set,
so nothing is ever evaluated as Python.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VAR = re.compile(r"x([1-9][0-9]*)$")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Expression:
    source: str
    dimension: int

    def __post_init__(self):
        self._check(self._tree().body)

    def _tree(self) -> ast.Expression:
        if "**" in self.source:
            raise ExpressionError(f"powers are not in the grammar: {self.source!r}")
        try:
            return ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(f"unary {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in FUNCS) or node.keywords \
                    or len(node.args) != 1:
                raise ExpressionError(f"only sin, cos, exp of one argument are allowed in {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id == "pi":
                return
            mt = _VAR.match(node.id)
            if not mt:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
            if int(mt.group(1)) > self.dimension:
                raise ExpressionError(f"{node.id} exceeds dimension {self.dimension} in {self.source!r}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"literal {node.value!r} not allowed in {self.source!r}")
        else:
            raise ExpressionError(f"{type(node).__name__} not allowed in {self.source!r}")

    def evaluate(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Value on the grid given coordinate arrays ``x1 .. xn``."""
        shape = np.shape(coords[0])

        def ev(node):
            if isinstance(node, ast.BinOp):
                return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
            if isinstance(node, ast.UnaryOp):
                v = ev(node.operand)
                return -v if isinstance(node.op, ast.USub) else v
            if isinstance(node, ast.Call):
                return FUNCS[node.func.id](ev(node.args[0]))
            if isinstance(node, ast.Name):
                return np.pi if node.id == "pi" else coords[int(node.id[1:]) - 1]
            return float(node.value)

        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                out = ev(self._tree().body)
            except FloatingPointError as exc:
                raise ExpressionError(f"{self.source!r} is not finite on the grid: {exc}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def __str__(self) -> str:
        return self.source.strip()
