"""Expression language used for map components, forms and cocycle generators.

Grammar:
    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' integer)? | '-' factor
    atom   := number | 'pi' | ident | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp'

Evaluation is generic: the same tree evaluates over floats, numpy arrays,
Jet1D and Jet2 values.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from models.errors import ExpressionError
from models.responses import ErrorCode
from services.jets import Jet1D, Jet2

logger = logging.getLogger(__name__)

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


# AST

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Parameter:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Power:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Pi, Variable, Parameter, Neg, BinOp, Power, Call]


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            offset = len(text[:pos].encode()) + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character at byte {offset}", offset=offset)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(_Token(kind, match.group(kind), len(text[:start].encode())))
        pos = match.end()
    tokens.append(_Token("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text: str, parameters: Optional[Iterable[str]]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.parameters = None if parameters is None else frozenset(parameters)

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _expect(self, text: str) -> _Token:
        token = self.current
        if token.text != text:
            found = token.text or "end of input"
            raise ExpressionError(f"expected '{text}' at byte {token.offset}, found {found!r}", offset=token.offset)
        return self._advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.current.kind != "end":
            raise ExpressionError(
                f"unexpected {self.current.text!r} at byte {self.current.offset}",
                offset=self.current.offset,
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.current.text == "-":
            self._advance()
            return Neg(self.factor())
        node = self.atom()
        if self.current.text == "^":
            exponents = []
            while self.current.text == "^":
                self._advance()
                token = self.current
                if token.kind != "number" or not token.text.isdigit():
                    raise ExpressionError(f"integer exponent expected at byte {token.offset}", offset=token.offset)
                exponents.append(int(self._advance().text))
            # right associative: a^b^c = a^(b^c)
            exponent = exponents[-1]
            for e in reversed(exponents[:-1]):
                exponent = e**exponent
            node = Power(node, exponent)
        return node

    def atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Number(float(token.text))
        if token.kind == "ident":
            self._advance()
            name = token.text
            if name in FUNCTIONS:
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Call(name, arg)
            if self.current.text == "(":
                raise ExpressionError(
                    f"unknown function {name!r} at byte {token.offset}",
                    code=ErrorCode.EXPR_UNKNOWN_IDENTIFIER,
                    offset=token.offset,
                )
            if name == "pi":
                return Pi()
            if name in VARIABLES:
                return Variable(name)
            if self.parameters is not None and name not in self.parameters:
                raise ExpressionError(
                    f"unknown identifier {name!r} at byte {token.offset}",
                    code=ErrorCode.EXPR_UNKNOWN_IDENTIFIER,
                    offset=token.offset,
                )
            return Parameter(name)
        if token.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        found = token.text or "end of input"
        raise ExpressionError(f"unexpected {found!r} at byte {token.offset}", offset=token.offset)


def format_expr(node: Node) -> str:
    """Canonical text; parsing it returns an equal tree."""
    if isinstance(node, Number):
        return repr(float(node.value))
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, (Variable, Parameter)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{format_expr(node.operand)})"
    if isinstance(node, BinOp):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, Power):
        return f"({format_expr(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({format_expr(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def parameters_of(node: Node) -> FrozenSet[str]:
    if isinstance(node, Parameter):
        return frozenset([node.name])
    if isinstance(node, Neg):
        return parameters_of(node.operand)
    if isinstance(node, BinOp):
        return parameters_of(node.left) | parameters_of(node.right)
    if isinstance(node, Power):
        return parameters_of(node.base)
    if isinstance(node, Call):
        return parameters_of(node.arg)
    return frozenset()


def _call(func: str, value):
    if isinstance(value, (Jet1D, Jet2)):
        return getattr(value, func)()
    return getattr(np, func)(value)


def _divide(left, right):
    if isinstance(right, (Jet1D, Jet2)) or isinstance(left, (Jet1D, Jet2)):
        return left / right
    if np.any(np.asarray(right) == 0.0):
        raise ExpressionError("division by zero at evaluation point", code=ErrorCode.EXPR_DIVISION_BY_ZERO)
    return np.divide(left, right)


def evaluate_node(node: Node, env: Mapping[str, Any]):
    """Evaluate a tree against bound variables and parameters."""
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Variable):
        return env[node.name]
    if isinstance(node, Parameter):
        try:
            return env[node.name]
        except KeyError:
            raise ExpressionError(
                f"unbound parameter {node.name!r}",
                code=ErrorCode.EXPR_UNBOUND_PARAMETER,
                details={"parameter": node.name},
            ) from None
    if isinstance(node, Neg):
        return -evaluate_node(node.operand, env)
    if isinstance(node, BinOp):
        left = evaluate_node(node.left, env)
        right = evaluate_node(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        return _divide(left, right)
    if isinstance(node, Power):
        return evaluate_node(node.base, env) ** node.exponent
    if isinstance(node, Call):
        return _call(node.func, evaluate_node(node.arg, env))
    raise TypeError(f"not an expression node: {node!r}")


def _finite(value) -> bool:
    if isinstance(value, Jet1D):
        return bool(np.all(np.isfinite(value.coeffs)))
    if isinstance(value, Jet2):
        return bool(np.all(np.isfinite(value.value)) and np.all(np.isfinite(value.grad))
                    and np.all(np.isfinite(value.hess)))
    return bool(np.all(np.isfinite(value)))


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with its source text."""
    text: str
    ast: Node = field(compare=False)

    @classmethod
    def parse(cls, text: str, parameters: Optional[Iterable[str]] = None) -> "Expression":
        return cls(text=text, ast=_Parser(text, parameters).parse())

    @property
    def parameters(self) -> FrozenSet[str]:
        return parameters_of(self.ast)

    @property
    def canonical(self) -> str:
        return format_expr(self.ast)

    def bind(self, x, y, z, params: Optional[Mapping[str, Any]] = None):
        """Evaluate with coordinates bound to arbitrary numeric or jet values."""
        env: Dict[str, Any] = dict(params or {})
        env.update(x=x, y=y, z=z)
        with np.errstate(all="ignore"):
            value = evaluate_node(self.ast, env)
        if not _finite(value):
            raise ExpressionError(
                f"non-finite value while evaluating {self.text!r}",
                code=ErrorCode.EXPR_NONFINITE,
            )
        return value

    def evaluate(self, points, params: Optional[Mapping[str, Any]] = None) -> np.ndarray:
        """Plain evaluation at points of shape (..., 3)."""
        points = np.asarray(points, dtype=float)
        value = self.bind(points[..., 0], points[..., 1], points[..., 2], params)
        return np.broadcast_to(np.asarray(value, dtype=float), points.shape[:-1]).copy()

    def jet2(self, points, params: Optional[Mapping[str, Any]] = None) -> Jet2:
        """Value, gradient and Hessian at points of shape (..., 3)."""
        points = np.asarray(points, dtype=float)
        x, y, z = Jet2.variables(points)
        value = self.bind(x, y, z, params)
        if not isinstance(value, Jet2):
            value = Jet2.constant(value, points.shape[:-1])
        return value


class ExpressionService:
    """Entry points of the calculus layer."""

    @staticmethod
    def parse_expr(text: str, parameters: Optional[Iterable[str]] = None) -> Expression:
        return Expression.parse(text, parameters)

    @staticmethod
    def eval_jet2(expr: Expression, point, params: Optional[Mapping[str, float]] = None) -> Tuple[float, np.ndarray, np.ndarray]:
        """(value, gradient, Hessian) of a scalar expression at one point."""
        jet = expr.jet2(np.asarray(point, dtype=float), params)
        return float(jet.value), jet.grad.copy(), jet.hess.copy()
