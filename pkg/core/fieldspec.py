"""
Vector-field definitions.

Parses math-expression text into immutable expression trees, renders them
back to canonical text and evaluates exact derivative jets of the field
(up to third order) with nested dual numbers.

Field text is either a parenthesized triple ``(fx, fy, fz)``, three
expressions separated by semicolons, or a JSON object
``{"fx": ..., "fy": ..., "fz": ...}``.
"""
import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import CONFIG
from core import dual
from core.errors import (
    ArityError,
    FieldSingularityError,
    FieldSyntaxError,
    UnknownIdentifierError,
)

VARIABLES = ("x", "y", "z")
NAMED_CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------

class Node:
    """Base class of expression-tree nodes; supports arithmetic operators."""

    def __add__(self, other): return BinOp("+", self, _operand(other))
    def __radd__(self, other): return BinOp("+", _operand(other), self)
    def __sub__(self, other): return BinOp("-", self, _operand(other))
    def __rsub__(self, other): return BinOp("-", _operand(other), self)
    def __mul__(self, other): return BinOp("*", self, _operand(other))
    def __rmul__(self, other): return BinOp("*", _operand(other), self)
    def __truediv__(self, other): return BinOp("/", self, _operand(other))
    def __rtruediv__(self, other): return BinOp("/", _operand(other), self)
    def __pow__(self, other): return BinOp("^", self, _operand(other))
    def __rpow__(self, other): return BinOp("^", _operand(other), self)
    def __neg__(self): return Neg(self)


@dataclass(frozen=True, eq=True)
class Const(Node):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Node):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True, eq=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]


def constant(value: float) -> Node:
    """Constant node; negative values become Neg(Const) so text round-trips."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite constant {value!r}")
    if value < 0 or (value == 0 and math.copysign(1.0, value) < 0):
        return Neg(Const(-value))
    return Const(value)


def _operand(value) -> Node:
    if isinstance(value, Node):
        return value
    return constant(value)


def var(name: str) -> Var:
    if name not in VARIABLES:
        raise ValueError(f"unknown variable '{name}'")
    return Var(name)


def call(name: str, *args) -> Call:
    expected = CONFIG.ALLOWED_FUNCTIONS.get(name)
    if expected is None:
        raise ValueError(f"unknown function '{name}'")
    if expected != len(args):
        raise ValueError(f"function '{name}' takes {expected} argument(s)")
    return Call(name, tuple(_operand(a) for a in args))


# ---------------------------------------------------------------------------
# Compiled evaluation
# ---------------------------------------------------------------------------

class _Tape:
    """Flat instruction list over the expression DAG; shared nodes run once."""

    def __init__(self, roots: Sequence[Node]):
        self.program: List[tuple] = []
        slots: Dict[int, int] = {}

        def visit(node: Node) -> int:
            key = id(node)
            if key in slots:
                return slots[key]
            if isinstance(node, Const):
                instr = ("const", node.value, ())
            elif isinstance(node, Var):
                instr = ("var", VARIABLES.index(node.name), ())
            elif isinstance(node, Neg):
                instr = ("neg", None, (visit(node.operand),))
            elif isinstance(node, BinOp):
                instr = (node.op, None, (visit(node.left), visit(node.right)))
            elif isinstance(node, Call):
                instr = ("call", dual.FUNCTIONS[node.name], tuple(visit(a) for a in node.args))
            else:
                raise TypeError(f"not an expression node: {node!r}")
            slots[key] = len(self.program)
            self.program.append(instr)
            return slots[key]

        self.outputs = tuple(visit(r) for r in roots)

    def run(self, inputs: Sequence) -> list:
        values: list = [None] * len(self.program)
        for idx, (kind, payload, args) in enumerate(self.program):
            if kind == "const":
                values[idx] = payload
            elif kind == "var":
                values[idx] = inputs[payload]
            elif kind == "neg":
                values[idx] = -values[args[0]]
            elif kind == "+":
                values[idx] = values[args[0]] + values[args[1]]
            elif kind == "-":
                values[idx] = values[args[0]] - values[args[1]]
            elif kind == "*":
                values[idx] = values[args[0]] * values[args[1]]
            elif kind == "/":
                values[idx] = values[args[0]] * dual.reciprocal(values[args[1]])
            elif kind == "^":
                values[idx] = dual.power(values[args[0]], values[args[1]])
            else:
                values[idx] = payload(*(values[a] for a in args))
        return [values[o] for o in self.outputs]


@dataclass(frozen=True, eq=True)
class FieldExpr:
    """Three component expression trees over x, y, z."""
    components: Tuple[Node, Node, Node]

    def __post_init__(self):
        if len(self.components) != 3:
            raise ValueError("a field has exactly three components")

    @cached_property
    def _tape(self) -> _Tape:
        return _Tape(self.components)

    def run(self, inputs: Sequence) -> list:
        return self._tape.run(inputs)

    def evaluate(self, point) -> np.ndarray:
        """Plain value at `point`."""
        return np.array([float(v) for v in self.run([float(c) for c in point])])

    def unparse(self) -> str:
        return "(" + ", ".join(unparse(c) for c in self.components) + ")"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),;])"
    r")"
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | name | op | end
    text: str
    offset: int  # byte offset into the source


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    byte_pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            if text[pos:].strip() == "":
                break
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise FieldSyntaxError(
                f"unexpected character {text[start]!r}",
                len(text[:start].encode("utf-8")),
            )
        kind = match.lastgroup
        start = match.start(kind)
        offset = byte_pos + len(text[pos:start].encode("utf-8"))
        value = match.group(kind)
        if value == "**":
            value = "^"
        tokens.append(Token(kind, value, offset))
        byte_pos = offset + len(match.group(kind).encode("utf-8"))
        pos = match.end()
    tokens.append(Token("end", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    """
    Recursive-descent parser.

    expr  := term (('+'|'-') term)*
    term  := unary (('*'|'/') unary)*
    unary := ('-'|'+') unary | power
    power := atom ('^' unary)?
    atom  := number | name | name '(' args ')' | '(' expr ')'
    """

    def __init__(self, text: str, constants: Optional[Mapping[str, float]] = None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.constants = dict(constants or {})

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _at(self, text: str) -> bool:
        tok = self.current
        return tok.kind == "op" and tok.text == text

    def _expect(self, text: str) -> Token:
        if not self._at(text):
            tok = self.current
            found = tok.text or "end of input"
            raise FieldSyntaxError(f"expected '{text}' but found '{found}'", tok.offset)
        return self._advance()

    def _expect_end(self) -> None:
        if self.current.kind != "end":
            tok = self.current
            raise FieldSyntaxError(f"unexpected '{tok.text}'", tok.offset)

    def expression(self) -> Node:
        node = self.term()
        while self._at("+") or self._at("-"):
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self._at("*") or self._at("/"):
            op = self._advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._at("-"):
            self._advance()
            return Neg(self.unary())
        if self._at("+"):
            self._advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._at("^"):
            self._advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.current
        if tok.kind == "number":
            self._advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise FieldSyntaxError(f"numeric literal '{tok.text}' is out of range", tok.offset)
            return Const(value)
        if tok.kind == "name":
            self._advance()
            if self._at("("):
                return self._call(tok)
            return self._identifier(tok)
        if self._at("("):
            self._advance()
            node = self.expression()
            self._expect(")")
            return node
        found = tok.text or "end of input"
        raise FieldSyntaxError(f"expected an operand but found '{found}'", tok.offset)

    def _identifier(self, tok: Token) -> Node:
        name = tok.text
        if name in VARIABLES:
            return Var(name)
        if name in self.constants:
            return constant(self.constants[name])
        if name in NAMED_CONSTANTS:
            return Const(NAMED_CONSTANTS[name])
        raise UnknownIdentifierError(name, tok.offset)

    def _call(self, tok: Token) -> Node:
        expected = CONFIG.ALLOWED_FUNCTIONS.get(tok.text)
        if expected is None:
            raise UnknownIdentifierError(tok.text, tok.offset)
        self._expect("(")
        args: List[Node] = []
        if not self._at(")"):
            args.append(self.expression())
            while self._at(","):
                self._advance()
                args.append(self.expression())
        self._expect(")")
        if len(args) != expected:
            raise ArityError(tok.text, expected, len(args), tok.offset)
        return Call(tok.text, tuple(args))

    def field(self) -> FieldExpr:
        if self._at("("):
            start = self.pos
            self._advance()
            first = self.expression()
            if self._at(","):
                self._advance()
                second = self.expression()
                self._expect(",")
                third = self.expression()
                self._expect(")")
                self._expect_end()
                return FieldExpr((first, second, third))
            self.pos = start
        parts = [self.expression()]
        for _ in range(2):
            self._expect(";")
            parts.append(self.expression())
        if self._at(";"):
            self._advance()
        self._expect_end()
        return FieldExpr(tuple(parts))


def parse_expression(text: str, constants: Optional[Mapping[str, float]] = None) -> Node:
    """Parse a single scalar expression."""
    parser = _Parser(text, constants)
    node = parser.expression()
    parser._expect_end()
    return node


def parse_field(text: str, constants: Optional[Mapping[str, float]] = None) -> FieldExpr:
    """
    Parse field text into a FieldExpr.

    Args:
        text: ``(fx, fy, fz)``, ``fx; fy; fz`` or a JSON object with keys fx, fy, fz
        constants: named parameters usable as identifiers in the text

    Returns:
        The expression tree of the three components
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        return _parse_json_field(stripped, constants)
    return _Parser(text, constants).field()


def _parse_json_field(text: str, constants: Optional[Mapping[str, float]]) -> FieldExpr:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FieldSyntaxError(f"invalid JSON field: {exc.msg}", exc.pos) from exc
    if not isinstance(data, dict):
        raise FieldSyntaxError("JSON field must be an object", 0)
    components = []
    for key in ("fx", "fy", "fz"):
        if key not in data or not isinstance(data[key], str):
            raise FieldSyntaxError(f"JSON field needs a string entry '{key}'", 0)
        components.append(parse_expression(data[key], constants))
    return FieldExpr(tuple(components))


def load_field_file(path: Union[str, Path], constants: Optional[Mapping[str, float]] = None) -> FieldExpr:
    """Read a UTF-8 field definition file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_field(text, constants)


def unparse(node: Node) -> str:
    """Fully parenthesized canonical text; parsing it gives back an equal tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{unparse(node.operand)})"
    if isinstance(node, BinOp):
        return f"({unparse(node.left)}{node.op}{unparse(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}(" + ", ".join(unparse(a) for a in node.args) + ")"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Jets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldJet:
    """Value and derivatives of a field at one point.

    jacobian[c, j] = d eta_c / d x_j, hessian[c, j, i] = d2 eta_c / dx_j dx_i.
    """
    point: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray
    hessian: Optional[np.ndarray] = None
    third: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        if self.third is not None:
            return 3
        return 2 if self.hessian is not None else 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.value))

    @property
    def curl(self) -> np.ndarray:
        J = self.jacobian
        return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def eval_jet(f: FieldExpr, point, order: int = 1, normalize: bool = False) -> FieldJet:
    """
    Evaluate the field and its derivatives at `point`.

    Args:
        f: field expression
        point: evaluation point (3 reals)
        order: highest derivative order, 1, 2 or 3
        normalize: differentiate f/|f| instead of f

    Returns:
        FieldJet with the requested tensors populated
    """
    if order not in (1, 2, 3):
        raise ValueError(f"jet order must be 1, 2 or 3, got {order}")
    p = np.array([float(c) for c in point])
    outputs = f.run(dual.seed_variables(p, order))

    norm2 = outputs[0] * outputs[0] + outputs[1] * outputs[1] + outputs[2] * outputs[2]
    magnitude = math.sqrt(max(float(dual.innermost(norm2)), 0.0))
    if magnitude < CONFIG.FIELD_SINGULARITY_EPS:
        raise FieldSingularityError(p, magnitude)
    if normalize:
        inverse = dual.reciprocal(dual.sqrt(norm2))
        outputs = [o * inverse for o in outputs]

    parts = [
        np.stack([dual.taylor_part(o, k, order) for o in outputs])
        for k in range(order + 1)
    ]
    return FieldJet(
        point=p,
        value=parts[0],
        jacobian=parts[1],
        hessian=parts[2] if order >= 2 else None,
        third=parts[3] if order >= 3 else None,
    )


def normalize_field(f: FieldExpr) -> FieldExpr:
    """f / |f| as an expression tree sharing the norm subtree."""
    fx, fy, fz = f.components
    magnitude = call("sqrt", fx * fx + fy * fy + fz * fz)
    return FieldExpr((fx / magnitude, fy / magnitude, fz / magnitude))


class VectorField:
    """
    A field ready for geometric evaluation.

    Jets are taken of the unit field eta/|eta| unless `normalize` is False.
    """

    def __init__(self, expr: FieldExpr, normalize: bool = True, name: str = "field"):
        self.expr = expr
        self.normalize = normalize
        self.name = name

    def jet(self, point, order: int = 1) -> FieldJet:
        return eval_jet(self.expr, point, order, normalize=self.normalize)

    def value(self, point) -> np.ndarray:
        raw = self.expr.evaluate(point)
        magnitude = float(np.linalg.norm(raw))
        if magnitude < CONFIG.FIELD_SINGULARITY_EPS:
            raise FieldSingularityError(point, magnitude)
        return raw / magnitude if self.normalize else raw

    def __repr__(self) -> str:
        return f"VectorField({self.name!r})"
