"""Arithmetic expressions over variables ``u1..uk`` and named parameters.

Every map handled by this package is a data value: a parsed AST supporting
exact evaluation, forward-mode derivatives (dual numbers), structural
substitution and pretty-printing.  The grammar is deliberately minimal --
numbers, variables, parameters, ``+ - * / ^``, unary minus, ``exp``, ``log``,
``sqrt``, ``abs`` and binary ``min``/``max``.  Precedence is ``^`` over unary
minus over ``*``/``/`` over ``+``/``-``; ``^`` is right-associative.

ASTs produced by substitution may share subtrees (they are DAGs); all walkers
here memoise on node identity so shared subtrees are processed once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalDomainError, ParseError

__all__ = [
    "Expression",
    "DualVector",
    "parse",
    "Num",
    "Var",
    "Param",
    "Neg",
    "BinOp",
    "Func",
]


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------

class Node:
    __slots__ = ()


class Num(Node):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)


class Var(Node):
    """Variable ``u<index>``, 1-based."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        self.index = index


class Param(Node):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name


class Neg(Node):
    __slots__ = ("arg",)

    def __init__(self, arg: Node):
        self.arg = arg


class BinOp(Node):
    __slots__ = ("op", "lhs", "rhs")

    def __init__(self, op: str, lhs: Node, rhs: Node):
        self.op = op
        self.lhs = lhs
        self.rhs = rhs


class Func(Node):
    """Named function call: exp/log/sqrt/abs (1 arg) or min/max (2 args)."""

    __slots__ = ("name", "args")

    def __init__(self, name: str, args: tuple):
        self.name = name
        self.args = tuple(args)


FUNCTIONS_1 = ("exp", "log", "sqrt", "abs")
FUNCTIONS_2 = ("min", "max")


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text: str):
    """Yield (kind, value, offset) with kind in num|ident|op."""
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _OPS:
            yield ("op", ch, i)
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                j2 = j + 1
                if j2 < n and text[j2] in "+-":
                    j2 += 1
                if j2 < n and text[j2].isdigit():
                    j = j2
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ParseError(f"malformed number {text[i:j]!r}", i) from None
            yield ("num", value, i)
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            yield ("ident", text[i:j], i)
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    yield ("end", None, n)


class _Parser:
    def __init__(self, text: str, k: int, params):
        self.text = text
        self.k = k
        self.params = frozenset(params)
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, value, offset = self.peek()
        if kind != "op" or value != op:
            raise ParseError(f"expected {op!r}", offset)
        return self.advance()

    # expr := term (('+'|'-') term)*
    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = BinOp(value, node, rhs)
            else:
                return node

    # term := factor (('*'|'/') factor)*
    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                node = BinOp(value, node, rhs)
            else:
                return node

    # factor := '-' factor | power
    def factor(self) -> Node:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    # power := atom ('^' factor)?        (right-associative)
    def power(self) -> Node:
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return BinOp("^", node, self.factor())
        return node

    def atom(self) -> Node:
        kind, value, offset = self.advance()
        if kind == "num":
            return Num(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            return self.ident(value, offset)
        raise ParseError("expected a value", offset)

    def ident(self, name: str, offset: int) -> Node:
        nxt_kind, nxt_value, _ = self.peek()
        if nxt_kind == "op" and nxt_value == "(":
            self.advance()
            args = [self.expr()]
            while True:
                kind, value, off2 = self.peek()
                if kind == "op" and value == ",":
                    self.advance()
                    args.append(self.expr())
                else:
                    break
            self.expect_op(")")
            if name in FUNCTIONS_1:
                if len(args) != 1:
                    raise ParseError(f"{name} takes one argument", offset)
            elif name in FUNCTIONS_2:
                if len(args) != 2:
                    raise ParseError(f"{name} takes two arguments", offset)
            else:
                raise ParseError(f"unknown function {name!r}", offset)
            return Func(name, tuple(args))
        if len(name) >= 2 and name[0] == "u" and name[1:].isdigit():
            index = int(name[1:])
            if index < 1:
                raise ParseError(f"variable index must be >= 1: {name}", offset)
            if index > self.k:
                raise ParseError(
                    f"variable index exceeds dimension k={self.k}: {name}", offset
                )
            return Var(index)
        if name in self.params:
            return Param(name)
        raise ParseError(f"unknown identifier {name!r}", offset)

    def parse(self) -> Node:
        node = self.expr()
        kind, _, offset = self.peek()
        if kind != "end":
            raise ParseError("trailing input", offset)
        return node


# ---------------------------------------------------------------------------
# Expression value type
# ---------------------------------------------------------------------------

@dataclass
class DualVector:
    """Value plus the k partial derivatives at the evaluation point."""

    value: float
    partials: np.ndarray
    nonsmooth: bool = False  # abs() was differentiated at 0


@dataclass
class Expression:
    """Immutable parsed expression in variables ``u1..uk``.

    ``param_names`` is the set of parameter names actually referenced.
    """

    root: Node
    k: int
    param_names: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.param_names = frozenset(collect_params(self.root))

    # -- evaluation ---------------------------------------------------------

    def eval(self, point, params=None) -> float:
        return eval_expr(self, point, params)

    def eval_dual(self, point, params=None) -> DualVector:
        return eval_dual(self, point, params)

    def __str__(self) -> str:
        return to_text(self.root)

    def with_k(self, k: int) -> "Expression":
        if k < max_var_index(self.root):
            raise ValueError("k smaller than highest variable index")
        return Expression(self.root, k)


def parse(text: str, k: int, params=()) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``u1..uk``.

    ``params`` declares the legal parameter names; anything else raises
    :class:`ParseError` with the byte offset of the offending token.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    if k < 1:
        raise ValueError("k must be >= 1")
    for name in params:
        if len(name) >= 2 and name[0] == "u" and name[1:].isdigit():
            raise ValueError(f"parameter name {name!r} collides with variable syntax")
    root = _Parser(text, k, params).parse()
    return Expression(root, k)


# ---------------------------------------------------------------------------
# Walkers (all memoise on node identity: ASTs may be DAGs)
# ---------------------------------------------------------------------------

def collect_params(root: Node) -> set:
    out, seen = set(), set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Param):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, Func):
            stack.extend(node.args)
    return out


def max_var_index(root: Node) -> int:
    best, seen = 0, set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            best = max(best, node.index)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, Func):
            stack.extend(node.args)
    return best


def node_count(root: Node) -> int:
    """Number of distinct nodes (DAG size)."""
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, Func):
            stack.extend(node.args)
    return len(seen)


def structurally_equal(a: Node, b: Node) -> bool:
    memo = {}

    def go(x: Node, y: Node) -> bool:
        key = (id(x), id(y))
        if key in memo:
            return memo[key]
        if type(x) is not type(y):
            result = False
        elif isinstance(x, Num):
            result = x.value == y.value
        elif isinstance(x, Var):
            result = x.index == y.index
        elif isinstance(x, Param):
            result = x.name == y.name
        elif isinstance(x, Neg):
            result = go(x.arg, y.arg)
        elif isinstance(x, BinOp):
            result = x.op == y.op and go(x.lhs, y.lhs) and go(x.rhs, y.rhs)
        elif isinstance(x, Func):
            result = (
                x.name == y.name
                and len(x.args) == len(y.args)
                and all(go(p, q) for p, q in zip(x.args, y.args))
            )
        else:  # pragma: no cover
            result = False
        memo[key] = result
        return result

    return go(a, b)


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_text(root: Node) -> str:
    def go(node: Node, parent_prec: int, right_of_same: bool = False) -> str:
        if isinstance(node, Num):
            text = _fmt_number(node.value)
            return text
        if isinstance(node, Var):
            return f"u{node.index}"
        if isinstance(node, Param):
            return node.name
        if isinstance(node, Neg):
            inner = go(node.arg, _PREC["neg"])
            text = f"-{inner}"
            return f"({text})" if parent_prec > _PREC["neg"] or right_of_same else text
        if isinstance(node, Func):
            args = ", ".join(go(a, 0) for a in node.args)
            return f"{node.name}({args})"
        if isinstance(node, BinOp):
            prec = _PREC[node.op]
            if node.op == "^":
                # right-associative: parenthesise a left child of equal prec
                lhs = go(node.lhs, prec + 1)
                rhs = go(node.rhs, prec)
            else:
                lhs = go(node.lhs, prec)
                rhs = go(node.rhs, prec, right_of_same=True) if node.op in "-/" else go(
                    node.rhs, prec + 1
                )
            text = f"{lhs}{node.op}{rhs}"
            if prec < parent_prec or (right_of_same and prec == parent_prec):
                return f"({text})"
            return text
        raise TypeError(f"unknown node {node!r}")

    return go(root, 0)


# -- substitution -----------------------------------------------------------

def substitute(expr: Expression, var_map=None, param_map=None, k=None) -> Expression:
    """Replace variables and/or parameters by sub-expressions.

    ``var_map`` maps 1-based variable indices to replacement nodes or
    expressions; ``param_map`` maps parameter names likewise.  Shared
    subtrees stay shared, so repeated substitution grows the DAG linearly.
    """
    var_map = {i: (e.root if isinstance(e, Expression) else e) for i, e in (var_map or {}).items()}
    param_map = {
        n: (e.root if isinstance(e, Expression) else e) for n, e in (param_map or {}).items()
    }
    memo = {}

    def go(node: Node) -> Node:
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Var):
            out = var_map.get(node.index, node)
        elif isinstance(node, Param):
            out = param_map.get(node.name, node)
        elif isinstance(node, Neg):
            arg = go(node.arg)
            out = node if arg is node.arg else Neg(arg)
        elif isinstance(node, BinOp):
            lhs, rhs = go(node.lhs), go(node.rhs)
            out = node if (lhs is node.lhs and rhs is node.rhs) else BinOp(node.op, lhs, rhs)
        elif isinstance(node, Func):
            args = tuple(go(a) for a in node.args)
            out = node if all(a is b for a, b in zip(args, node.args)) else Func(node.name, args)
        else:
            out = node
        memo[id(node)] = out
        return out

    new_root = go(expr.root)
    if k is None:
        k = max(max_var_index(new_root), 1)
    return Expression(new_root, k)


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------

def _describe(node: Node) -> str:
    text = to_text(node)
    return text if len(text) <= 60 else text[:57] + "..."


def _check_finite(value: float, node: Node, what: str = "result") -> float:
    if not math.isfinite(value):
        raise EvalDomainError(
            f"non-finite {what} ({value!r}) in {_describe(node)!r}", node, value
        )
    return value


def eval_expr(expr: Expression, point, params=None) -> float:
    """Evaluate at ``point`` (length-k sequence).  All parameter names must be
    bound; any NaN/Inf intermediate raises :class:`EvalDomainError`."""
    params = params or {}
    point = [float(v) for v in point]
    if len(point) != expr.k:
        raise ValueError(f"point has length {len(point)}, expected k={expr.k}")
    for v in point:
        if not math.isfinite(v):
            raise EvalDomainError(f"non-finite evaluation point {point}")
    missing = expr.param_names - set(params)
    if missing:
        raise EvalDomainError(f"unbound parameters: {sorted(missing)}")
    memo = {}

    def go(node: Node) -> float:
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Num):
            out = node.value
        elif isinstance(node, Var):
            out = point[node.index - 1]
        elif isinstance(node, Param):
            out = float(params[node.name])
        elif isinstance(node, Neg):
            out = -go(node.arg)
        elif isinstance(node, BinOp):
            a, b = go(node.lhs), go(node.rhs)
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = a * b
            elif node.op == "/":
                if b == 0.0:
                    raise EvalDomainError(
                        f"division by zero in {_describe(node)!r}", node, a
                    )
                out = a / b
            else:  # "^"
                try:
                    out = math.pow(a, b)
                except (ValueError, OverflowError) as exc:
                    raise EvalDomainError(
                        f"invalid power {a!r}^{b!r} in {_describe(node)!r}", node, a
                    ) from exc
            out = _check_finite(out, node)
        elif isinstance(node, Func):
            vals = [go(a) for a in node.args]
            if node.name == "exp":
                try:
                    out = math.exp(vals[0])
                except OverflowError as exc:
                    raise EvalDomainError(
                        f"exp overflow at {vals[0]!r} in {_describe(node)!r}",
                        node,
                        vals[0],
                    ) from exc
            elif node.name == "log":
                if vals[0] <= 0.0:
                    raise EvalDomainError(
                        f"log of non-positive value {vals[0]!r} in {_describe(node)!r}",
                        node,
                        vals[0],
                    )
                out = math.log(vals[0])
            elif node.name == "sqrt":
                if vals[0] < 0.0:
                    raise EvalDomainError(
                        f"sqrt of negative value {vals[0]!r} in {_describe(node)!r}",
                        node,
                        vals[0],
                    )
                out = math.sqrt(vals[0])
            elif node.name == "abs":
                out = abs(vals[0])
            elif node.name == "min":
                out = min(vals)
            else:  # max
                out = max(vals)
            out = _check_finite(out, node)
        else:  # pragma: no cover
            raise TypeError(f"unknown node {node!r}")
        memo[id(node)] = out
        return out

    return go(expr.root)


# ---------------------------------------------------------------------------
# Forward-mode dual evaluation
# ---------------------------------------------------------------------------

def eval_dual(expr: Expression, point, params=None) -> DualVector:
    """Exact forward-mode value and gradient at ``point``.

    ``abs`` at 0 uses subgradient 0 and sets the ``nonsmooth`` flag.  Powers
    with a varying exponent require a positive base.
    """
    params = params or {}
    point = [float(v) for v in point]
    if len(point) != expr.k:
        raise ValueError(f"point has length {len(point)}, expected k={expr.k}")
    missing = expr.param_names - set(params)
    if missing:
        raise EvalDomainError(f"unbound parameters: {sorted(missing)}")
    k = expr.k
    zeros = np.zeros(k)
    memo = {}
    nonsmooth = [False]

    def go(node: Node):
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Num):
            out = (node.value, zeros)
        elif isinstance(node, Var):
            d = np.zeros(k)
            d[node.index - 1] = 1.0
            out = (point[node.index - 1], d)
        elif isinstance(node, Param):
            out = (float(params[node.name]), zeros)
        elif isinstance(node, Neg):
            v, d = go(node.arg)
            out = (-v, -d)
        elif isinstance(node, BinOp):
            (va, da), (vb, db) = go(node.lhs), go(node.rhs)
            if node.op == "+":
                out = (va + vb, da + db)
            elif node.op == "-":
                out = (va - vb, da - db)
            elif node.op == "*":
                out = (va * vb, vb * da + va * db)
            elif node.op == "/":
                if vb == 0.0:
                    raise EvalDomainError(
                        f"division by zero in {_describe(node)!r}", node, va
                    )
                out = (va / vb, (da - (va / vb) * db) / vb)
            else:  # "^"
                if db is zeros or not db.any():
                    # constant exponent: power rule is valid for negative bases
                    try:
                        v = math.pow(va, vb)
                    except (ValueError, OverflowError) as exc:
                        raise EvalDomainError(
                            f"invalid power {va!r}^{vb!r} in {_describe(node)!r}",
                            node,
                            va,
                        ) from exc
                    if vb == 0.0:
                        out = (v, zeros)
                    else:
                        if va == 0.0:
                            dv = zeros if vb > 1.0 else None
                            if dv is None:
                                raise EvalDomainError(
                                    f"power derivative undefined at 0^{vb!r} in "
                                    f"{_describe(node)!r}",
                                    node,
                                    va,
                                )
                        else:
                            dv = vb * math.pow(va, vb - 1.0) * da
                        out = (v, dv)
                else:
                    if va <= 0.0:
                        raise EvalDomainError(
                            f"power with varying exponent needs positive base, got "
                            f"{va!r} in {_describe(node)!r}",
                            node,
                            va,
                        )
                    v = math.pow(va, vb)
                    out = (v, v * (db * math.log(va) + vb * da / va))
        elif isinstance(node, Func):
            parts = [go(a) for a in node.args]
            (v0, d0) = parts[0]
            if node.name == "exp":
                try:
                    v = math.exp(v0)
                except OverflowError as exc:
                    raise EvalDomainError(
                        f"exp overflow at {v0!r} in {_describe(node)!r}", node, v0
                    ) from exc
                out = (v, v * d0)
            elif node.name == "log":
                if v0 <= 0.0:
                    raise EvalDomainError(
                        f"log of non-positive value {v0!r} in {_describe(node)!r}",
                        node,
                        v0,
                    )
                out = (math.log(v0), d0 / v0)
            elif node.name == "sqrt":
                if v0 < 0.0:
                    raise EvalDomainError(
                        f"sqrt of negative value {v0!r} in {_describe(node)!r}",
                        node,
                        v0,
                    )
                if v0 == 0.0 and d0.any():
                    raise EvalDomainError(
                        f"sqrt derivative undefined at 0 in {_describe(node)!r}",
                        node,
                        v0,
                    )
                v = math.sqrt(v0)
                out = (v, d0 / (2.0 * v) if v > 0.0 else zeros)
            elif node.name == "abs":
                if v0 == 0.0:
                    nonsmooth[0] = True
                    out = (0.0, zeros)  # subgradient convention
                else:
                    s = 1.0 if v0 > 0.0 else -1.0
                    out = (abs(v0), s * d0)
            else:  # min / max
                (v1, d1) = parts[1]
                if node.name == "min":
                    pick = 0 if v0 <= v1 else 1
                else:
                    pick = 0 if v0 >= v1 else 1
                if v0 == v1:
                    nonsmooth[0] = True
                out = parts[pick]
        else:  # pragma: no cover
            raise TypeError(f"unknown node {node!r}")
        value = _check_finite(out[0], node) if isinstance(node, (BinOp, Func)) else out[0]
        out = (value, out[1])
        memo[id(node)] = out
        return out

    value, partials = go(expr.root)
    return DualVector(value, np.array(partials, dtype=float), nonsmooth[0])
