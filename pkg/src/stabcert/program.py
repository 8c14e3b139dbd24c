"""Compile expression DAGs to flat register programs.

The grid and orbit kernels evaluate expressions millions of times; walking
the AST each time is the bottleneck.  ``compile_expr`` lowers an
:class:`~stabcert.expr.Expression` (with parameters bound to constants) to a
straight-line program over float64 registers, reusing registers after their
last read so batch evaluation stays cache-friendly.  Shared subtrees compile
exactly once.

The instruction encoding is shared with both execution backends (the numpy
fallback in ``_kernels.pyvm`` and the compiled core in ``_kernels._native``):
each row of ``code`` is ``[opcode, a, b, out]`` where ``a``/``b`` index
registers, the constant table, or the variable columns depending on opcode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalDomainError
from .expr import BinOp, Expression, Func, Neg, Node, Num, Param, Var, to_text

__all__ = ["Program", "compile_expr", "OP"]


class OP:
    CONST = 0   # out <- consts[a]
    VAR = 1     # out <- point[a]          (0-based variable column)
    NEG = 2     # out <- -reg[a]
    ADD = 3
    SUB = 4
    MUL = 5
    DIV = 6
    POW = 7
    EXP = 8
    LOG = 9
    SQRT = 10
    ABS = 11
    MIN = 12
    MAX = 13


_BIN = {"+": OP.ADD, "-": OP.SUB, "*": OP.MUL, "/": OP.DIV, "^": OP.POW}
_FUN = {"exp": OP.EXP, "log": OP.LOG, "sqrt": OP.SQRT, "abs": OP.ABS,
        "min": OP.MIN, "max": OP.MAX}


@dataclass
class Program:
    """Flat register program for one scalar-valued expression of k variables."""

    code: np.ndarray          # (n_instr, 4) int32
    consts: np.ndarray        # float64 constant pool
    n_regs: int
    k: int
    result: int               # register holding the final value
    nodes: list = field(default_factory=list, repr=False)  # per-instruction AST node

    def __len__(self) -> int:
        return len(self.code)

    # Scalar reference interpreter.  The hot paths use the batch kernels; this
    # one exists for spot checks and precise error attribution.
    def run(self, point) -> float:
        regs = [0.0] * self.n_regs
        consts = self.consts
        for idx, (op, a, b, out) in enumerate(self.code):
            if op == OP.CONST:
                v = consts[a]
            elif op == OP.VAR:
                v = point[a]
            elif op == OP.NEG:
                v = -regs[a]
            elif op == OP.ADD:
                v = regs[a] + regs[b]
            elif op == OP.SUB:
                v = regs[a] - regs[b]
            elif op == OP.MUL:
                v = regs[a] * regs[b]
            elif op == OP.DIV:
                den = regs[b]
                if den == 0.0:
                    self._fail(idx, regs[a])
                v = regs[a] / den
            elif op == OP.POW:
                try:
                    v = math.pow(regs[a], regs[b])
                except (ValueError, OverflowError):
                    self._fail(idx, regs[a])
            elif op == OP.EXP:
                try:
                    v = math.exp(regs[a])
                except OverflowError:
                    self._fail(idx, regs[a])
            elif op == OP.LOG:
                if regs[a] <= 0.0:
                    self._fail(idx, regs[a])
                v = math.log(regs[a])
            elif op == OP.SQRT:
                if regs[a] < 0.0:
                    self._fail(idx, regs[a])
                v = math.sqrt(regs[a])
            elif op == OP.ABS:
                v = abs(regs[a])
            elif op == OP.MIN:
                v = min(regs[a], regs[b])
            else:
                v = max(regs[a], regs[b])
            if not math.isfinite(v):
                self._fail(idx, v)
            regs[out] = v
        return regs[self.result]

    def _fail(self, instr_index: int, value) -> None:
        node = self.nodes[instr_index]
        text = to_text(node) if node is not None else "<instruction>"
        if len(text) > 60:
            text = text[:57] + "..."
        raise EvalDomainError(
            f"invalid operation in {text!r} (value {value!r})", node, value
        )

    def explain_failure(self, point) -> EvalDomainError:
        """Re-run a failing point through the reference interpreter to get a
        node-precise error (used by the batch backends)."""
        try:
            self.run(point)
        except EvalDomainError as exc:
            return exc
        return EvalDomainError("non-finite result in batch evaluation")


def compile_expr(expr: Expression, params=None) -> Program:
    """Lower ``expr`` to a :class:`Program`, folding parameters to constants."""
    params = params or {}
    missing = expr.param_names - set(params)
    if missing:
        raise EvalDomainError(f"unbound parameters: {sorted(missing)}")

    order: list[Node] = []          # topological, children first
    seen: dict[int, int] = {}       # node id -> position in `order`
    stack: list[tuple[Node, bool]] = [(expr.root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen[id(node)] = len(order)
            order.append(node)
            continue
        stack.append((node, True))
        if isinstance(node, Neg):
            stack.append((node.arg, False))
        elif isinstance(node, BinOp):
            stack.append((node.rhs, False))
            stack.append((node.lhs, False))
        elif isinstance(node, Func):
            for a in reversed(node.args):
                stack.append((a, False))

    # last position at which each node's value is read
    last_use = {i: i for i in range(len(order))}
    for pos, node in enumerate(order):
        children = ()
        if isinstance(node, Neg):
            children = (node.arg,)
        elif isinstance(node, BinOp):
            children = (node.lhs, node.rhs)
        elif isinstance(node, Func):
            children = node.args
        for child in children:
            last_use[seen[id(child)]] = pos

    consts: list[float] = []
    const_index: dict[float, int] = {}

    def intern_const(value: float) -> int:
        got = const_index.get(value)
        if got is None:
            got = const_index[value] = len(consts)
            consts.append(value)
        return got

    code: list[tuple[int, int, int, int]] = []
    nodes: list[Node] = []
    reg_of: dict[int, int] = {}
    free: list[int] = []
    n_regs = 0

    def alloc() -> int:
        nonlocal n_regs
        if free:
            return free.pop()
        n_regs += 1
        return n_regs - 1

    expiry: dict[int, list[int]] = {}
    for pos, node in enumerate(order):
        expiry.setdefault(last_use[pos], []).append(pos)

    for pos, node in enumerate(order):
        if isinstance(node, Num):
            op, a, b = OP.CONST, intern_const(node.value), 0
        elif isinstance(node, Param):
            op, a, b = OP.CONST, intern_const(float(params[node.name])), 0
        elif isinstance(node, Var):
            op, a, b = OP.VAR, node.index - 1, 0
        elif isinstance(node, Neg):
            op, a, b = OP.NEG, reg_of[id(node.arg)], 0
        elif isinstance(node, BinOp):
            op, a, b = _BIN[node.op], reg_of[id(node.lhs)], reg_of[id(node.rhs)]
        elif isinstance(node, Func):
            op = _FUN[node.name]
            a = reg_of[id(node.args[0])]
            b = reg_of[id(node.args[1])] if len(node.args) == 2 else 0
        else:  # pragma: no cover
            raise TypeError(f"unknown node {node!r}")
        # free registers whose last read is this instruction (before writing,
        # so an operand register can be reused as the output)
        for src_pos in expiry.get(pos, ()):
            if src_pos != pos:
                reg = reg_of.get(id(order[src_pos]))
                if reg is not None:
                    free.append(reg)
        out = alloc()
        reg_of[id(node)] = out
        code.append((op, a, b, out))
        nodes.append(node)

    code_arr = np.asarray(code, dtype=np.int32).reshape(len(code), 4)
    return Program(
        code=code_arr,
        consts=np.asarray(consts, dtype=np.float64),
        n_regs=max(n_regs, 1),
        k=expr.k,
        result=reg_of[id(expr.root)],
        nodes=nodes,
    )
