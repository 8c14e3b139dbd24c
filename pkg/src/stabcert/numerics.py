"""Shared numeric helpers: vectorised dual evaluation, bracketed root
refinement, and low-discrepancy sampling."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .errors import EvalDomainError
from .expr import BinOp, Expression, Func, Neg, Node, Num, Param, Var, eval_dual

__all__ = ["eval_dual_batch", "bisect_on", "halton_box"]


def eval_dual_batch(expr: Expression, pts: np.ndarray, params=None):
    """Vectorised forward-mode evaluation.

    Returns ``(values (N,), partials (N, k), nonsmooth mask (N,))``.  Raises
    :class:`EvalDomainError` (node-precise via the scalar path) if any point
    is invalid.  ``abs`` at exactly 0 takes subgradient 0 and is flagged.
    """
    params = params or {}
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, k = pts.shape
    if k != expr.k:
        raise ValueError(f"points have {k} columns, expected k={expr.k}")
    missing = expr.param_names - set(params)
    if missing:
        raise EvalDomainError(f"unbound parameters: {sorted(missing)}")

    nonsmooth = np.zeros(n, dtype=bool)
    memo = {}

    def go(node: Node):
        got = memo.get(id(node))
        if got is not None:
            return got
        d: np.ndarray | None  # None encodes identically-zero partials
        if isinstance(node, Num):
            v, d = np.full(n, node.value), None
        elif isinstance(node, Param):
            v, d = np.full(n, float(params[node.name])), None
        elif isinstance(node, Var):
            v = pts[:, node.index - 1].copy()
            d = np.zeros((n, k))
            d[:, node.index - 1] = 1.0
        elif isinstance(node, Neg):
            va, da = go(node.arg)
            v, d = -va, (None if da is None else -da)
        elif isinstance(node, BinOp):
            (va, da), (vb, db) = go(node.lhs), go(node.rhs)
            with np.errstate(all="ignore"):
                if node.op == "+":
                    v = va + vb
                    d = _add(da, db)
                elif node.op == "-":
                    v = va - vb
                    d = _add(da, None if db is None else -db)
                elif node.op == "*":
                    v = va * vb
                    d = _add(_scale(da, vb), _scale(db, va))
                elif node.op == "/":
                    v = va / vb
                    d = _scale(_add(da, _scale(db, -v)), 1.0 / vb)
                else:  # "^"
                    v = np.power(va, vb)
                    if db is None:
                        d = _scale(da, vb * np.power(va, vb - 1.0))
                    else:
                        d = _scale(
                            _add(_scale(db, np.log(va)), _scale(da, vb / va)), v
                        )
        elif isinstance(node, Func):
            va, da = go(node.args[0])
            with np.errstate(all="ignore"):
                if node.name == "exp":
                    v = np.exp(va)
                    d = _scale(da, v)
                elif node.name == "log":
                    v = np.log(va)
                    d = _scale(da, 1.0 / va)
                elif node.name == "sqrt":
                    v = np.sqrt(va)
                    d = _scale(da, 0.5 / v)
                elif node.name == "abs":
                    v = np.abs(va)
                    nonsmooth[va == 0.0] = True
                    sign = np.sign(va)
                    d = _scale(da, sign)
                else:  # min / max
                    vb, db = go(node.args[1])
                    pick_a = (va <= vb) if node.name == "min" else (va >= vb)
                    nonsmooth[va == vb] = True
                    v = np.where(pick_a, va, vb)
                    za = da if da is not None else np.zeros((n, k))
                    zb = db if db is not None else np.zeros((n, k))
                    d = np.where(pick_a[:, None], za, zb)
        else:  # pragma: no cover
            raise TypeError(f"unknown node {node!r}")
        memo[id(node)] = (v, d)
        return v, d

    values, partials = go(expr.root)
    if partials is None:
        partials = np.zeros((n, k))
    bad = ~(np.isfinite(values) & np.isfinite(partials).all(axis=1))
    if bad.any():
        first = int(np.argmax(bad))
        eval_dual(expr, pts[first], params)  # raises with node context
        raise EvalDomainError(f"non-finite dual evaluation at point {pts[first]}")
    return values, partials, nonsmooth


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _scale(d, factor):
    if d is None:
        return None
    if np.isscalar(factor):
        return d * factor
    return d * np.asarray(factor)[:, None]


def bisect_on(fn, lo: np.ndarray, hi: np.ndarray, iterations: int = 80):
    """Vectorised bisection on brackets ``[lo, hi]`` with a sign change.

    ``fn`` maps an array of abscissae to residuals.  Returns the midpoints
    after ``iterations`` halvings (2^-80 of the initial width).
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = fn(lo)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        left = np.sign(fmid) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fmid, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def halton_box(n: int, box, seed: int = 0) -> np.ndarray:
    """``n`` low-discrepancy points in the axis-aligned ``box``
    ``[(lo1, hi1), ...]``; deterministic for a given seed."""
    box = [(float(lo), float(hi)) for lo, hi in box]
    sampler = qmc.Halton(d=len(box), scramble=True, seed=seed)
    unit = sampler.random(n)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + unit * (hi - lo)
