"""One-dimensional candidate maps and their dynamics.

Global stability of the multidimensional recursion is certified through a
decreasing one-dimensional map g sharing the fixed point.  This module
builds such candidates (calibrated Möbius compositions, the canonical
rational families, diagonals, user expressions, tabulated implicit curves),
and analyses them: fixed-point uniqueness, derivative at the fixed point,
negative-feedback geometry, 2-cycles, and the one-dimensional
local-implies-global verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from . import _kernels
from .errors import EvalDomainError, PreconditionError
from .expr import BinOp, Expression, Num, Var, parse, substitute
from .mapdef import NormalizedMap
from .numerics import bisect_on
from .program import compile_expr
from .spectral import GradientVector

__all__ = [
    "MobiusParams",
    "OneDimMap",
    "TwoCycleReport",
    "OneDimVerdict",
    "CheckResult",
    "calibrate_mobius",
    "mobius_phi",
    "compose_g",
    "expr_map",
    "table_map",
    "implicit_compose_map",
    "diagonal_map",
    "canonical_phi1",
    "canonical_phi2",
    "self_inverse_mobius",
    "g_prime_at_fixed_point",
    "negative_feedback_check",
    "find_two_cycles",
    "gas_1d",
    "self_inverse_envelope_check",
]

FP_BAND = 1e-6  # exclusion band around the fixed point for strict checks


# ---------------------------------------------------------------------------
# Candidate map representation
# ---------------------------------------------------------------------------

@dataclass
class OneDimMap:
    """A scalar map with one of three backends:

    - ``expr``: closed-form expression in ``u1`` (+ bound parameters),
    - ``table``: monotone piecewise-cubic interpolant through knots,
    - ``compose``: x -> F(phi(x), x) for a two-argument map F.
    """

    domain: tuple
    fixed_point: float = 1.0
    source: str = "user"
    expr: Expression | None = None
    params: dict = field(default_factory=dict)
    knots: tuple | None = None
    knot_slopes: np.ndarray | None = None   # exact dy/dx at knots (Hermite)
    compose: tuple | None = None     # (NormalizedMap F, OneDimMap phi)

    def __post_init__(self):
        self._program = None
        self._interp = None
        self._deriv = None

    # -- evaluation ----------------------------------------------------------

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        flat = np.ravel(xs)
        if self.expr is not None:
            if self._program is None:
                self._program = compile_expr(self.expr, self.params)
            out = _kernels.eval_batch(self._program, flat[:, None])
        elif self.knots is not None:
            out = self._interpolant()(flat)
        else:
            nm, phi = self.compose
            inner = phi.values(flat)
            out = nm.values(np.column_stack([inner, flat]))
        return out.reshape(xs.shape)

    def __call__(self, x: float) -> float:
        return float(self.values(np.asarray([x]))[0])

    def derivative_at(self, x: float) -> float:
        if self.expr is not None:
            dual = self.expr.eval_dual([x], self.params)
            if dual.nonsmooth:
                raise EvalDomainError(
                    f"map not differentiable at {x!r} (abs/min/max kink)"
                )
            return float(dual.partials[0])
        if self.knots is not None:
            if self._deriv is None:
                self._deriv = self._interpolant().derivative()
            return float(self._deriv(x))
        nm, phi = self.compose
        inner = phi(x)
        dual = nm.dual([inner, x])
        return float(dual.partials[0] * phi.derivative_at(x) + dual.partials[1])

    def derivatives(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.knots is not None:
            if self._deriv is None:
                self._deriv = self._interpolant().derivative()
            return np.asarray(self._deriv(xs), dtype=float)
        if self.expr is not None:
            from .numerics import eval_dual_batch

            _, partials, _ = eval_dual_batch(self.expr, xs[:, None], self.params)
            return partials[:, 0]
        nm, phi = self.compose
        inner = phi.values(xs)
        _, partials, _ = nm.dual_batch(np.column_stack([inner, xs]))
        return partials[:, 0] * phi.derivatives(xs) + partials[:, 1]

    def _interpolant(self):
        if self._interp is None:
            x, y = self.knots
            if self.knot_slopes is not None:
                self._interp = CubicHermiteSpline(x, y, self.knot_slopes,
                                                  extrapolate=True)
            else:
                self._interp = PchipInterpolator(x, y, extrapolate=True)
        return self._interp

    # -- metadata -------------------------------------------------------------

    def check_shares_fixed_point(self, tol: float = 1e-10) -> None:
        value = self(self.fixed_point)
        if abs(value - self.fixed_point) > tol:
            raise PreconditionError(
                f"candidate map moves the fixed point: g({self.fixed_point}) = {value!r}"
            )

    def decreasing_on_grid(self, grid_n: int = 512):
        """(strictly_decreasing, non_increasing) on a uniform domain grid."""
        xs = np.linspace(self.domain[0], self.domain[1], grid_n)
        d = self.derivatives(xs)
        return bool((d < 0).all()), bool((d <= 1e-10).all() and (d < 0).any())

    def to_dict(self) -> dict:
        out = {
            "domain": [float(self.domain[0]), float(self.domain[1])],
            "fixed_point": float(self.fixed_point),
            "source": self.source,
        }
        if self.expr is not None:
            out["expr"] = str(self.expr)
            if self.params:
                out["params"] = {k: float(v) for k, v in self.params.items()}
        elif self.knots is not None:
            out["knots"] = len(self.knots[0])
        else:
            out["compose"] = {
                "map": self.compose[0].describe(),
                "inner": self.compose[1].to_dict(),
            }
        return out


def expr_map(text_or_expr, domain, params=None, fixed_point: float = 1.0,
             source: str = "user") -> OneDimMap:
    params = dict(params or {})
    if isinstance(text_or_expr, Expression):
        expr = text_or_expr
    else:
        expr = parse(text_or_expr, 1, tuple(params))
    g = OneDimMap(domain=tuple(domain), fixed_point=fixed_point, source=source,
                  expr=expr, params=params)
    g.check_shares_fixed_point()
    return g


def table_map(x_knots, y_knots, slopes=None, fixed_point: float = 1.0,
              source: str = "implicit-phi") -> OneDimMap:
    """Monotone piecewise-cubic map through decreasing knots.

    With ``slopes`` (exact dy/dx at the knots) the interpolant is cubic
    Hermite; otherwise a monotone PCHIP fit.  Either way monotonicity of the
    result is verified on a refined sample.
    """
    x = np.asarray(x_knots, dtype=float)
    y = np.asarray(y_knots, dtype=float)
    if not (np.diff(x) > 0).all():
        raise PreconditionError("table knots must be strictly increasing in x")
    if not (np.diff(y) < 0).all():
        raise PreconditionError("tabulated map must be strictly decreasing")
    if slopes is not None:
        slopes = np.asarray(slopes, dtype=float)
        if (slopes > 0).any():
            raise PreconditionError("knot slopes of a decreasing map must be <= 0")
    g = OneDimMap(domain=(float(x[0]), float(x[-1])), fixed_point=fixed_point,
                  source=source, knots=(x, y), knot_slopes=slopes)
    if slopes is not None:
        # Hermite fits are not monotone by construction; verify and fall back
        mids = np.linspace(x[0], x[-1], 4 * len(x))
        if (g.derivatives(mids) > 1e-12).any():
            g = OneDimMap(domain=(float(x[0]), float(x[-1])),
                          fixed_point=fixed_point, source=source, knots=(x, y))
    return g


def implicit_compose_map(nm: NormalizedMap, phi: OneDimMap,
                         source: str = "implicit-phi") -> OneDimMap:
    if nm.k != 2:
        raise PreconditionError("composed candidates need a two-argument map")
    g = OneDimMap(domain=phi.domain, fixed_point=phi.fixed_point, source=source,
                  compose=(nm, phi))
    g.check_shares_fixed_point(tol=1e-7)
    return g


def diagonal_map(nm: NormalizedMap) -> OneDimMap:
    """g(t) = F(t, ..., t) on the grid window."""
    return expr_map(nm.diagonal_expression(), nm.window, nm.params,
                    source="diagonal")


# ---------------------------------------------------------------------------
# Möbius calibration
# ---------------------------------------------------------------------------

@dataclass
class MobiusParams:
    """Per-argument coefficients (b_j, c_j) of phi_j(t) = ((c_j - b_j + 1)
    + b_j t) / (1 + c_j t); each phi_j fixes 1 and has slope
    (b_j - c_j)/(1 + c_j) there."""

    b: np.ndarray
    c: np.ndarray
    mode: str = "B"               # "B" (column-sum calibration) or "epsilon"

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if (self.c <= 0).any():
            raise PreconditionError("Möbius calibration requires c_j > 0")

    @property
    def degenerate(self) -> np.ndarray:
        """phi_j fails the positive-coefficient convention when b_j <= 0
        (still a valid decreasing candidate on t >= 0; flagged only)."""
        return self.b <= 0.0

    def slopes_at_fixed_point(self) -> np.ndarray:
        return (self.b - self.c) / (1.0 + self.c)


def calibrate_mobius(v: GradientVector, B, c=None, mode: str = "B",
                     eps: float = 1e-3) -> MobiusParams:
    """Choose b_j so the composed map has negative slope at the fixed point:
    b_j = c_j - (1+c_j) B_j when a_j >= 0, b_j = c_j + (1+c_j) B_j when
    a_j < 0.  ``mode="epsilon"`` replaces B_j by a small constant."""
    a = v.a
    k = len(a)
    c = np.full(k, 1.0) if c is None else np.asarray(c, dtype=float)
    sign = np.where(a >= 0, -1.0, 1.0)
    if mode == "epsilon":
        b = c + sign * eps
    else:
        b = c + sign * (1.0 + c) * np.asarray(B, dtype=float)
    return MobiusParams(b=b, c=c, mode=mode)


def mobius_phi(b: float, c: float) -> Expression:
    """phi(t) = ((c - b + 1) + b t)/(1 + c t) as an expression in u1."""
    num = BinOp("+", Num(c - b + 1.0), BinOp("*", Num(b), Var(1)))
    den = BinOp("+", Num(1.0), BinOp("*", Num(c), Var(1)))
    return Expression(BinOp("/", num, den), 1)


def compose_g(fm: NormalizedMap, p: MobiusParams) -> OneDimMap:
    """g(t) = F_m(phi_1(t), ..., phi_k(t)); shares the fixed point 1."""
    if len(p.b) != fm.k:
        raise PreconditionError("one (b_j, c_j) pair per argument required")
    lo, hi = fm.window
    if 1.0 + p.c.max() * lo <= 0 or 1.0 + p.c.min() * lo <= 0:
        raise EvalDomainError(
            f"Möbius denominator vanishes on the domain (lo = {lo!r})"
        )
    var_map = {j: mobius_phi(p.b[j - 1], p.c[j - 1]).root for j in range(1, fm.k + 1)}
    g_expr = substitute(fm.f, var_map=var_map, k=1)
    g = expr_map(g_expr, (lo, hi), fm.params, source="mobius")
    return g


def canonical_phi1(a: float, domain) -> OneDimMap:
    """phi(x) = a(1+x)/(1+(2a-1)x); decreasing through (1,1) for a > 1."""
    num = BinOp("*", Num(a), BinOp("+", Num(1.0), Var(1)))
    den = BinOp("+", Num(1.0), BinOp("*", Num(2.0 * a - 1.0), Var(1)))
    return expr_map(Expression(BinOp("/", num, den), 1), domain,
                    source="canonical")


def canonical_phi2(a: float, domain) -> OneDimMap:
    """phi(x) = (a+1)/(ax+1); decreasing through (1,1) for a > 0."""
    num = Num(a + 1.0)
    den = BinOp("+", BinOp("*", Num(a), Var(1)), Num(1.0))
    return expr_map(Expression(BinOp("/", num, den), 1), domain,
                    source="canonical")


def self_inverse_mobius(a: float, domain) -> OneDimMap:
    """g(x) = (1 - a x)/(a - (2a - 1) x), a in [0, 1): a self-inverse
    decreasing Möbius map fixing 1."""
    num = BinOp("-", Num(1.0), BinOp("*", Num(a), Var(1)))
    den = BinOp("-", Num(a), BinOp("*", Num(2.0 * a - 1.0), Var(1)))
    return expr_map(Expression(BinOp("/", num, den), 1), domain,
                    source="self-inverse")


# ---------------------------------------------------------------------------
# Analysis of one-dimensional maps
# ---------------------------------------------------------------------------

def g_prime_at_fixed_point(g: OneDimMap) -> float:
    return g.derivative_at(g.fixed_point)


@dataclass
class CheckResult:
    passed: bool
    witnesses: list = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "witnesses": self.witnesses[:10],
                "detail": self.detail}


def negative_feedback_check(g: OneDimMap, grid_n: int = 1024) -> CheckResult:
    """(g(t) - t)(t - fp) < 0 strictly on a grid excluding the fixed-point
    band; witnesses are the violating abscissae."""
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    lo, hi = g.domain
    xs = np.linspace(lo, hi, grid_n)
    xs = xs[np.abs(xs - g.fixed_point) > FP_BAND]
    values = (g.values(xs) - xs) * (xs - g.fixed_point)
    bad = values >= 0.0
    below = [float(t) for t in xs[bad & (xs < g.fixed_point)][:5]]
    above = [float(t) for t in xs[bad & (xs > g.fixed_point)][:5]]
    witnesses = below + above
    return CheckResult(
        passed=not bad.any(),
        witnesses=witnesses,
        detail=f"max (g(t)-t)(t-fp) = {float(values.max()):.3e} on {len(xs)} points",
    )


@dataclass
class TwoCycleReport:
    cycles: list                    # [(p, q)] with p < q, g(p)=q, g(q)=p
    scan_resolution: int
    residual_bound: float
    continuum: bool = False
    min_h: float = math.inf         # min |g(g(x)) - x| away from roots
    near_fraction: float = 0.0

    @property
    def has_cycles(self) -> bool:
        return self.continuum or bool(self.cycles)

    def to_dict(self) -> dict:
        return {
            "cycles": [[float(p), float(q)] for p, q in self.cycles],
            "scan_resolution": self.scan_resolution,
            "residual_bound": self.residual_bound,
            "continuum": self.continuum,
            "min_h": None if math.isinf(self.min_h) else float(self.min_h),
            "near_fraction": self.near_fraction,
        }


def find_two_cycles(g: OneDimMap, grid_n: int = 8192) -> TwoCycleReport:
    """Scan h(x) = g(g(x)) - x for sign changes, refine by bisection, pair
    p with q = g(p) and deduplicate unordered pairs.  A continuum of
    near-roots (> 10% of cells) is flagged instead of paired."""
    lo, hi = g.domain
    xs = np.linspace(lo, hi, grid_n + 1)
    fp = g.fixed_point

    def h_of(t: np.ndarray) -> np.ndarray:
        return g.values(g.values(t)) - t

    h = h_of(xs)
    near = np.abs(h) < 1e-8
    near_fraction = float(near.mean())
    if near_fraction > 0.10:
        min_h = float(np.abs(h)[~near].min()) if (~near).any() else 0.0
        return TwoCycleReport([], grid_n, 1e-9, continuum=True, min_h=min_h,
                              near_fraction=near_fraction)

    roots = [float(xs[i]) for i in range(1, grid_n) if h[i] == 0.0]
    change = np.where(h[:-1] * h[1:] < 0.0)[0]
    if len(change):
        refined = bisect_on(h_of, xs[change], xs[change + 1])
        roots.extend(float(r) for r in refined)

    cycles = []
    for p in sorted(roots):
        if abs(p - fp) <= FP_BAND:
            continue
        q = g(p)
        if abs(p - q) <= FP_BAND:
            continue
        if abs(g(q) - p) > 1e-9:
            continue
        pair = (min(p, q), max(p, q))
        if not any(abs(pair[0] - c[0]) < 1e-8 and abs(pair[1] - c[1]) < 1e-8
                   for c in cycles):
            cycles.append(pair)

    keep = np.abs(xs - fp) > 1e-3 * (hi - lo)
    for p, q in cycles:
        keep &= np.abs(xs - p) > 1e-3 * (hi - lo)
        keep &= np.abs(xs - q) > 1e-3 * (hi - lo)
    min_h = float(np.abs(h)[keep].min()) if keep.any() else math.inf
    return TwoCycleReport(cycles, grid_n, 1e-9, min_h=min_h,
                          near_fraction=near_fraction)


@dataclass
class OneDimVerdict:
    gas: bool
    n_fixed_points: int
    derivative_at_fp: float
    two_cycles: TwoCycleReport
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "gas": self.gas,
            "n_fixed_points": self.n_fixed_points,
            "derivative_at_fp": float(self.derivative_at_fp),
            "two_cycles": self.two_cycles.to_dict(),
            "detail": self.detail,
        }


def count_fixed_points(g: OneDimMap, grid_n: int = 8192) -> int:
    lo, hi = g.domain
    xs = np.linspace(lo, hi, grid_n + 1)
    r = g.values(xs) - xs
    count = int(np.sum(r[1:-1] == 0.0))
    count += int(np.sum(r[:-1] * r[1:] < 0.0))
    return count


def gas_1d(g: OneDimMap, grid_n: int = 8192) -> OneDimVerdict:
    """Local-implies-global for one-dimensional maps on [0, H]: a unique
    fixed point, |g'| < 1 there, and no 2-cycle give global asymptotic
    stability.  Uniqueness and cycle absence are grid evidence, recorded in
    the verdict."""
    lo, hi = g.domain
    if lo < 0:
        raise PreconditionError("gas_1d expects a domain inside [0, inf)")
    n_fp = count_fixed_points(g, grid_n)
    gprime = g.derivative_at(g.fixed_point)
    cycles = find_two_cycles(g, grid_n)
    gas = (n_fp == 1) and abs(gprime) < 1.0 and not cycles.has_cycles
    detail = (f"fixed points on scan: {n_fp}; |g'(fp)| = {abs(gprime):.6g}; "
              f"2-cycles: {len(cycles.cycles)}"
              + (" (continuum)" if cycles.continuum else ""))
    return OneDimVerdict(gas, n_fp, gprime, cycles, detail)


def self_inverse_envelope_check(f: OneDimMap, g: OneDimMap,
                                grid_n: int = 4096) -> CheckResult:
    """Self-inverse enveloping test for one-dimensional maps: g∘g = id
    within 1e-8 and g strictly separates from f across the fixed point
    (g above f below it, g below f above it)."""
    if abs(f.fixed_point - g.fixed_point) > 1e-9:
        return CheckResult(False, [], "maps do not share the fixed point")
    lo = max(f.domain[0], g.domain[0])
    hi = min(f.domain[1], g.domain[1])
    xs = np.linspace(lo, hi, grid_n)
    fp = f.fixed_point
    gx = g.values(xs)
    ggx = g.values(gx)
    selfinv_bad = np.abs(ggx - xs) > 1e-8
    if selfinv_bad.any():
        return CheckResult(
            False,
            [float(t) for t in xs[selfinv_bad][:10]],
            f"g is not self-inverse (max |g(g(x))-x| = "
            f"{float(np.abs(ggx - xs).max()):.3e})",
        )
    fx = f.values(xs)
    below = xs < fp - FP_BAND
    above = xs > fp + FP_BAND
    bad = (below & (gx <= fx)) | (above & (gx >= fx))
    return CheckResult(
        passed=not bad.any(),
        witnesses=[float(t) for t in xs[bad][:10]],
        detail=f"separation checked on {int(below.sum() + above.sum())} points",
    )
