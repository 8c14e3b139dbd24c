"""Difference-equation specifications, fixed points, and normalization.

A :class:`MapSpec` is a scalar recursion x_{n+1} = F(x_n, ..., x_{n-k+1})
with a domain and named parameters.  Analysis always happens on a
:class:`NormalizedMap` whose fixed point sits at 1 (obtained by the scaling
substitution x = x̄·y, or by a unit translation for the linear examples whose
fixed point is 0).  The bundled catalogue provides every worked example used
by the test-suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import (
    EvalDomainError,
    FixedPointError,
    MultipleRootsError,
    PreconditionError,
    StabcertError,
)
from .expr import Expression, Var, parse, substitute
from .numerics import bisect_on, eval_dual_batch
from .program import compile_expr

__all__ = [
    "MapSpec",
    "NormalizedMap",
    "find_fixed_point",
    "find_fixed_points",
    "normalize",
    "normalize_shift",
    "prepare",
    "catalogue",
    "get_map",
    "catalogue_names",
    "sample_params",
    "load_mapspec",
    "mapspec_to_dict",
]

FIXED_POINT_RTOL = 1e-10
SCAN_CELLS = 4096


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass
class MapSpec:
    """A k-dimensional scalar difference equation with metadata.

    ``domain`` is the mathematical domain (upper end may be ``inf``);
    ``window`` is the finite box used by grid instruments, defaulting to the
    domain truncated at 10·x̄ when unbounded.
    """

    name: str
    k: int
    f: Expression
    params: dict = field(default_factory=dict)
    domain: tuple = (0.0, math.inf)
    window: tuple | None = None
    fixed_point: float | None = None
    constraints: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"invalid domain {self.domain}")
        if self.fixed_point is not None:
            self.check_fixed_point(self.fixed_point)

    def diag_value(self, x: float) -> float:
        return self.f.eval([x] * self.k, self.params)

    def check_fixed_point(self, xbar: float) -> None:
        residual = abs(self.diag_value(xbar) - xbar)
        if residual > FIXED_POINT_RTOL * max(1.0, abs(xbar)):
            raise PreconditionError(
                f"{self.name}: fixed-point residual {residual:.3e} at {xbar!r}"
            )

    def grid_window(self, xbar: float | None = None) -> tuple:
        if self.window is not None:
            return self.window
        lo, hi = self.domain
        if math.isinf(hi):
            if xbar is None or xbar <= 0:
                raise ValueError("unbounded domain needs a positive fixed point "
                                 "to derive a grid window")
            hi = 10.0 * xbar
        return (lo, hi)


@dataclass
class NormalizedMap:
    """Map conjugated so the fixed point is exactly 1.

    ``lag`` is the expansion index: the recursion reads
    y_{n+1} = f(y_{n-lag}, ..., y_{n-lag-k+1}), so lag=0 is the base map.
    ``f0`` always holds the lag-0 expression (needed to seed orbit history).
    Treat instances as immutable.
    """

    base: MapSpec
    xbar: float
    f: Expression
    k: int
    lag: int = 0
    f0: Expression | None = None
    mode: str = "scale"              # "scale" (y = x/x̄) or "shift" (y = x - x̄ + 1)
    domain: tuple = (0.0, math.inf)
    window: tuple = (0.0, 10.0)

    def __post_init__(self):
        if self.f0 is None:
            self.f0 = self.f
        self._program = None
        self._program0 = None

    @property
    def params(self) -> dict:
        return self.base.params

    @property
    def program(self):
        if self._program is None:
            self._program = compile_expr(self.f, self.params)
        return self._program

    @property
    def program0(self):
        if self._program0 is None:
            self._program0 = (
                self.program if self.f0 is self.f else compile_expr(self.f0, self.params)
            )
        return self._program0

    def value(self, point) -> float:
        return self.f.eval(point, self.params)

    def values(self, pts: np.ndarray) -> np.ndarray:
        return _kernels.eval_batch(self.program, np.asarray(pts, dtype=float))

    def value_xy(self, x, y) -> np.ndarray:
        """Batch evaluation for k=2 from coordinate arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        return self.values(pts).reshape(x.shape)

    def dual(self, point):
        return self.f.eval_dual(point, self.params)

    def dual_batch(self, pts: np.ndarray):
        return eval_dual_batch(self.f, pts, self.params)

    def grad_fp(self) -> np.ndarray:
        return self.dual([1.0] * self.k).partials

    def diagonal_expression(self) -> Expression:
        """F(t, t, ..., t) as a one-variable expression."""
        mapping = {i: Var(1) for i in range(2, self.k + 1)}
        out = substitute(self.f, var_map=mapping) if mapping else self.f
        return out.with_k(1)

    def describe(self) -> str:
        tag = f"expansion j={self.lag} of " if self.lag else ""
        return f"{tag}{self.base.name} (x̄={self.xbar:g})"


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------

def _diag_program(m: MapSpec):
    mapping = {i: Var(1) for i in range(2, m.k + 1)}
    diag = substitute(m.f, var_map=mapping) if mapping else m.f
    return compile_expr(diag.with_k(1), m.params)


def find_fixed_points(m: MapSpec, scan_cells: int = SCAN_CELLS) -> list:
    """All interior roots of F(x,..,x) - x on the grid window, refined by
    bisection.  Roots landing on the window boundary are excluded."""
    prog = _diag_program(m)
    lo, hi = m.grid_window(m.fixed_point)
    xs = np.linspace(lo, hi, scan_cells + 1)
    try:
        residual = _kernels.eval_batch(prog, xs[:, None]) - xs
    except EvalDomainError as exc:
        raise FixedPointError(
            f"{m.name}: diagonal residual not finite on the scan grid: {exc}"
        ) from exc
    roots = []
    sign = np.sign(residual)
    for i in range(scan_cells):
        a, b = xs[i], xs[i + 1]
        fa, fb = residual[i], residual[i + 1]
        if fa == 0.0:
            if i > 0:
                roots.append(float(a))
            continue
        if sign[i] * sign[i + 1] < 0:
            fn = lambda t: _kernels.eval_batch(prog, np.asarray(t)[:, None]) - np.asarray(t)
            root = float(bisect_on(fn, np.array([a]), np.array([b]))[0])
            roots.append(root)
    deduped = []
    for r in roots:
        if not deduped or abs(r - deduped[-1]) > 1e-9 * max(1.0, abs(r)):
            deduped.append(r)
    return deduped


def find_fixed_point(m: MapSpec, expect_unique: bool = True,
                     scan_cells: int = SCAN_CELLS) -> float:
    """The unique interior fixed point of ``m`` (see :func:`find_fixed_points`)."""
    roots = find_fixed_points(m, scan_cells)
    if not roots:
        raise FixedPointError(f"{m.name}: no interior fixed point found in "
                              f"{m.grid_window(m.fixed_point)}")
    if len(roots) > 1 and expect_unique:
        raise MultipleRootsError(
            f"{m.name}: {len(roots)} interior fixed points found: {roots}", roots
        )
    return roots[0]


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _check_unit_fixed_point(f: Expression, params, k: int, name: str) -> None:
    value = f.eval([1.0] * k, params)
    if abs(value - 1.0) > 1e-10:
        raise PreconditionError(
            f"{name}: normalized map has f(1,..,1) = {value!r}, expected 1"
        )


def normalize(m: MapSpec, xbar: float) -> NormalizedMap:
    """Scale substitution x = x̄·y; requires x̄ > 0.

    The returned map satisfies f0(1,..,1) = 1 within 1e-10 (checked).
    """
    if xbar <= 0:
        raise PreconditionError(
            f"normalize needs a positive fixed point, got {xbar!r}"
            + ("; use normalize_shift for a fixed point at 0" if xbar == 0 else "")
        )
    m.check_fixed_point(xbar)
    from .expr import BinOp, Num

    var_map = {i: BinOp("*", Num(xbar), Var(i)) for i in range(1, m.k + 1)}
    inner = substitute(m.f, var_map=var_map, k=m.k)
    f0 = Expression(BinOp("/", inner.root, Num(xbar)), m.k)
    _check_unit_fixed_point(f0, m.params, m.k, m.name)
    lo, hi = m.domain
    wlo, whi = m.grid_window(xbar)
    return NormalizedMap(
        base=m,
        xbar=xbar,
        f=f0,
        k=m.k,
        domain=(lo / xbar, hi / xbar if math.isfinite(hi) else math.inf),
        window=(wlo / xbar, whi / xbar),
    )


def normalize_shift(m: MapSpec, xbar: float = 0.0) -> NormalizedMap:
    """Translation y = x - x̄ + 1 for maps whose fixed point is not positive
    (the linear examples).  Conjugation by a translation preserves the
    dynamics and the gradient at the fixed point exactly."""
    m.check_fixed_point(xbar)
    from .expr import BinOp, Num

    shift = xbar - 1.0
    var_map = {
        i: (BinOp("+", Var(i), Num(shift)) if shift != 0.0 else Var(i))
        for i in range(1, m.k + 1)
    }
    inner = substitute(m.f, var_map=var_map, k=m.k)
    f0 = Expression(BinOp("-", inner.root, Num(shift)), m.k)
    _check_unit_fixed_point(f0, m.params, m.k, m.name)
    lo, hi = m.domain
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise PreconditionError("shift normalization needs a finite domain")
    return NormalizedMap(
        base=m,
        xbar=xbar,
        f=f0,
        k=m.k,
        mode="shift",
        domain=(lo - shift, hi - shift),
        window=(lo - shift, hi - shift),
    )


def prepare(m: MapSpec) -> NormalizedMap:
    """Solve for the fixed point if unset, then normalize appropriately."""
    xbar = m.fixed_point
    if xbar is None:
        xbar = find_fixed_point(m)
        m = replace(m, fixed_point=xbar)
    if xbar > 0:
        return normalize(m, xbar)
    return normalize_shift(m, xbar)


# ---------------------------------------------------------------------------
# Catalogue
# ---------------------------------------------------------------------------

@dataclass
class _Entry:
    name: str
    k: int
    text: str
    defaults: dict
    domain: tuple = (0.0, math.inf)
    window: tuple | None = None
    fixed_point: float | None = 1.0
    constraints: dict = field(default_factory=dict)
    notes: str = ""
    resolve: object = None   # params -> params (derived parameters)
    draw: object = None      # rng -> params (admissible random draw)

    def build(self, params: dict | None = None) -> MapSpec:
        merged = dict(self.defaults)
        merged.update(params or {})
        if self.resolve is not None:
            merged = self.resolve(merged)
        fixed_point = merged.pop("__fixed_point__", self.fixed_point)
        expr = parse(self.text, self.k, tuple(merged))
        return MapSpec(
            name=self.name,
            k=self.k,
            f=expr,
            params=merged,
            domain=self.domain,
            window=self.window,
            fixed_point=fixed_point,
            constraints=dict(self.constraints),
            notes=self.notes,
        )


def _resolve_mobius_rational(params: dict) -> dict:
    p = dict(params)
    a = p["a"]
    if a <= 1:
        raise StabcertError("mobius-rational-a requires a > 1")
    p["b"] = 0.5 * (a - 1.0)
    return p


def _bh_b_from_a(a: float) -> float:
    # unique positive root of b^3 + (4-a) b^2 + 2 (2-a) b - a = 0
    poly = lambda b: ((b + (4.0 - a)) * b + 2.0 * (2.0 - a)) * b - a
    hi = 1.0
    while poly(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise StabcertError(f"bh-product: no positive root for a={a!r}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _resolve_bh(params: dict) -> dict:
    p = dict(params)
    a = p["a"]
    if a <= 0:
        raise StabcertError("bh-product requires a > 0")
    if "b" not in p:
        p["b"] = _bh_b_from_a(a)
    return p


def _resolve_stocking(params: dict) -> dict:
    p = dict(params)
    h = p.get("h", 1.0)
    if h <= 0:
        raise StabcertError("ricker-stocking requires h > 0")
    p["h"] = h
    xbar = p.pop("xbar", None)
    if xbar is not None:
        if xbar <= h:
            raise StabcertError("ricker-stocking requires x̄ > h")
        p["b"] = xbar + math.log((xbar - h) / xbar)
        p["__fixed_point__"] = float(xbar)
    elif "b" not in p:
        xbar = 1.5 * h
        p["b"] = xbar + math.log((xbar - h) / xbar)
        p["__fixed_point__"] = float(xbar)
    else:
        p["__fixed_point__"] = None  # solve numerically
    return p


def _resolve_bx(params: dict) -> dict:
    p = dict(params)
    b = p["b"]
    if b <= 1:
        raise StabcertError("bx-over-1py requires b > 1")
    p["__fixed_point__"] = b - 1.0
    return p


_LINEAR_NOTES = ("linear map with both coefficients -3/5; fixed point 0 is "
                 "handled by shift normalization")

_ENTRIES = [
    _Entry(
        name="ricker-delay",
        k=2,
        text="u1*exp(b*(1-u2))",
        defaults={"b": 0.5},
        constraints={"b": (0.0, 1.0)},
        notes="delayed Ricker map; positive fixed point 1 is LAS for 0<b<1",
        draw=lambda rng: {"b": rng.uniform(0.05, 0.95)},
    ),
    _Entry(
        name="linear-neg",
        k=2,
        text="-(3/5)*u1-(3/5)*u2",
        defaults={},
        domain=(-5.0, 5.0),
        fixed_point=0.0,
        notes=_LINEAR_NOTES,
        draw=lambda rng: {},
    ),
    _Entry(
        name="linear-neg2",
        k=2,
        text="-(3/5)*u1-(3/5)*u2",
        defaults={},
        domain=(-5.0, 5.0),
        fixed_point=0.0,
        notes=_LINEAR_NOTES + " (alias entry)",
        draw=lambda rng: {},
    ),
    _Entry(
        name="mobius-rational-a",
        k=2,
        text="a^2*u1/((1+b*u1)*(1+b*(u1+u2))+a*b*u1)",
        defaults={"a": 3.0},
        constraints={"a": (1.0, math.inf)},
        resolve=_resolve_mobius_rational,
        notes="rational map enveloped by 2-x; b = (a-1)/2 is derived",
        draw=lambda rng: {"a": rng.uniform(1.2, 6.0)},
    ),
    _Entry(
        name="bh-product",
        k=2,
        text="a*(b*u1+1)*(b*u2+1)/(b*(b*u1+2)*(b*u2+2))",
        defaults={"a": 2.0},
        constraints={"a": (0.0, math.inf)},
        resolve=_resolve_bh,
        notes="product map increasing in both arguments; b solves "
              "b^3+(4-a)b^2+2(2-a)b-a=0",
        draw=lambda rng: {"a": rng.uniform(0.5, 5.0)},
    ),
    _Entry(
        name="down-up-a",
        k=2,
        text="(a/2)*(u2+1)/(1+u2+(a-2)*u1^2)",
        defaults={"a": 3.0},
        constraints={"a": (2.0, math.inf)},
        notes="decreasing-increasing example; SLAS exactly for 2<a<10/3",
        draw=lambda rng: {"a": rng.uniform(2.1, 5.0)},
    ),
    _Entry(
        name="decdec",
        k=2,
        text="(b+1)^2/((b*u1+1)*(b*u2+1))",
        defaults={"b": 0.5},
        constraints={"b": (0.0, math.inf)},
        notes="decreasing-decreasing rational map; diagonal 2-cycle born at b=1",
        draw=lambda rng: {"b": rng.uniform(0.1, 3.0)},
    ),
    _Entry(
        name="decdec-exp1",
        k=2,
        text="(b+1)^2*(b*u2+1)/(b*(b+1)^2+(b*u1+1)*(b*u2+1))",
        defaults={"b": 0.5},
        constraints={"b": (0.0, math.inf)},
        notes="first expansion of decdec, decreasing-increasing",
        draw=lambda rng: {"b": rng.uniform(0.1, 3.0)},
    ),
    _Entry(
        name="ricker-stocking",
        k=2,
        text="u1*exp(b-u2)+h",
        defaults={"h": 1.0},
        domain=(0.0, math.inf),
        fixed_point=None,
        constraints={"h": (0.0, math.inf), "b": (-math.inf, math.inf)},
        resolve=_resolve_stocking,
        notes="Ricker with constant stocking h; pass xbar=... to derive b; "
              "local stability threshold x̄ < (h+sqrt(h^2+4h))/2",
        draw=lambda rng: {"h": rng.uniform(0.5, 2.0),
                          "xbar": None},  # filled in sample_params
    ),
    _Entry(
        name="bx-over-1py",
        k=2,
        text="b*u1/(1+u2)",
        defaults={"b": 2.0},
        constraints={"b": (1.0, math.inf)},
        resolve=_resolve_bx,
        notes="embedding inequalities are vacuous for this map; fixed point b-1",
        draw=lambda rng: {"b": rng.uniform(1.2, 4.0)},
    ),
]

_BY_NAME = {e.name: e for e in _ENTRIES}


def catalogue_names() -> list:
    return [e.name for e in _ENTRIES]


def catalogue() -> list:
    """All bundled example maps with their default parameters."""
    return [e.build() for e in _ENTRIES]


def get_map(name: str, params: dict | None = None) -> MapSpec:
    entry = _BY_NAME.get(name)
    if entry is None:
        raise StabcertError(
            f"unknown catalogue map {name!r}; available: {', '.join(catalogue_names())}"
        )
    return entry.build(params)


def sample_params(name: str, rng: np.random.Generator) -> dict:
    """An admissible random parameter draw for a catalogue entry."""
    entry = _BY_NAME.get(name)
    if entry is None:
        raise StabcertError(f"unknown catalogue map {name!r}")
    if entry.draw is None:
        return {}
    params = entry.draw(rng)
    if name == "ricker-stocking":
        h = params["h"]
        params["xbar"] = h + rng.uniform(0.1, 0.6) * h
    return params


# ---------------------------------------------------------------------------
# JSON spec files
# ---------------------------------------------------------------------------

def load_mapspec(source) -> MapSpec:
    """Load a map from a JSON object/file:
    ``{"name", "k", "expr", "params": {..}, "domain": [lo, hi], "fixed_point"}``.
    ``hi`` may be null for an unbounded domain; optional ``"window": [lo, hi]``.
    """
    if isinstance(source, (str, bytes)):
        data = json.loads(source)
    elif hasattr(source, "read"):
        data = json.load(source)
    else:
        data = dict(source)
    unknown = set(data) - {"name", "k", "expr", "params", "domain", "fixed_point",
                           "window"}
    if unknown:
        raise StabcertError(f"unknown map-spec keys: {sorted(unknown)}")
    k = int(data["k"])
    params = {str(n): float(v) for n, v in (data.get("params") or {}).items()}
    expr = parse(data["expr"], k, tuple(params))
    lo, hi = data.get("domain", [0.0, None])
    domain = (float(lo), math.inf if hi is None else float(hi))
    window = tuple(float(v) for v in data["window"]) if data.get("window") else None
    fp = data.get("fixed_point")
    return MapSpec(
        name=str(data.get("name", "user-map")),
        k=k,
        f=expr,
        params=params,
        domain=domain,
        window=window,
        fixed_point=None if fp is None else float(fp),
    )


def mapspec_to_dict(m: MapSpec) -> dict:
    lo, hi = m.domain
    return {
        "name": m.name,
        "k": m.k,
        "expr": str(m.f),
        "params": dict(m.params),
        "domain": [lo, None if math.isinf(hi) else hi],
        "fixed_point": m.fixed_point,
    }
