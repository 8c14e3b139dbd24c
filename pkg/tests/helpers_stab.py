"""Shared test helpers: a seeded random-expression generator with benign
numerics, and the cross-module property checks reused by the acceptance
gate."""

from __future__ import annotations

import numpy as np

from stabcert import envelope2d, mapdef, onedim, spectral
from stabcert.expr import BinOp, Expression, Func, Neg, Num, Var

# smooth operations only; kinked ones (abs/min/max) are added with
# kink-avoidance rejection at the evaluation point
_SMOOTH_UNARY = ("exp", "sqrt", "log")


def random_expression(rng: np.random.Generator, k: int, depth: int = 3,
                      kinks: bool = True) -> Expression:
    """A random expression tree with coefficients scaled to stay tame on
    points near 1."""

    def leaf():
        if rng.random() < 0.65:
            return Var(int(rng.integers(1, k + 1)))
        return Num(float(np.round(rng.uniform(0.3, 2.2), 3)))

    def positive(d):
        # subexpression guaranteed positive on positive points
        if d <= 0:
            return BinOp("+", Num(float(np.round(rng.uniform(0.5, 1.5), 3))),
                         Func("abs", (leaf(),))) if kinks else BinOp(
                "+", Num(1.0), BinOp("*", leaf(), leaf()))
        return BinOp("+", Num(0.5), BinOp("*", node(d - 1), node(d - 1)))

    def node(d):
        if d <= 0:
            return leaf()
        roll = rng.random()
        if roll < 0.2:
            return BinOp(rng.choice(["+", "-"]), node(d - 1), node(d - 1))
        if roll < 0.4:
            return BinOp("*", node(d - 1), leaf())
        if roll < 0.5:
            return BinOp("/", node(d - 1), BinOp("+", Num(1.0),
                                                 BinOp("*", leaf(), leaf())))
        if roll < 0.6:
            return BinOp("^", leaf(), Num(float(rng.integers(2, 4))))
        if roll < 0.7:
            return Func("exp", (BinOp("*", Num(float(np.round(
                rng.uniform(0.1, 0.6), 3))), node(d - 1)),))
        if roll < 0.78:
            return Func("log", (positive(d - 1),))
        if roll < 0.84:
            return Func("sqrt", (positive(d - 1),))
        if roll < 0.9:
            return Neg(node(d - 1))
        if kinks and roll < 0.95:
            return Func("abs", (node(d - 1),))
        if kinks:
            return Func(rng.choice(["min", "max"]), (node(d - 1), leaf()))
        return Neg(node(d - 1))

    return Expression(node(depth), k)


def sample_smooth_case(rng: np.random.Generator, k: int, h: float = 1e-6,
                       max_tries: int = 200):
    """(expression, point) pair where the dual gradient and a central
    finite-difference stencil are both well-behaved (bounded values, kinked
    operations far from their kinks)."""
    for _ in range(max_tries):
        expr = random_expression(rng, k)
        point = rng.uniform(0.4, 1.6, size=k)
        try:
            dual = expr.eval_dual(point)
            if dual.nonsmooth or abs(dual.value) > 1e3:
                continue
            if np.abs(dual.partials).max() > 1e3:
                continue
            ok = True
            for i in range(k):
                for s in (-1.0, 1.0):
                    shifted = point.copy()
                    shifted[i] += s * h
                    d2 = expr.eval_dual(shifted)
                    if d2.nonsmooth or abs(d2.value) > 1e4:
                        ok = False
                        break
                    # reject stencils whose gradient jumps (kink crossed)
                    if np.abs(d2.partials - dual.partials).max() > 1e-2:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                return expr, point
        except Exception:
            continue
    raise RuntimeError("could not draw a smooth random case")


def central_difference(expr: Expression, point, h: float = 1e-6) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    grad = np.empty(len(point))
    for i in range(len(point)):
        hi = point.copy()
        lo = point.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (expr.eval(hi) - expr.eval(lo)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Property suites shared with the acceptance gate
# ---------------------------------------------------------------------------

def check_dual_vs_fd(n_cases: int = 100, seed: int = 20240817) -> int:
    """Dual partials match central differences (step 1e-6) within 1e-6
    relative tolerance on random expressions and interior points."""
    rng = np.random.default_rng(seed)
    for case in range(n_cases):
        k = int(rng.integers(1, 4))
        expr, point = sample_smooth_case(rng, k)
        dual = expr.eval_dual(point)
        fd = central_difference(expr, point)
        scale = np.maximum(1.0, np.abs(dual.partials))
        err = np.abs(dual.partials - fd) / scale
        assert err.max() <= 1e-6, (
            f"case {case}: {expr} at {point}: dual {dual.partials} vs fd {fd}"
        )
    return n_cases


_CHAIN_RULE_MAPS = [
    ("ricker-delay", {"b": 0.5}),
    ("linear-neg", {}),
    ("linear-neg2", {}),
    ("mobius-rational-a", {"a": 3.0}),
    ("bh-product", {"a": 2.0}),
    ("down-up-a", {"a": 3.0}),
    ("decdec", {"b": 0.5}),
    ("decdec", {"b": 1.5}),
    ("decdec-exp1", {"b": 1.5}),
    ("ricker-stocking", {"h": 1.0, "xbar": 1.5}),
    ("bx-over-1py", {"b": 2.0}),
]


def check_chain_rule_vs_recursion(j_max: int = 6) -> int:
    """Gradient of the composed expansion DAG equals the companion-matrix
    recursion (J^t)^j V_0 within 1e-9 over the catalogue."""
    checked = 0
    for name, params in _CHAIN_RULE_MAPS:
        nm = mapdef.prepare(mapdef.get_map(name, params))
        v0 = spectral.gradient(nm)
        vs = spectral.v_sequence(v0, j_max)
        for j in range(j_max + 1):
            fj = spectral.expand(nm, j)
            got = spectral.gradient(fj).a
            assert np.abs(got - vs[j].a).max() <= 1e-9, (name, params, j)
            checked += 1
    return checked


_OMEGA_CLASS_MAPS = [
    ("bh-product", {"a": 2.0}),          # (up, up)
    ("down-up-a", {"a": 3.0}),           # (down, up)
    ("decdec", {"b": 0.5}),              # (down, down)
    ("ricker-stocking", {"h": 1.0, "xbar": 1.5}),   # (up, down)
]


def check_omega_inside_region(grid_n: int = 256) -> int:
    """Every grid point of the embedding inequality region also satisfies
    strict region membership (zero violations)."""
    from stabcert import embedding

    total = 0
    for name, params in _OMEGA_CLASS_MAPS:
        nm = mapdef.prepare(mapdef.get_map(name, params))
        profile = embedding.monotonicity_profile(nm)
        omega = embedding.embedding_region_omega(nm, profile, grid_n=grid_n)
        xs = omega.xs[omega.in_omega]
        ys = omega.ys[omega.in_omega]
        if len(xs) == 0:
            continue
        values = nm.value_xy(xs, ys)
        alpha = np.minimum(xs, ys)
        beta = np.maximum(xs, ys)
        strict = (values > alpha) & (values < beta)
        n_bad = int((~strict).sum())
        assert n_bad == 0, f"{name}: {n_bad} region violations"
        total += len(xs)
    return total


def check_envelope_inherited(seed: int = 0, n_samples: int = 100_000) -> int:
    """A map enveloped under the definition stays enveloped for its
    expansions (same candidate, same sampler seed)."""
    cases = [
        ("mobius-rational-a", {"a": 3.0}, "max(2-u1,0)"),
        ("decdec-exp1", {"b": 1.5}, "(b+1)/(b*u1+1)"),
    ]
    checked = 0
    for name, params, g_text in cases:
        nm = mapdef.prepare(mapdef.get_map(name, params))
        g = onedim.expr_map(g_text, envelope2d.envelope_window(nm), nm.params,
                            source="user")
        base = envelope2d.check_definition_envelope(
            nm, g, n_samples=n_samples, seed=seed)
        assert base.passed, f"{name}: base map not enveloped"
        for j in (1, 2):
            fj = spectral.expand(nm, j)
            rep = envelope2d.check_definition_envelope(
                fj, g, n_samples=n_samples, seed=seed)
            assert rep.passed, f"{name}: expansion {j} lost the envelope"
            checked += 1
    return checked


def check_decdec_pseudo_equivalence(b_values=(0.5, 0.9, 1.1, 1.5)) -> int:
    """Doubly-decreasing equivalence: pseudo-fixed points exist iff the
    diagonal one-dimensional map has a 2-cycle."""
    from stabcert import embedding

    for b in b_values:
        nm = mapdef.prepare(mapdef.get_map("decdec", {"b": b}))
        cycles = onedim.find_two_cycles(onedim.diagonal_map(nm))
        pseudo = embedding.pseudo_fixed_points(nm)
        assert bool(pseudo) == cycles.has_cycles, (
            f"b={b}: pseudo={len(pseudo)} cycles={len(cycles.cycles)}"
        )
        if pseudo and cycles.cycles:
            p, q = cycles.cycles[0]
            assert abs(pseudo[0].x - p) < 1e-8 and abs(pseudo[0].y - q) < 1e-8
    return len(b_values)
