"""Two-dimensional enveloping: region geometry and GAS certificates.

For k = 2 the plane splits into the region R where F(x, y) lies strictly
between its arguments and four complementary quadrants R1..R4.  A decreasing
curve through the fixed point whose graph stays inside R envelopes the map
(when the second argument is increasing), and an enveloping map free of
2-cycles upgrades local to global asymptotic stability.  This module
implements the region classification, the enveloping checks (definition
sampling, region-curve, and the increasing-decreasing implicit-curve route),
and the composite certificate pipeline.

All conclusions here are grid/sampling evidence with recorded resolutions,
never symbolic proofs; failed checks report witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import (
    MonotonicityProfile,
    embedding_gas_verdict,
    monotonicity_profile,
)
from .errors import PreconditionError
from .mapdef import NormalizedMap
from .numerics import bisect_on, halton_box
from .onedim import (
    OneDimMap,
    TwoCycleReport,
    calibrate_mobius,
    canonical_phi1,
    canonical_phi2,
    compose_g,
    count_fixed_points,
    diagonal_map,
    find_two_cycles,
    g_prime_at_fixed_point,
    implicit_compose_map,
    table_map,
)
from .spectral import Classification, SlasReport, column_sums_B, companion, expand, gradient, slas_index

__all__ = [
    "Slopes",
    "RegionSample",
    "RegionGrid",
    "EnvelopeCandidate",
    "EnvelopeReport",
    "Verdict",
    "slopes_M1_M2",
    "envelope_window",
    "classify_point",
    "region_grid",
    "check_definition_envelope",
    "check_envelope_via_R",
    "phi_from_implicit",
    "phi_inverse",
    "boundary_power_candidate",
    "check_envelope_incr_decr",
    "gas_certificate",
]

STRICT_MARGIN = 1e-12
FP_BAND = 1e-6
LABELS = ("R", "R1", "R2", "R3", "R4", "boundary", "fixed-point-band")


# ---------------------------------------------------------------------------
# Slopes of the implicit curves at the fixed point
# ---------------------------------------------------------------------------

@dataclass
class Slopes:
    """Slopes at the fixed point of y = F(x, y) (M1) and x = F(x, y) (M2)."""

    M1: float | None
    M2: float | None
    M1_defined: bool
    M2_defined: bool

    def to_dict(self) -> dict:
        return {
            "M1": self.M1 if self.M1_defined else None,
            "M2": self.M2 if self.M2_defined else None,
            "M1_defined": self.M1_defined,
            "M2_defined": self.M2_defined,
        }


def slopes_M1_M2(a1: float, a2: float) -> Slopes:
    """M1 = a1/(1 - a2), M2 = (1 - a1)/a2; undefined denominators are
    flagged.  Under the strong local condition |a1| + |a2| < 1 the slopes
    straddle the diagonal: |M1| < 1 < |M2| (asserted)."""
    m1_def = a2 != 1.0
    m2_def = a2 != 0.0
    m1 = float(a1 / (1.0 - a2)) if m1_def else None
    m2 = float((1.0 - a1) / a2) if m2_def else None
    if abs(a1) + abs(a2) < 1.0 and m1_def and m2_def:
        if not (abs(m1) < 1.0 < abs(m2)):
            raise AssertionError(
                f"slope ordering violated: |M1|={abs(m1)}, |M2|={abs(m2)} "
                f"with |a1|+|a2|={abs(a1) + abs(a2)} < 1"
            )
    return Slopes(m1, m2, m1_def, m2_def)


# ---------------------------------------------------------------------------
# Region classification
# ---------------------------------------------------------------------------

def envelope_window(nm: NormalizedMap, scale: float = 5.0) -> tuple:
    """Grid window for region work: the normalized window clipped to
    [1e-3, 2*scale] around the unit fixed point."""
    lo, hi = nm.window
    return (max(lo, 1e-3), min(hi, 2.0 * scale))


@dataclass
class RegionSample:
    x: float
    y: float
    value: float
    label: str


def _label_values(xs: np.ndarray, ys: np.ndarray, values: np.ndarray,
                  band: float = FP_BAND, margin: float = STRICT_MARGIN) -> np.ndarray:
    """Vectorised region labels; exactly one label per point."""
    labels = np.full(xs.shape, 5, dtype=np.int8)  # boundary
    in_band = (np.abs(xs - 1.0) <= band) & (np.abs(ys - 1.0) <= band)
    alpha = np.minimum(xs, ys)
    beta = np.maximum(xs, ys)
    diag = xs == ys
    off = ~diag
    strict_r = off & (values > alpha + margin) & (values < beta - margin)
    r1 = off & (ys < xs) & (values < ys - margin)
    r2 = (off & (xs < ys) & (values < xs - margin)) | (diag & (values < xs - margin))
    r3 = (off & (xs < ys) & (values > ys + margin)) | (diag & (values > xs + margin))
    r4 = off & (ys < xs) & (values > xs + margin)
    labels[strict_r] = 0
    labels[r1] = 1
    labels[r2] = 2
    labels[r3] = 3
    labels[r4] = 4
    labels[in_band] = 6
    return labels


def classify_point(fj: NormalizedMap, x: float, y: float,
                   band: float = FP_BAND,
                   margin: float = STRICT_MARGIN) -> RegionSample:
    """Label one point: fixed-point band, strict region R, quadrant R1..R4,
    or boundary.  Diagonal points off the fixed point go to the y >= x
    branch (R2/R3)."""
    if fj.k != 2:
        raise PreconditionError("region classification is defined for k = 2")
    value = float(fj.value([x, y]))
    idx = _label_values(np.array([x]), np.array([y]), np.array([value]),
                        band, margin)[0]
    return RegionSample(x, y, value, LABELS[idx])


@dataclass
class RegionGrid:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    labels: np.ndarray              # int8 indices into LABELS
    n: int
    window: tuple

    def counts(self) -> dict:
        out = {}
        for i, name in enumerate(LABELS):
            out[name] = int((self.labels == i).sum())
        return out

    def label_names(self) -> np.ndarray:
        return np.array(LABELS, dtype=object)[self.labels]

    def write_csv(self, stream) -> None:
        stream.write("x,y,value,label\r\n")
        names = self.label_names()
        for x, y, v, name in zip(self.xs, self.ys, self.values, names):
            stream.write(f"{float(x)!r},{float(y)!r},{float(v)!r},{name}\r\n")


def region_grid(fj: NormalizedMap, n: int = 512, window: tuple | None = None,
                band: float = FP_BAND, margin: float = STRICT_MARGIN) -> RegionGrid:
    """Uniform n x n region labelling over the envelope window.

    Row order is deterministic (x outer, y inner) for the CSV export.
    """
    if fj.k != 2:
        raise PreconditionError("region grids are defined for k = 2")
    if n < 16:
        raise ValueError("n must be >= 16")
    lo, hi = window or envelope_window(fj)
    axis = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    xs, ys = X.ravel(), Y.ravel()
    values = fj.value_xy(xs, ys)
    labels = _label_values(xs, ys, values, band, margin)
    return RegionGrid(xs=xs, ys=ys, values=values, labels=labels, n=n,
                      window=(lo, hi))


# ---------------------------------------------------------------------------
# Envelope candidates and reports
# ---------------------------------------------------------------------------

@dataclass
class EnvelopeCandidate:
    """A one-dimensional candidate with its decreasing-ness evidence.

    Flat tails (derivative exactly 0 on part of the domain) are accepted but
    flagged: the enveloping definition wants strictly decreasing maps, yet
    piecewise candidates like max(2-x, 0) are standard practice.
    """

    g: OneDimMap
    strictly_decreasing: bool
    non_increasing: bool
    grid_n: int = 512

    @classmethod
    def verified(cls, g: OneDimMap, grid_n: int = 512) -> "EnvelopeCandidate":
        strict, nonincr = g.decreasing_on_grid(grid_n)
        return cls(g=g, strictly_decreasing=strict, non_increasing=nonincr or strict,
                   grid_n=grid_n)

    @property
    def acceptable(self) -> bool:
        return self.non_increasing

    def to_dict(self) -> dict:
        out = self.g.to_dict()
        out["strictly_decreasing"] = self.strictly_decreasing
        out["non_increasing"] = self.non_increasing
        return out


@dataclass
class EnvelopeReport:
    passed: bool
    route: str                      # which check justified the conclusion
    candidate: dict
    n_checked: int
    n_witnesses: int
    witnesses: list = field(default_factory=list)   # first 10, for inspection
    meta: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "route": self.route,
            "candidate": self.candidate,
            "n_checked": self.n_checked,
            "n_witnesses": self.n_witnesses,
            "witnesses": self.witnesses[:10],
            "meta": self.meta,
            "notes": self.notes,
        }


def _candidate(g) -> EnvelopeCandidate:
    if isinstance(g, EnvelopeCandidate):
        return g
    return EnvelopeCandidate.verified(g)


def check_definition_envelope(f: NormalizedMap, g, n_samples: int = 100_000,
                              seed: int = 0, box: tuple | None = None,
                              margin: float = STRICT_MARGIN,
                              band: float = FP_BAND) -> EnvelopeReport:
    """Direct sampling check of the enveloping definition.

    For low-discrepancy tuples (x_1..x_k) in the box: whenever
    z = F(x_1..x_k) exits the open interval (alpha, beta) of its arguments,
    require g(beta) < z <= alpha or g(alpha) > z >= beta (inequalities with
    an absolute 1e-12 tolerance; tuples inside the fixed-point band are
    exempt).  Violating tuples are reported as witnesses.
    """
    cand = _candidate(g)
    if not cand.acceptable:
        raise PreconditionError("candidate map is not decreasing on its domain")
    gmap = cand.g
    if box is None:
        lo = max(envelope_window(f)[0], gmap.domain[0])
        hi = min(envelope_window(f)[1], gmap.domain[1])
        box = (lo, hi)
    lo, hi = box
    pts = halton_box(n_samples, [(lo, hi)] * f.k, seed=seed)
    z = f.values(pts)
    alpha = pts.min(axis=1)
    beta = pts.max(axis=1)
    in_band = np.abs(pts - 1.0).max(axis=1) <= band
    g_alpha = gmap.values(alpha)
    g_beta = gmap.values(beta)
    exit_low = z <= alpha
    exit_high = z >= beta
    ok_low = g_beta < z + margin
    ok_high = g_alpha > z - margin
    violated = (~in_band) & (
        (exit_low & ~exit_high & ~ok_low)
        | (exit_high & ~exit_low & ~ok_high)
        | (exit_low & exit_high & ~(ok_low | ok_high))
    )
    idx = np.where(violated)[0]
    witnesses = [
        {
            "point": [float(v) for v in pts[i]],
            "value": float(z[i]),
            "alpha": float(alpha[i]),
            "beta": float(beta[i]),
            "g_alpha": float(g_alpha[i]),
            "g_beta": float(g_beta[i]),
        }
        for i in idx[:10]
    ]
    notes = []
    if not cand.strictly_decreasing:
        notes.append("candidate has flat (non-strict) sections; accepted and flagged")
    return EnvelopeReport(
        passed=not bool(violated.any()),
        route="definition-sampling",
        candidate=cand.to_dict(),
        n_checked=int(n_samples),
        n_witnesses=int(violated.sum()),
        witnesses=witnesses,
        meta={"box": [lo, hi], "seed": seed, "margin": margin, "band": band,
              "n_exits": int(((exit_low | exit_high) & ~in_band).sum())},
        notes=notes,
    )


def check_envelope_via_R(fj: NormalizedMap, g, grid_n: int = 512,
                         margin: float = STRICT_MARGIN,
                         band: float = FP_BAND,
                         profile: MonotonicityProfile | None = None,
                         slas_known: bool | None = None) -> EnvelopeReport:
    """Region-curve enveloping test for maps increasing in the second
    argument: the graph (x, g(x)) must stay strictly inside R off the
    fixed-point band.  Passing makes g an enveloping of fj.
    """
    if fj.k != 2:
        raise PreconditionError("the region-curve route is defined for k = 2")
    cand = _candidate(g)
    if not cand.acceptable:
        raise PreconditionError("candidate map is not decreasing on its domain")
    profile = profile or monotonicity_profile(fj)
    if profile.signs[1] != "increasing":
        raise PreconditionError(
            "region-curve route needs the map increasing in its second "
            f"argument; evidence: min partial {profile.minima[1]:.3e} at "
            f"{profile.argmin_points[1]}"
        )
    n_fp = count_fixed_points(diagonal_map(fj))
    if n_fp != 1:
        raise PreconditionError(f"fixed point not unique on scan ({n_fp} found)")
    if slas_known is None:
        slas_known = float(np.abs(gradient(fj).a).sum()) < 1.0
    gmap = cand.g
    lo = max(envelope_window(fj)[0], gmap.domain[0])
    hi = min(envelope_window(fj)[1], gmap.domain[1])
    xs = np.linspace(lo, hi, grid_n)
    xs = xs[np.abs(xs - 1.0) > band]
    gv = gmap.values(xs)
    vals = fj.value_xy(xs, gv)
    alpha = np.minimum(xs, gv)
    beta = np.maximum(xs, gv)
    bad = ~((vals > alpha + margin) & (vals < beta - margin))
    idx = np.where(bad)[0]
    witnesses = [
        {"x": float(xs[i]), "g": float(gv[i]), "value": float(vals[i])}
        for i in idx[:10]
    ]
    notes = []
    if not slas_known:
        notes.append("norm condition not verified for this expansion")
    if not cand.strictly_decreasing:
        notes.append("candidate has flat (non-strict) sections; accepted and flagged")
    return EnvelopeReport(
        passed=not bool(bad.any()),
        route="region-curve",
        candidate=cand.to_dict(),
        n_checked=int(len(xs)),
        n_witnesses=int(bad.sum()),
        witnesses=witnesses,
        meta={"window": [lo, hi], "grid_n": grid_n, "margin": margin,
              "band": band},
        notes=notes,
    )


# ---------------------------------------------------------------------------
# The increasing-decreasing implicit-curve route
# ---------------------------------------------------------------------------

def _solve_first_arg(f: NormalizedMap, xs: np.ndarray, scan: int,
                     lo: float, hi: float):
    """For each x, root in y of F(y, x) = y; returns (feasible mask, roots)."""
    ys = np.linspace(lo, hi, scan + 1)
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    res = f.value_xy(Y, X) - Y       # residual F(y, x) - y on the grid
    sign = np.sign(res)
    changes = sign[:-1, :] * sign[1:, :] < 0
    n_changes = changes.sum(axis=0)
    feasible = n_changes == 1
    roots = np.full(len(xs), np.nan)
    cols = np.where(feasible)[0]
    if len(cols):
        rows = np.array([np.argmax(changes[:, c]) for c in cols])
        lo_b = ys[rows]
        hi_b = ys[rows + 1]
        xr = xs[cols]

        def residual(t):
            return f.values(np.column_stack([t, xr])) - t

        roots[cols] = bisect_on(residual, lo_b, hi_b)
    return feasible, roots, n_changes


def _solve_second_arg(f: NormalizedMap, yv: np.ndarray, scan: int,
                      lo: float, hi: float):
    """For each y, root in x of F(y, x) = y (the same curve, graded in y)."""
    xs = np.linspace(lo, hi, scan + 1)
    X, Yv = np.meshgrid(xs, yv, indexing="ij")
    res = f.value_xy(Yv, X) - Yv
    sign = np.sign(res)
    changes = sign[:-1, :] * sign[1:, :] < 0
    n_changes = changes.sum(axis=0)
    feasible = n_changes == 1
    roots = np.full(len(yv), np.nan)
    cols = np.where(feasible)[0]
    if len(cols):
        rows = np.array([np.argmax(changes[:, c]) for c in cols])
        lo_b = xs[rows]
        hi_b = xs[rows + 1]
        yr = yv[cols]

        def residual(t):
            return f.values(np.column_stack([yr, t])) - yr

        roots[cols] = bisect_on(residual, lo_b, hi_b)
    return feasible, roots


def phi_from_implicit(f: NormalizedMap, knots: int = 1024,
                      scan: int = 256) -> OneDimMap:
    """Tabulate the decreasing curve y = phi(x) solving y = F(y, x) for a
    map of type (increasing, decreasing).

    Knots are graded: half uniform in x over the root-feasible window, half
    uniform in the curve value (so steep sections near a singular end stay
    resolved), plus a cluster near the fixed point.  The table is
    interpolated by a monotone piecewise cubic; phi(1) = 1 within 1e-8 and
    |phi'(1)| is cross-checked against |a2/(1 - a1)| within 1e-4.
    """
    if f.k != 2:
        raise PreconditionError("implicit curves are defined for k = 2")
    profile = monotonicity_profile(f)
    if profile.signs != ("increasing", "decreasing"):
        raise PreconditionError(
            f"phi_from_implicit needs an (increasing, decreasing) map, got "
            f"{profile.arrows()}"
        )
    lo, hi = envelope_window(f)
    n_probe = max(129, knots // 4)
    probe = np.linspace(lo, hi, n_probe)
    feasible, _, n_changes = _solve_first_arg(f, probe, scan, lo, hi)
    if (n_changes > 1).any():
        bad = probe[np.argmax(n_changes > 1)]
        raise PreconditionError(
            f"multiple roots of y = F(y, x) at x = {bad!r}"
        )
    one = int(np.argmin(np.abs(probe - 1.0)))
    if not feasible[one]:
        raise PreconditionError("no root of y = F(y, x) near the fixed point")
    i0 = one
    while i0 > 0 and feasible[i0 - 1]:
        i0 -= 1
    i1 = one
    while i1 + 1 < n_probe and feasible[i1 + 1]:
        i1 += 1
    x_lo, x_hi = float(probe[i0]), float(probe[i1])
    if i0 > 0:
        # shrink slightly inside the feasible run to keep brackets clean
        x_lo = float(probe[i0] + 0.25 * (probe[1] - probe[0]))

    half = knots // 2
    xs_a = np.linspace(x_lo, x_hi, half)
    _, roots_a, _ = _solve_first_arg(f, xs_a, scan, lo, hi)
    value_lo = np.nanmin(roots_a)
    value_hi = np.nanmax(roots_a)
    yv = np.linspace(max(lo, value_lo), min(hi, value_hi), knots - half - 32)
    feas_b, roots_b = _solve_second_arg(f, yv, 4 * scan, x_lo, x_hi)
    cluster = 1.0 + np.linspace(-0.05, 0.05, 33)
    cluster = cluster[(cluster >= x_lo) & (cluster <= x_hi)]
    _, roots_c, _ = _solve_first_arg(f, cluster, scan, lo, hi)

    x_all = np.concatenate([xs_a, roots_b[feas_b], cluster])
    y_all = np.concatenate([roots_a, yv[feas_b], roots_c])
    keep = np.isfinite(x_all) & np.isfinite(y_all)
    x_all, y_all = x_all[keep], y_all[keep]
    order = np.argsort(x_all)
    x_all, y_all = x_all[order], y_all[order]
    distinct = np.concatenate([[True], np.diff(x_all) > 1e-12])
    x_all, y_all = x_all[distinct], y_all[distinct]
    if not (np.diff(y_all) < 0).all():
        raise PreconditionError("implicit-curve tabulation is not decreasing")

    # exact knot slopes by implicit differentiation of y = F(y, x)
    _, partials, _ = f.dual_batch(np.column_stack([y_all, x_all]))
    denom = 1.0 - partials[:, 0]
    if (np.abs(denom) < 1e-9).any():
        raise PreconditionError("implicit curve is vertical at a knot")
    slopes = partials[:, 1] / denom
    if (slopes > 0).any():
        raise PreconditionError("implicit curve has a non-decreasing knot slope")
    phi = table_map(x_all, y_all, slopes=slopes, fixed_point=1.0,
                    source="implicit-phi")
    if abs(phi(1.0) - 1.0) > 1e-8:
        raise PreconditionError(
            f"implicit curve misses the fixed point: phi(1) = {phi(1.0)!r}"
        )
    a1, a2 = gradient(f).a
    expected = abs(a2 / (1.0 - a1)) if a1 != 1.0 else math.inf
    got = abs(phi.derivative_at(1.0))
    if math.isfinite(expected) and abs(got - expected) > 1e-4:
        raise PreconditionError(
            f"phi'(1) cross-check failed: {got!r} vs |a2/(1-a1)| = {expected!r}"
        )
    return phi


def phi_inverse(phi: OneDimMap) -> OneDimMap:
    """Inverse of a tabulated decreasing map by swapping the knot axes."""
    if phi.knots is None:
        raise PreconditionError("phi_inverse needs a tabulated map")
    x, y = phi.knots
    slopes = None
    if phi.knot_slopes is not None and (phi.knot_slopes < 0).all():
        slopes = (1.0 / phi.knot_slopes)[::-1]
    return table_map(y[::-1], x[::-1], slopes=slopes,
                     fixed_point=phi.fixed_point,
                     source="implicit-phi-inverse")


def boundary_power_candidate(fj: NormalizedMap, power: float | None = None,
                             knots: int = 512, scan: int = 256) -> OneDimMap:
    """Candidate g(x) = y_c(x)^p built from the implicit boundary curve
    y_c solving y = F(x, y).

    For maps increasing in the second argument the region R at each x is
    bounded by y_c, with the admissible side switching at the fixed point;
    raising the curve to a power p > 1 moves it strictly inside on both
    sides while keeping g(1) = 1.  Möbius candidates cannot follow boundary
    curves with super-linear decay, this one can.  The exponent must keep
    |g'(1)| = p |M1| below 1; the default takes the midpoint of (1, 1/|M1|).
    The result is only a *candidate*: soundness comes from the subsequent
    region/2-cycle checks, which verify the interpolated curve itself.
    """
    if fj.k != 2:
        raise PreconditionError("boundary candidates are defined for k = 2")
    a1, a2 = gradient(fj).a
    slopes_fp = slopes_M1_M2(a1, a2)
    if not slopes_fp.M1_defined or slopes_fp.M1 is None or slopes_fp.M1 == 0:
        raise PreconditionError("boundary candidate needs a finite nonzero M1")
    m1 = abs(slopes_fp.M1)
    if m1 >= 1.0:
        raise PreconditionError("boundary candidate needs |M1| < 1")
    if power is None:
        power = 0.5 * (1.0 + 1.0 / m1)
    if not 1.0 < power < 1.0 / m1:
        raise PreconditionError(
            f"exponent {power!r} outside the stable window (1, {1.0 / m1!r})"
        )
    lo, hi = envelope_window(fj)
    xs = np.linspace(lo, hi, knots)
    xs = np.unique(np.concatenate([xs, 1.0 + np.linspace(-0.04, 0.04, 17)]))
    xs = xs[(xs >= lo) & (xs <= hi)]

    ys = np.linspace(lo, hi, scan + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    res = fj.value_xy(X, Y) - Y          # residual F(x, y) - y per column x
    sign = np.sign(res)
    changes = sign[:, :-1] * sign[:, 1:] < 0
    n_changes = changes.sum(axis=1)
    feasible = n_changes == 1
    one = int(np.argmin(np.abs(xs - 1.0)))
    if not feasible[one]:
        raise PreconditionError("no unique root of y = F(x, y) near the "
                                "fixed point")
    i0 = one
    while i0 > 0 and feasible[i0 - 1]:
        i0 -= 1
    i1 = one
    while i1 + 1 < len(xs) and feasible[i1 + 1]:
        i1 += 1
    xs = xs[i0 : i1 + 1]
    rows = np.array([np.argmax(changes[i0 + j]) for j in range(len(xs))])

    def residual(t):
        return fj.values(np.column_stack([xs, t])) - t

    yc = bisect_on(residual, ys[rows], ys[rows + 1])
    _, partials, _ = fj.dual_batch(np.column_stack([xs, yc]))
    denom = 1.0 - partials[:, 1]
    if (np.abs(denom) < 1e-9).any():
        raise PreconditionError("boundary curve is vertical at a knot")
    yc_slope = partials[:, 0] / denom
    g_vals = yc ** power
    g_slopes = power * yc ** (power - 1.0) * yc_slope
    if (g_slopes > 0).any():
        raise PreconditionError("powered boundary curve is not decreasing")
    return table_map(xs, g_vals, slopes=g_slopes, fixed_point=1.0,
                     source="boundary-power")


def _curve_in_R(f: NormalizedMap, curve: OneDimMap, grid_n: int,
                strict_margin: float, band: float, closure_slack: float = 0.0):
    """Region membership of a curve's graph; ``closure_slack > 0`` allows
    boundary contact (membership in the closure of R)."""
    lo = max(envelope_window(f)[0], curve.domain[0])
    hi = min(envelope_window(f)[1], curve.domain[1])
    xs = np.linspace(lo, hi, grid_n)
    xs = xs[np.abs(xs - 1.0) > band]
    cv = curve.values(xs)
    vals = f.value_xy(xs, cv)
    alpha = np.minimum(xs, cv)
    beta = np.maximum(xs, cv)
    if closure_slack > 0:
        good = (vals >= alpha - closure_slack) & (vals <= beta + closure_slack)
    else:
        good = (vals > alpha + strict_margin) & (vals < beta - strict_margin)
    idx = np.where(~good)[0]
    witnesses = [
        {"x": float(xs[i]), "curve": float(cv[i]), "value": float(vals[i])}
        for i in idx[:10]
    ]
    return bool(good.all()), witnesses, (lo, hi), int(len(xs))


def check_envelope_incr_decr(f: NormalizedMap, phi: OneDimMap | None = None,
                             grid_n: int = 512, n_samples: int = 100_000,
                             seed: int = 0) -> EnvelopeReport:
    """Enveloping for (increasing, decreasing) maps via g(x) = F(phi(x), x).

    Preconditions: phi shares the fixed point, its graph lies strictly in R,
    and the inverse curve lies in the closure of R (the inverse *is* the
    boundary curve x = F(x, y), so strict membership is impossible; boundary
    contact within 1e-7 is accepted).  The definition check is then delegated
    to the sampler.
    """
    profile = monotonicity_profile(f)
    if profile.signs != ("increasing", "decreasing"):
        raise PreconditionError(
            f"this route needs an (increasing, decreasing) map, got "
            f"{profile.arrows()}"
        )
    phi = phi if phi is not None else phi_from_implicit(f)
    if abs(phi(1.0) - 1.0) > 1e-7:
        raise PreconditionError(
            f"phi must fix 1: phi(1) = {phi(1.0)!r}"
        )
    ok_phi, wit_phi, win_phi, n_phi = _curve_in_R(
        f, phi, grid_n, STRICT_MARGIN, FP_BAND
    )
    if not ok_phi:
        raise PreconditionError(
            f"phi graph leaves the region R; first witnesses: {wit_phi[:3]}"
        )
    notes = [f"phi graph strictly inside R on {n_phi} points over {win_phi}"]
    if phi.knots is not None:
        inv = phi_inverse(phi)
        ok_inv, wit_inv, win_inv, n_inv = _curve_in_R(
            f, inv, grid_n, STRICT_MARGIN, FP_BAND, closure_slack=1e-7
        )
        if not ok_inv:
            raise PreconditionError(
                f"inverse curve leaves the closure of R; witnesses: {wit_inv[:3]}"
            )
        notes.append(
            f"inverse curve inside closed R (boundary contact within 1e-7) on "
            f"{n_inv} points; it coincides with the boundary curve x = F(x, y)"
        )
    g = implicit_compose_map(f, phi)
    report = check_definition_envelope(
        f, g, n_samples=n_samples, seed=seed,
        box=(max(envelope_window(f)[0], phi.domain[0]),
             min(envelope_window(f)[1], phi.domain[1])),
    )
    report.route = "incr-decr-phi"
    report.notes = notes + report.notes
    return report


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    """Composite stability verdict with its full evidence chain."""

    level: str                      # GAS-certified | LAS-only | Unstable | Inconclusive
    slas: SlasReport
    expansion_index: int | None = None
    profile: MonotonicityProfile | None = None
    route: str | None = None
    envelope: EnvelopeReport | None = None
    two_cycles: TwoCycleReport | None = None
    g_prime: float | None = None
    candidates_tried: int = 0
    grid_certified: bool = False
    embedding_used: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "slas": self.slas.to_dict(),
            "expansion_index": self.expansion_index,
            "profile": self.profile.to_dict() if self.profile else None,
            "route": self.route,
            "envelope": self.envelope.to_dict() if self.envelope else None,
            "two_cycles": self.two_cycles.to_dict() if self.two_cycles else None,
            "g_prime": self.g_prime,
            "candidates_tried": self.candidates_tried,
            "grid_certified": self.grid_certified,
            "embedding_used": self.embedding_used,
            "notes": self.notes,
        }


def _canonical_candidates(fj: NormalizedMap, domain) -> list:
    """Candidate scan list for the region-curve route: the diagonal (when
    decreasing), the canonical rational families over a parameter grid, a
    slope-matched member, and the calibrated Möbius composition."""
    out = []
    diag = diagonal_map(fj)
    strict, nonincr = diag.decreasing_on_grid()
    if strict:
        out.append(diag)
    a1, a2 = gradient(fj).a
    slopes = slopes_M1_M2(a1, a2)
    scan = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0]
    if slopes.M1_defined and slopes.M1 is not None:
        target = 0.5 * (abs(slopes.M1) + 1.0)   # halfway between |M1| and 1
        if 0 < target < 1:
            scan.insert(0, target / (1.0 - target))
    for a in scan:
        try:
            out.append(canonical_phi2(a, domain))
        except PreconditionError:
            continue
    for a in (1.25, 1.5, 2.0, 3.0):
        try:
            out.append(canonical_phi1(a, domain))
        except PreconditionError:
            continue
    try:
        out.append(boundary_power_candidate(fj))
    except Exception:
        pass
    return out


def _mobius_candidates(f0: NormalizedMap, fj: NormalizedMap, j: int) -> list:
    out = []
    v = gradient(fj)
    base = gradient(f0) if j else v
    comp = companion(base)
    for m in dict.fromkeys((j, max(2 * j, 4), 8)):
        try:
            B = column_sums_B(comp, m)
            params = calibrate_mobius(v, B)
            if (params.b <= 0).any():
                continue
            out.append(compose_g(fj, params))
        except Exception:
            continue
    try:
        out.append(compose_g(fj, calibrate_mobius(v, None, mode="epsilon")))
    except Exception:
        pass
    return out


def _try_region_route(f0, fj, j, profile, grid_n):
    domain = envelope_window(fj)
    tried = 0
    for g in _canonical_candidates(fj, domain) + _mobius_candidates(f0, fj, j):
        tried += 1
        cand = EnvelopeCandidate.verified(g)
        if not cand.strictly_decreasing:
            continue
        try:
            report = check_envelope_via_R(fj, cand, grid_n=grid_n,
                                          profile=profile)
        except PreconditionError:
            continue
        if not report.passed:
            continue
        cycles = find_two_cycles(g)
        if cycles.has_cycles:
            continue
        gp = g_prime_at_fixed_point(g)
        if abs(gp) >= 1.0:
            continue
        return report, cycles, gp, tried
    return None, None, None, tried


def gas_certificate(f0: NormalizedMap, m_max: int = 64, grid_n: int = 512,
                    n_samples: int = 100_000, seed: int = 0) -> Verdict:
    """Composite pipeline: local norm test, expansion to the passing index,
    monotonicity routing to an enveloping or embedding argument, 2-cycle
    check of the chosen one-dimensional map, and the final verdict.

    Verdicts are grid evidence ("GAS-certified" carries resolutions), never
    proofs; Inconclusive and LAS-only record which clause stopped the chain.
    """
    rep = slas_index(f0, m_max=m_max)
    notes: list = []
    if rep.classification is Classification.NONHYPERBOLIC:
        return Verdict(level="Inconclusive", slas=rep,
                       notes=["fixed point is not hyperbolic within tolerance"])
    if rep.classification is Classification.UNSTABLE:
        return Verdict(level="Unstable", slas=rep)
    if rep.classification is Classification.LAS_NOT_YET_SLAS:
        return Verdict(level="LAS-only", slas=rep,
                       notes=[rep.warning or "no expansion passed the norm test"])
    if f0.k != 2:
        return Verdict(level="LAS-only", slas=rep,
                       notes=["enveloping routes are implemented for k = 2"])

    j = rep.slas_index or 0
    fj = expand(f0, j)
    profile = monotonicity_profile(fj)
    if not profile.is_monotone:
        return Verdict(level="LAS-only", slas=rep, expansion_index=j,
                       profile=profile,
                       notes=[f"mixed monotonicity {profile.arrows()}: no "
                              "enveloping route available"])
    if j > 0:
        notes.append(
            f"norm test passes at expansion {j}; enveloping the expansion "
            "certifies the base map (enveloping is inherited by expansions)"
        )

    if profile.signs == ("decreasing", "decreasing"):
        emb = embedding_gas_verdict(fj, profile)
        diag = diagonal_map(fj)
        cycles = find_two_cycles(diag)
        gp = g_prime_at_fixed_point(diag)
        if emb.certified and not cycles.has_cycles:
            return Verdict(
                level="GAS-certified", slas=rep, expansion_index=j,
                profile=profile, route="embedding-diagonal",
                two_cycles=cycles, g_prime=gp, grid_certified=True,
                embedding_used=emb.to_dict(),
                notes=notes + ["doubly-decreasing route: diagonal map "
                               "2-cycle-free and embedding clauses hold"],
            )
        return Verdict(
            level="LAS-only", slas=rep, expansion_index=j, profile=profile,
            route="embedding-diagonal", two_cycles=cycles, g_prime=gp,
            embedding_used=emb.to_dict(),
            notes=notes + [f"embedding clause failed: {emb.clause}"],
        )

    if profile.signs[1] == "increasing":
        report, cycles, gp, tried = _try_region_route(f0, fj, j, profile,
                                                       grid_n)
        if report is not None:
            return Verdict(
                level="GAS-certified", slas=rep, expansion_index=j,
                profile=profile, route="region-curve", envelope=report,
                two_cycles=cycles, g_prime=gp, candidates_tried=tried,
                grid_certified=True, notes=notes,
            )
        return Verdict(
            level="LAS-only", slas=rep, expansion_index=j, profile=profile,
            route="region-curve", candidates_tried=tried,
            notes=notes + [f"no candidate passed the region-curve check "
                           f"({tried} tried)"],
        )

    # (increasing, decreasing): implicit-curve route
    try:
        phi = phi_from_implicit(fj)
        report = check_envelope_incr_decr(fj, phi, grid_n=grid_n,
                                          n_samples=n_samples, seed=seed)
        g = implicit_compose_map(fj, phi)
        cycles = find_two_cycles(g)
        gp = g_prime_at_fixed_point(g)
    except PreconditionError as exc:
        return Verdict(level="LAS-only", slas=rep, expansion_index=j,
                       profile=profile, route="incr-decr-phi",
                       notes=notes + [f"implicit-curve route failed: {exc}"])
    if report.passed and not cycles.has_cycles and abs(gp) < 1.0:
        return Verdict(
            level="GAS-certified", slas=rep, expansion_index=j,
            profile=profile, route="incr-decr-phi", envelope=report,
            two_cycles=cycles, g_prime=gp, grid_certified=True, notes=notes,
        )
    reason = ("2-cycles found" if cycles.has_cycles
              else "envelope sampling failed" if not report.passed
              else "composed map not locally stable")
    return Verdict(level="LAS-only", slas=rep, expansion_index=j,
                   profile=profile, route="incr-decr-phi", envelope=report,
                   two_cycles=cycles, g_prime=gp,
                   notes=notes + [reason])
