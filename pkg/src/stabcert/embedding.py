"""Mixed monotonicity and the monotone-embedding criterion.

Maps that are monotone in each argument embed into a higher-dimensional
order-preserving system.  Global attraction follows when the map has no
pseudo-fixed points (off-diagonal solutions of (x,y) = (F(P_tau),
F(P_tau^t))) and every initial condition can be bracketed by a point of the
inequality region Omega.  This module classifies monotonicity on a grid,
hunts pseudo-fixed points (sign-scan plus damped Newton on dual-number
Jacobians), samples Omega, and assembles the embedding verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .mapdef import NormalizedMap
from .onedim import diagonal_map, find_two_cycles

__all__ = [
    "MonotonicityProfile",
    "PseudoFixedPoint",
    "OmegaGrid",
    "EmbeddingVerdict",
    "monotonicity_profile",
    "tau_points",
    "pseudo_fixed_points",
    "embedding_region_omega",
    "embedding_gas_verdict",
]

SIGN_TOL = 1e-10


# ---------------------------------------------------------------------------
# Monotonicity profiles
# ---------------------------------------------------------------------------

@dataclass
class MonotonicityProfile:
    """Per-argument monotonicity with grid evidence (partial extrema)."""

    signs: tuple                      # "increasing" | "decreasing" | "mixed"
    minima: np.ndarray                # min of each partial over the grid
    maxima: np.ndarray
    argmin_points: list               # grid point attaining each minimum
    argmax_points: list
    grid_n: int = 0

    @property
    def is_monotone(self) -> bool:
        return all(s != "mixed" for s in self.signs)

    def arrows(self) -> str:
        sym = {"increasing": "up", "decreasing": "down", "mixed": "mixed"}
        return "(" + ", ".join(sym[s] for s in self.signs) + ")"

    def to_dict(self) -> dict:
        return {
            "signs": list(self.signs),
            "partial_minima": [float(v) for v in self.minima],
            "partial_maxima": [float(v) for v in self.maxima],
            "grid_n": self.grid_n,
        }


def monotonicity_profile(f: NormalizedMap, grid_n: int = 64) -> MonotonicityProfile:
    """Classify each argument by the sign of its partial over a uniform grid
    covering the window box."""
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    lo, hi = f.window
    axes = [np.linspace(lo, hi, grid_n)] * f.k
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    _, partials, _ = f.dual_batch(pts)
    signs, minima, maxima, argmins, argmaxs = [], [], [], [], []
    for i in range(f.k):
        col = partials[:, i]
        lo_i, hi_i = float(col.min()), float(col.max())
        minima.append(lo_i)
        maxima.append(hi_i)
        argmins.append([float(v) for v in pts[int(col.argmin())]])
        argmaxs.append([float(v) for v in pts[int(col.argmax())]])
        if lo_i >= -SIGN_TOL and hi_i > 0:
            signs.append("increasing")
        elif hi_i <= SIGN_TOL and lo_i < 0:
            signs.append("decreasing")
        else:
            signs.append("mixed")
    return MonotonicityProfile(
        signs=tuple(signs),
        minima=np.array(minima),
        maxima=np.array(maxima),
        argmin_points=argmins,
        argmax_points=argmaxs,
        grid_n=grid_n,
    )


# ---------------------------------------------------------------------------
# tau-order corner points
# ---------------------------------------------------------------------------

def tau_points(profile: MonotonicityProfile, x: float, y: float):
    """Corner points of the tau-order box [x, y]: component i takes x where
    the map increases in argument i and y where it decreases; the dual point
    swaps x and y."""
    if x > y:
        raise PreconditionError("tau_points expects x <= y")
    if not profile.is_monotone:
        raise PreconditionError(
            f"tau machinery needs per-argument monotonicity, got {profile.arrows()}"
        )
    p = tuple(x if s == "increasing" else y for s in profile.signs)
    pt = tuple(y if s == "increasing" else x for s in profile.signs)
    return p, pt


def _tau_columns(profile: MonotonicityProfile, xs: np.ndarray, ys: np.ndarray):
    """Vectorised P_tau and P_tau^t for coordinate arrays."""
    cols, cols_t = [], []
    for s in profile.signs:
        if s == "increasing":
            cols.append(xs)
            cols_t.append(ys)
        else:
            cols.append(ys)
            cols_t.append(xs)
    return np.column_stack(cols), np.column_stack(cols_t)


# ---------------------------------------------------------------------------
# Pseudo-fixed points
# ---------------------------------------------------------------------------

@dataclass
class PseudoFixedPoint:
    x: float
    y: float
    residual: float

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "residual": self.residual}


def _pseudo_residual(f: NormalizedMap, profile, xs, ys):
    p, pt = _tau_columns(profile, xs, ys)
    return f.values(p) - xs, f.values(pt) - ys


def _pseudo_jacobian(f: NormalizedMap, profile, x, y):
    """Jacobian of ((F(P_tau) - x, F(P_tau^t) - y)) w.r.t. (x, y)."""
    p = tuple(x if s == "increasing" else y for s in profile.signs)
    pt = tuple(y if s == "increasing" else x for s in profile.signs)
    dp = f.dual(list(p)).partials
    dpt = f.dual(list(pt)).partials
    j11 = sum(dp[i] for i, s in enumerate(profile.signs) if s == "increasing") - 1.0
    j12 = sum(dp[i] for i, s in enumerate(profile.signs) if s == "decreasing")
    j21 = sum(dpt[i] for i, s in enumerate(profile.signs) if s == "decreasing")
    j22 = sum(dpt[i] for i, s in enumerate(profile.signs) if s == "increasing") - 1.0
    return np.array([[j11, j12], [j21, j22]])


def pseudo_fixed_points(f: NormalizedMap, profile: MonotonicityProfile | None = None,
                        scan_n: int = 64, newton_cap: int = 100,
                        damping: float = 0.5,
                        diagnostics: list | None = None) -> list:
    """Off-diagonal solutions of (x, y) = (F(P_tau), F(P_tau^t)).

    Residual-sign scan on a scan_n x scan_n grid seeds damped Newton; for
    doubly-decreasing maps the 2-cycles of the diagonal g(t) = F(t, t) are
    used as additional (exact) seeds.  Seeds whose Newton run does not
    converge are appended to ``diagnostics`` (the search continues).
    """
    if f.k != 2:
        raise PreconditionError("pseudo-fixed points are defined for k = 2")
    profile = profile or monotonicity_profile(f)
    if not profile.is_monotone:
        raise PreconditionError(
            f"pseudo-fixed points need per-argument monotonicity, got "
            f"{profile.arrows()}"
        )
    lo, hi = f.window
    axis = np.linspace(lo, hi, scan_n + 1)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    r1, r2 = _pseudo_residual(f, profile, X.ravel(), Y.ravel())
    R1 = r1.reshape(X.shape)
    R2 = r2.reshape(X.shape)

    def cell_has_change(R):
        c = R[:-1, :-1]
        return (
            (np.sign(c) != np.sign(R[1:, :-1]))
            | (np.sign(c) != np.sign(R[:-1, 1:]))
            | (np.sign(c) != np.sign(R[1:, 1:]))
        )

    cells = np.argwhere(cell_has_change(R1) & cell_has_change(R2))
    seeds = [(0.5 * (axis[i] + axis[i + 1]), 0.5 * (axis[j] + axis[j + 1]))
             for i, j in cells]
    if profile.signs == ("decreasing", "decreasing"):
        for p, q in find_two_cycles(diagonal_map(f)).cycles:
            seeds.append((p, q))

    found: list[PseudoFixedPoint] = []
    for x0, y0 in seeds:
        z = np.array([x0, y0], dtype=float)
        ok = False
        for _ in range(newton_cap):
            r = np.array(_pseudo_residual(
                f, profile, np.array([z[0]]), np.array([z[1]])
            )).ravel()
            if np.abs(r).max() < 1e-12:
                ok = True
                break
            try:
                J = _pseudo_jacobian(f, profile, z[0], z[1])
                step = np.linalg.solve(J, -r)
            except Exception:
                break
            z = z + damping * step
            if not np.isfinite(z).all() or np.abs(z).max() > 100.0 * max(1.0, hi):
                break
        if not ok:
            if diagnostics is not None:
                diagnostics.append({"seed": [float(x0), float(y0)],
                                    "reason": "newton did not converge"})
            continue
        x, y = float(z[0]), float(z[1])
        if abs(x - y) <= 1e-6:
            continue
        if not (lo - 1e-9 <= min(x, y) and max(x, y) <= hi + 1e-9):
            continue
        r = np.array(_pseudo_residual(
            f, profile, np.array([x]), np.array([y])
        )).ravel()
        pair = (min(x, y), max(x, y))
        if any(abs(pair[0] - q.x) < 1e-8 and abs(pair[1] - q.y) < 1e-8
               for q in found):
            continue
        found.append(PseudoFixedPoint(pair[0], pair[1],
                                      float(np.abs(r).max())))
    found.sort(key=lambda q: (q.x, q.y))
    return found


# ---------------------------------------------------------------------------
# The inequality region Omega
# ---------------------------------------------------------------------------

@dataclass
class OmegaGrid:
    xs: np.ndarray
    ys: np.ndarray
    in_omega: np.ndarray
    empty: bool
    grid_n: int
    margin: float

    def count(self) -> int:
        return int(self.in_omega.sum())

    def write_csv(self, stream) -> None:
        stream.write("x,y,in_omega\r\n")
        for x, y, q in zip(self.xs, self.ys, self.in_omega):
            stream.write(f"{float(x)!r},{float(y)!r},{int(q)}\r\n")


def embedding_region_omega(f: NormalizedMap,
                           profile: MonotonicityProfile | None = None,
                           grid_n: int = 256,
                           margin: float = 1e-9) -> OmegaGrid:
    """Grid sample of Omega = {(x, y): x < y, x < F(P_tau), y > F(P_tau^t)}."""
    if f.k != 2:
        raise PreconditionError("the Omega region is defined for k = 2")
    profile = profile or monotonicity_profile(f)
    if not profile.is_monotone:
        raise PreconditionError(
            f"Omega needs per-argument monotonicity, got {profile.arrows()}"
        )
    lo, hi = f.window
    axis = np.linspace(lo, hi, grid_n)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    xs, ys = X.ravel(), Y.ravel()
    upper = xs < ys
    fp_, fpt_ = _pseudo_residual(f, profile, xs, ys)
    # _pseudo_residual returns F(P_tau) - x and F(P_tau^t) - y
    qualify = upper & (fp_ > margin) & (fpt_ < -margin)
    return OmegaGrid(xs=xs, ys=ys, in_omega=qualify,
                     empty=not bool(qualify.any()), grid_n=grid_n, margin=margin)


# ---------------------------------------------------------------------------
# Embedding verdict
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingVerdict:
    certified: bool
    clause: str | None
    profile: MonotonicityProfile
    pseudo: list = field(default_factory=list)
    omega_empty: bool = False
    omega_count: int = 0
    box_failures: int = 0
    n_boxes: int = 0
    seed: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "failing_clause": self.clause,
            "profile": self.profile.to_dict(),
            "pseudo_fixed_points": [q.to_dict() for q in self.pseudo],
            "omega_empty": self.omega_empty,
            "omega_count": self.omega_count,
            "box_failures": self.box_failures,
            "n_boxes": self.n_boxes,
            "seed": self.seed,
            "notes": self.notes,
        }


def embedding_gas_verdict(f: NormalizedMap,
                          profile: MonotonicityProfile | None = None,
                          grid_n: int = 256, n_boxes: int = 100,
                          seed: int = 1234) -> EmbeddingVerdict:
    """Embedding-technique verdict: certified when the map is monotone in
    each argument, has no pseudo-fixed points, and each of ``n_boxes``
    sampled initial conditions is bracketed by a qualifying Omega grid point.
    The bracketing clause quantifies over a continuum; the sampled check is a
    surrogate and is recorded as such."""
    profile = profile or monotonicity_profile(f)
    if not profile.is_monotone:
        return EmbeddingVerdict(
            certified=False,
            clause=f"per-argument monotonicity fails: {profile.arrows()}",
            profile=profile,
        )
    notes = ["initial-condition bracketing sampled on "
             f"{n_boxes} seeded boxes (existential clause surrogate)"]
    from .onedim import count_fixed_points

    n_fp = count_fixed_points(diagonal_map(f))
    if n_fp != 1:
        return EmbeddingVerdict(
            certified=False,
            clause=f"fixed point not unique on scan ({n_fp} found)",
            profile=profile, notes=notes,
        )
    pseudo = pseudo_fixed_points(f, profile)
    if pseudo:
        return EmbeddingVerdict(
            certified=False, clause="pseudo-fixed points exist",
            profile=profile, pseudo=pseudo, notes=notes,
        )
    omega = embedding_region_omega(f, profile, grid_n=grid_n)
    if omega.empty:
        return EmbeddingVerdict(
            certified=False, clause="embedding inequality region is empty",
            profile=profile, omega_empty=True, notes=notes,
        )
    lo, hi = f.window
    rng = np.random.default_rng(seed)
    boxes = rng.uniform(lo, hi, size=(n_boxes, f.k))
    ox = omega.xs[omega.in_omega]
    oy = omega.ys[omega.in_omega]
    failures = 0
    for row in boxes:
        alpha, beta = float(row.min()), float(row.max())
        if not ((ox <= alpha) & (oy >= beta)).any():
            failures += 1
    certified = failures == 0
    return EmbeddingVerdict(
        certified=certified,
        clause=None if certified else
        f"no qualifying bracketing point for {failures} of {n_boxes} sampled boxes",
        profile=profile,
        omega_count=omega.count(),
        box_failures=failures,
        n_boxes=n_boxes,
        seed=seed,
        notes=notes,
    )
