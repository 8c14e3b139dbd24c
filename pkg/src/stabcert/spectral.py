"""Local stability via the expansion sequence.

The gradient of the normalized map at the fixed point is V_0; substituting
the recursion into itself j times gives an expansion whose gradient is
V_j = (J^t)^j V_0 with J the companion (Jacobian) matrix.  The fixed point
is strongly locally asymptotically stable (SLAS) under the m-th expansion
when ||V_m||_1 < 1, and for a hyperbolic fixed point such an m exists iff
the spectral radius of J is below 1.  This module computes the norm
sequence, the eigenvalues, decay diagnostics, and the expansions themselves
as expression DAGs.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonConvergenceError, PreconditionError
from .expr import Expression, Var, substitute
from .mapdef import NormalizedMap

__all__ = [
    "GradientVector",
    "CompanionMatrix",
    "SlasReport",
    "Classification",
    "gradient",
    "companion",
    "v_sequence",
    "slas_index",
    "eigenvalues",
    "norm_decay",
    "column_sums_B",
    "expand",
]

DEFAULT_M_MAX = 64
TOL_HYP = 1e-8


@dataclass
class GradientVector:
    """Partial derivatives a_1..a_k of the m-th expansion at the fixed point."""

    a: np.ndarray
    m: int = 0
    nonsmooth: bool = False

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)

    @property
    def one_norm(self) -> float:
        return float(np.abs(self.a).sum())


@dataclass
class CompanionMatrix:
    """First row a_1..a_k, ones on the subdiagonal.

    Characteristic polynomial: λ^k - a_1 λ^{k-1} - ... - a_k.
    """

    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)

    @property
    def k(self) -> int:
        return len(self.a)

    def matrix(self) -> np.ndarray:
        k = self.k
        J = np.zeros((k, k))
        J[0, :] = self.a
        if k > 1:
            J[np.arange(1, k), np.arange(0, k - 1)] = 1.0
        return J


class Classification(str, Enum):
    SLAS = "SLAS"
    LAS_NOT_YET_SLAS = "LAS-not-yet-SLAS"
    UNSTABLE = "Unstable"
    NONHYPERBOLIC = "NonHyperbolic"


@dataclass
class SlasReport:
    norms: list
    slas_index: int | None
    eigenvalues: list
    moduli: list
    classification: Classification
    spectral_radius: float
    m_max: int
    tol_hyp: float = TOL_HYP
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "norms": [float(v) for v in self.norms],
            "slas_index": self.slas_index,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "eigenvalue_moduli": [float(v) for v in self.moduli],
            "classification": self.classification.value,
            "spectral_radius": float(self.spectral_radius),
            "m_max": self.m_max,
            "tol_hyp": self.tol_hyp,
            "warning": self.warning,
        }


# ---------------------------------------------------------------------------
# Gradients and the V sequence
# ---------------------------------------------------------------------------

def gradient(nm: NormalizedMap) -> GradientVector:
    """Gradient of ``nm`` at the fixed point (1, ..., 1)."""
    dual = nm.dual([1.0] * nm.k)
    return GradientVector(dual.partials, m=nm.lag, nonsmooth=dual.nonsmooth)


def companion(v: GradientVector | np.ndarray) -> CompanionMatrix:
    a = v.a if isinstance(v, GradientVector) else np.asarray(v, dtype=float)
    return CompanionMatrix(a)


def v_sequence(v0: GradientVector, m_max: int) -> list:
    """V_0 .. V_{m_max} with V_{m+1} = J^t V_m (exact fp matrix products)."""
    if v0.m != 0:
        raise PreconditionError("v_sequence starts from the base gradient (m=0)")
    Jt = companion(v0).matrix().T
    out = [v0]
    current = v0.a
    for m in range(1, m_max + 1):
        current = Jt @ current
        out.append(GradientVector(current, m=m, nonsmooth=v0.nonsmooth))
    return out


def eigenvalues(c: CompanionMatrix) -> list:
    """Roots of the companion characteristic polynomial, sorted by modulus
    (descending).  k <= 2 uses closed forms, larger k simultaneous iteration
    (Durand-Kerner) refined to residual < 1e-10.  Trailing zero coefficients
    are factored out as exact zero roots first."""
    a = c.a
    k = c.k
    if k == 1:
        roots = [complex(a[0])]
    elif k == 2:
        disc = cmath.sqrt(complex(a[0] * a[0] + 4.0 * a[1]))
        roots = [(a[0] + disc) / 2.0, (a[0] - disc) / 2.0]
    else:
        n_zero = 0
        while n_zero < k and a[k - 1 - n_zero] == 0.0:
            n_zero += 1
        roots = [0j] * n_zero
        reduced = a[: k - n_zero]
        if len(reduced) == 1:
            roots.append(complex(reduced[0]))
        elif len(reduced) == 2:
            disc = cmath.sqrt(complex(reduced[0] ** 2 + 4.0 * reduced[1]))
            roots.extend([(reduced[0] + disc) / 2.0, (reduced[0] - disc) / 2.0])
        elif len(reduced) > 2:
            roots.extend(_durand_kerner(reduced))
    return sorted(roots, key=lambda z: (-abs(z), -z.real, -z.imag))


def _char_poly(a: np.ndarray):
    # monic coefficients of λ^k - a_1 λ^{k-1} - ... - a_k
    return np.concatenate(([1.0], -a))


def _poly_eval(coeffs, z: complex) -> complex:
    acc = 0j
    for c in coeffs:
        acc = acc * z + c
    return acc


def _durand_kerner(a: np.ndarray, max_iter: int = 500, tol: float = 1e-10):
    coeffs = _char_poly(a)
    k = len(a)
    radius = 1.0 + float(np.abs(a).max())
    seed = 0.4 + 0.9j
    z = np.array([radius * seed ** i for i in range(1, k + 1)], dtype=complex)
    scale = max(1.0, float(np.abs(coeffs).max()))
    for _ in range(max_iter):
        moved = 0.0
        for i in range(k):
            num = _poly_eval(coeffs, z[i])
            den = 1.0 + 0j
            for j in range(k):
                if j != i:
                    den *= z[i] - z[j]
            if den == 0:
                den = 1e-30
            delta = num / den
            z[i] -= delta
            moved = max(moved, abs(delta))
        if moved < 1e-14:
            break
    residuals = [abs(_poly_eval(coeffs, zi)) for zi in z]
    if max(residuals) > tol * scale:
        raise NonConvergenceError(
            f"eigenvalue iteration stalled (max residual {max(residuals):.2e})"
        )
    return list(z)


def slas_index(nm: NormalizedMap, m_max: int = DEFAULT_M_MAX,
               tol_hyp: float = TOL_HYP) -> SlasReport:
    """Norm sequence ||V_m||_1 for m = 0..m_max, the smallest m below 1, and
    the eigenvalue cross-check."""
    v0 = gradient(nm)
    vs = v_sequence(v0, m_max)
    norms = [v.one_norm for v in vs]
    found = next((m for m, n in enumerate(norms) if n < 1.0), None)

    eigs = eigenvalues(companion(v0))
    moduli = [abs(z) for z in eigs]
    rho = moduli[0] if moduli else 0.0

    warning = None
    if any(abs(mod - 1.0) <= tol_hyp for mod in moduli):
        cls = Classification.NONHYPERBOLIC
        warning = "an eigenvalue lies on the unit circle within tol_hyp"
    elif rho > 1.0:
        cls = Classification.UNSTABLE
        if found is not None:
            warning = (f"norm test found m={found} despite spectral radius "
                       f"{rho:.6g} > 1; eigenvalues win")
            found = None
    elif found is not None:
        cls = Classification.SLAS
    else:
        cls = Classification.LAS_NOT_YET_SLAS
        warning = (f"spectral radius {rho:.6g} < 1 guarantees some expansion "
                   f"passes the norm test; raise m_max (currently {m_max})")
    return SlasReport(
        norms=norms,
        slas_index=found,
        eigenvalues=eigs,
        moduli=moduli,
        classification=cls,
        spectral_radius=rho,
        m_max=m_max,
        tol_hyp=tol_hyp,
        warning=warning,
    )


# ---------------------------------------------------------------------------
# Norm decay diagnostics
# ---------------------------------------------------------------------------

@dataclass
class NormDecay:
    norms: list                      # (||J^n||_inf, ||J^n||_1) for n = 1..
    overflow: bool = False

    def to_dict(self) -> dict:
        return {"norms": [[float(r), float(c)] for r, c in self.norms],
                "overflow": self.overflow}


def norm_decay(c: CompanionMatrix, n_max: int) -> NormDecay:
    """Max-row-sum and max-column-sum norms of J^n for n = 1..n_max.

    Stops early with ``overflow=True`` once entries exceed 1e300.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    J = c.matrix()
    power = np.eye(c.k)
    out = []
    for _ in range(n_max):
        power = power @ J
        if np.abs(power).max() > 1e300:
            return NormDecay(out, overflow=True)
        row = float(np.abs(power).sum(axis=1).max())
        col = float(np.abs(power).sum(axis=0).max())
        out.append((row, col))
    return NormDecay(out)


def column_sums_B(c: CompanionMatrix, m: int) -> np.ndarray:
    """B_j = |sum_i v_{ij}| for (J^t)^m = [v_{ij}]; each B_j is bounded by
    ||J^m||_inf (asserted)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    Jt_m = np.linalg.matrix_power(c.matrix().T, m)
    B = np.abs(Jt_m.sum(axis=0))
    bound = float(np.abs(np.linalg.matrix_power(c.matrix(), m)).sum(axis=1).max())
    if not (B <= bound + 1e-12 * max(1.0, bound)).all():
        raise AssertionError(f"column sums {B} exceed ||J^m||_inf = {bound}")
    return B


# ---------------------------------------------------------------------------
# Expansions as expression DAGs
# ---------------------------------------------------------------------------

def expand(nm: NormalizedMap, j: int) -> NormalizedMap:
    """The j-th expansion of a base map: substituting the recursion into its
    own first argument j times.  Shared subtrees keep the DAG size linear in
    j.  The result is cross-checked: value 1 at the fixed point (1e-10) and
    gradient equal to (J^t)^j V_0 (1e-9)."""
    if j < 0:
        raise ValueError("expansion index must be >= 0")
    if nm.lag != 0:
        raise PreconditionError("expand starts from the base (lag 0) map")
    if j == 0:
        return nm
    k = nm.k
    f0 = nm.f
    current = f0
    for _ in range(j):
        var_map = {1: f0.root}
        for i in range(2, k + 1):
            var_map[i] = Var(i - 1)
        current = substitute(current, var_map=var_map, k=k)
    value = current.eval([1.0] * k, nm.params)
    if abs(value - 1.0) > 1e-10:
        raise PreconditionError(
            f"expansion residual at the fixed point: {value - 1.0:.3e}"
        )
    expected = v_sequence(gradient(nm), j)[j].a
    got = Expression(current.root, k).eval_dual([1.0] * k, nm.params).partials
    if not np.allclose(got, expected, rtol=0.0, atol=1e-9):
        raise PreconditionError(
            f"expansion gradient cross-check failed: {got} vs {expected}"
        )
    return NormalizedMap(
        base=nm.base,
        xbar=nm.xbar,
        f=current,
        k=k,
        lag=j,
        f0=f0,
        mode=nm.mode,
        domain=nm.domain,
        window=nm.window,
    )
