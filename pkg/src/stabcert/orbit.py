"""Orbit iteration and basin sampling.

Simulation corroborates certificates, it never replaces them: a certified
configuration should reach basin fraction 1.0, and an unstable one should
visibly fail.  Expansions iterate with their lag structure; their histories
are seeded by stepping the base map forward, which makes the expansion
reproduce the base orbit index-for-index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EvalDomainError
from .mapdef import NormalizedMap

__all__ = ["OrbitResult", "BasinResult", "iterate", "basin_sample"]

DIVERGENCE_BOUND = 1e6
THIN_AFTER = 10_000
THIN_EVERY = 10

_OUTCOME_NAMES = {
    _kernels.OUTCOME_CONVERGED: "converged",
    _kernels.OUTCOME_DIVERGED: "diverged",
    _kernels.OUTCOME_PERIOD2: "period2-locked",
    _kernels.OUTCOME_MAXITER: "max-iter",
}


@dataclass
class OrbitResult:
    outcome: str
    n_steps: int
    final_error: float
    trajectory: np.ndarray | None = None
    indices: np.ndarray | None = None      # step index of each stored value
    thinned: bool = False

    def to_dict(self, max_points: int = 200) -> dict:
        out = {
            "outcome": self.outcome,
            "n_steps": self.n_steps,
            "final_error": float(self.final_error),
            "thinned": self.thinned,
        }
        if self.trajectory is not None:
            stride = max(1, len(self.trajectory) // max_points)
            out["trajectory_preview"] = [
                [int(n), float(v)]
                for n, v in zip(self.indices[::stride], self.trajectory[::stride])
            ]
        return out

    def write_csv(self, stream) -> None:
        stream.write("n,y\r\n")
        for n, v in zip(self.indices, self.trajectory):
            stream.write(f"{int(n)},{float(v)!r}\r\n")


def _bootstrap_history(nm: NormalizedMap, init) -> list:
    """Newest-first history of length k + lag, extending the k initial
    values forward with the base (lag-0) map."""
    k = nm.k
    init = [float(v) for v in init]
    if len(init) != k:
        raise ValueError(f"init must have length k={k} (newest first)")
    history = list(init)                      # y_0, y_-1, ...
    prog0 = nm.program0
    for step in range(nm.lag):
        try:
            y = prog0.run(history[:k])
        except EvalDomainError as exc:
            raise EvalDomainError(
                f"history bootstrap failed at forward step {step + 1}: {exc}"
            ) from exc
        history.insert(0, y)
    return history


def _kernel_step_indices(n_steps: int) -> list:
    """Kernel-recorded step numbers under the thinning rule."""
    return [s for s in range(1, n_steps + 1)
            if s <= THIN_AFTER or s % THIN_EVERY == 0]


def iterate(nm: NormalizedMap, init, n_max: int = 100_000, tol: float = 1e-8,
            t_consec: int = 50, record: bool = True) -> OrbitResult:
    """Iterate from ``init`` (newest first, length k) until convergence to
    the fixed point, divergence/domain exit, a sustained period-2 lock, or
    ``n_max`` steps.  Trajectories store every step up to 10^4 then every
    10th."""
    history = _bootstrap_history(nm, init)
    lo, hi = nm.domain
    outcome, steps, final, traj, err_step = _kernels.orbit(
        nm.program, history, nm.lag, 1.0, int(n_max), float(tol),
        int(t_consec), DIVERGENCE_BOUND, lo, hi, bool(record),
        THIN_AFTER, THIN_EVERY,
    )
    if outcome == _kernels.OUTCOME_EVAL_ERROR:
        raise EvalDomainError(
            f"evaluation failed at step {int(err_step) + nm.lag} of the orbit"
        )
    trajectory = indices = None
    thinned = False
    if record:
        kern = np.asarray(traj, dtype=float)
        kernel_idx = _kernel_step_indices(int(steps))[: max(len(kern) - 1, 0)]
        if nm.lag:
            # prepend the bootstrap values so indices match the base orbit
            prefix = np.asarray(history[: nm.lag][::-1], dtype=float)
            trajectory = np.concatenate([[history[nm.lag]], prefix, kern[1:]])
            indices = np.concatenate([
                np.arange(nm.lag + 1),
                nm.lag + np.asarray(kernel_idx, dtype=np.int64),
            ])
        else:
            trajectory = kern
            indices = np.concatenate([[0], np.asarray(kernel_idx, dtype=np.int64)])
        thinned = int(steps) > THIN_AFTER
    return OrbitResult(
        outcome=_OUTCOME_NAMES[int(outcome)],
        n_steps=int(steps) + nm.lag,
        final_error=abs(float(final) - 1.0),
        trajectory=trajectory,
        indices=indices,
        thinned=thinned,
    )


@dataclass
class BasinResult:
    fraction: float
    n_points: int
    seed: int
    tol: float
    n_max: int
    failures: list = field(default_factory=list)   # [init, outcome]

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "n_points": self.n_points,
            "seed": self.seed,
            "tol": self.tol,
            "n_max": self.n_max,
            "failures": [
                {"init": [float(v) for v in init], "outcome": name}
                for init, name in self.failures[:50]
            ],
            "n_failures": len(self.failures),
        }


def basin_sample(nm: NormalizedMap, n_points: int = 200, seed: int = 0,
                 tol: float = 1e-6, n_max: int = 100_000,
                 t_consec: int = 50, threads: int = 1) -> BasinResult:
    """Convergence fraction over seeded uniform initial histories in the
    window box; non-converged initial conditions are returned."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = nm.window
    inits = rng.uniform(lo, hi, size=(n_points, nm.k))
    histories = np.empty((n_points, nm.k + nm.lag))
    for i, row in enumerate(inits):
        histories[i] = _bootstrap_history(nm, row)
    dlo, dhi = nm.domain

    def run(chunk: np.ndarray):
        return _kernels.orbit_batch(
            nm.program, chunk, nm.lag, 1.0, int(n_max), float(tol),
            int(t_consec), DIVERGENCE_BOUND, dlo, dhi,
        )

    if threads > 1 and n_points > 1:
        parts = np.array_split(histories, min(threads, n_points))
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(run, parts))
        outcomes = np.concatenate([r[0] for r in results])
    else:
        outcomes, _, _ = run(histories)

    converged = outcomes == _kernels.OUTCOME_CONVERGED
    failures = [
        (inits[i].tolist(), _OUTCOME_NAMES.get(int(outcomes[i]), "error"))
        for i in np.where(~converged)[0]
    ]
    return BasinResult(
        fraction=float(converged.mean()),
        n_points=n_points,
        seed=seed,
        tol=tol,
        n_max=n_max,
        failures=failures,
    )
