"""Pure-Python/numpy execution backend.

Batch evaluation is vectorised with numpy over chunks of points; the orbit
loop is plain Python over the scalar interpreter with a vectorised variant
for basins (all orbits stepped together).  Semantics match the compiled
backend in ``_native.pyx``; the compiled one is simply faster.
"""

from __future__ import annotations

import math

import numpy as np

from ..program import OP, Program

NAME = "python"

# orbit outcome codes shared by both backends
OUTCOME_CONVERGED = 0
OUTCOME_DIVERGED = 1
OUTCOME_PERIOD2 = 2
OUTCOME_MAXITER = 3
OUTCOME_EVAL_ERROR = 4

_CHUNK = 8192


def _run_chunk(program: Program, pts: np.ndarray, regs: np.ndarray):
    """Evaluate one chunk; returns (values, bad_index or -1, instr_index)."""
    consts = program.consts
    n = pts.shape[0]
    with np.errstate(all="ignore"):
        for idx, (op, a, b, out) in enumerate(program.code):
            if op == OP.CONST:
                regs[out, :n] = consts[a]
                continue
            elif op == OP.VAR:
                regs[out, :n] = pts[:, a]
            elif op == OP.NEG:
                np.negative(regs[a, :n], out=regs[out, :n])
            elif op == OP.ADD:
                np.add(regs[a, :n], regs[b, :n], out=regs[out, :n])
            elif op == OP.SUB:
                np.subtract(regs[a, :n], regs[b, :n], out=regs[out, :n])
            elif op == OP.MUL:
                np.multiply(regs[a, :n], regs[b, :n], out=regs[out, :n])
            elif op == OP.DIV:
                np.divide(regs[a, :n], regs[b, :n], out=regs[out, :n])
            elif op == OP.POW:
                np.power(regs[a, :n], regs[b, :n], out=regs[out, :n])
            elif op == OP.EXP:
                np.exp(regs[a, :n], out=regs[out, :n])
            elif op == OP.LOG:
                np.log(regs[a, :n], out=regs[out, :n])
            elif op == OP.SQRT:
                np.sqrt(regs[a, :n], out=regs[out, :n])
            elif op == OP.ABS:
                np.abs(regs[a, :n], out=regs[out, :n])
            elif op == OP.MIN:
                np.minimum(regs[a, :n], regs[b, :n], out=regs[out, :n])
            else:
                np.maximum(regs[a, :n], regs[b, :n], out=regs[out, :n])
            row = regs[out, :n]
            finite = np.isfinite(row)
            if not finite.all():
                return None, int(np.argmin(finite)), idx
    return regs[program.result, :n].copy(), -1, -1


def eval_batch(program: Program, pts: np.ndarray) -> np.ndarray:
    """Evaluate ``program`` at each row of ``pts`` (shape (N, k)).

    Raises :class:`~stabcert.errors.EvalDomainError` (node-precise, via the
    scalar interpreter) on the first point whose evaluation is invalid.
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n_total = pts.shape[0]
    out = np.empty(n_total)
    regs = np.empty((program.n_regs, min(_CHUNK, max(n_total, 1))))
    for start in range(0, n_total, _CHUNK):
        chunk = pts[start : start + _CHUNK]
        values, bad, _ = _run_chunk(program, chunk, regs)
        if bad >= 0:
            raise program.explain_failure(chunk[bad])
        out[start : start + _CHUNK] = values
    return out


def _history_seed(history):
    h = [float(v) for v in history]
    return h


def orbit(
    program: Program,
    history,
    lag: int,
    fp: float,
    n_max: int,
    tol: float,
    t_consec: int,
    div_bound: float,
    dom_lo: float,
    dom_hi: float,
    record: bool,
    thin_after: int = 10_000,
    thin_every: int = 10,
):
    """Iterate one orbit.  ``history`` is newest-first, length k + lag.

    Returns ``(outcome, n_steps, final_value, trajectory, error_step)`` where
    ``trajectory`` is a list (possibly thinned) when ``record`` is true.
    """
    k = program.k
    h = _history_seed(history)
    assert len(h) == k + lag
    traj = [h[0]] if record else None
    if max(abs(v - fp) for v in h[:k]) < tol:
        return OUTCOME_CONVERGED, 0, h[0], traj, -1

    streak_conv = 0
    streak_p2 = 0
    last = h[0]                                  # y_n
    last2 = h[1] if len(h) > 1 else math.nan     # y_{n-1}
    point = [0.0] * k
    run = program.run
    for step in range(1, n_max + 1):
        for i in range(k):
            point[i] = h[lag + i]
        try:
            y = run(point)
        except Exception:
            return OUTCOME_EVAL_ERROR, step, h[0], traj, step
        h.insert(0, y)
        h.pop()
        if record and (step <= thin_after or step % thin_every == 0):
            traj.append(y)
        if abs(y) > div_bound or y < dom_lo or y > dom_hi:
            return OUTCOME_DIVERGED, step, y, traj, -1
        if abs(y - fp) < tol:
            streak_conv += 1
            if streak_conv >= t_consec:
                return OUTCOME_CONVERGED, step, y, traj, -1
        else:
            streak_conv = 0
        if abs(y - last2) < tol and abs(y - last) > 100.0 * tol:
            streak_p2 += 1
            if streak_p2 >= t_consec:
                return OUTCOME_PERIOD2, step, y, traj, -1
        else:
            streak_p2 = 0
        last2, last = last, y
    return OUTCOME_MAXITER, n_max, h[0], traj, -1


def orbit_batch(
    program: Program,
    histories: np.ndarray,
    lag: int,
    fp: float,
    n_max: int,
    tol: float,
    t_consec: int,
    div_bound: float,
    dom_lo: float,
    dom_hi: float,
):
    """Step many orbits simultaneously (vectorised across orbits).

    ``histories`` has shape (N, k + lag), newest-first per row.  Returns
    ``(outcomes, n_steps, final_values)`` int/float arrays of length N.
    """
    hist = np.array(histories, dtype=np.float64)
    n, width = hist.shape
    k = program.k
    assert width == k + lag
    outcomes = np.full(n, OUTCOME_MAXITER, dtype=np.int64)
    steps = np.full(n, n_max, dtype=np.int64)
    finals = hist[:, 0].copy()
    alive = np.ones(n, dtype=bool)

    done0 = np.abs(hist[:, :k] - fp).max(axis=1) < tol
    outcomes[done0] = OUTCOME_CONVERGED
    steps[done0] = 0
    alive &= ~done0

    streak_conv = np.zeros(n, dtype=np.int64)
    streak_p2 = np.zeros(n, dtype=np.int64)
    last = hist[:, 0].copy()                                     # y_n
    last2 = hist[:, 1].copy() if width > 1 else np.full(n, np.nan)
    regs = np.empty((program.n_regs, n))
    for step in range(1, n_max + 1):
        if not alive.any():
            break
        idx = np.where(alive)[0]
        pts = hist[idx, lag : lag + k]
        values, bad, _ = _run_chunk(program, pts, regs)
        if bad >= 0:
            # a faulting orbit poisons the vectorised step; redo it scalar-wise
            sub = np.empty(len(idx))
            for j, row in enumerate(pts):
                try:
                    sub[j] = program.run(row)
                except Exception:
                    sub[j] = np.nan
            values = sub
        y = values
        bad_mask = ~np.isfinite(y)
        prev1 = last[idx]
        prev2 = last2[idx]
        hist[idx, 1:] = hist[idx, :-1]
        hist[idx, 0] = np.where(bad_mask, prev1, y)
        finals[idx] = hist[idx, 0]
        last2[idx] = prev1
        last[idx] = np.where(bad_mask, prev1, y)

        if bad_mask.any():
            sel = idx[bad_mask]
            outcomes[sel] = OUTCOME_EVAL_ERROR
            steps[sel] = step
            alive[sel] = False

        ok = ~bad_mask
        div = ok & ((np.abs(y) > div_bound) | (y < dom_lo) | (y > dom_hi))
        conv_hit = ok & (np.abs(y - fp) < tol)
        streak_conv[idx] = np.where(conv_hit, streak_conv[idx] + 1, 0)
        with np.errstate(invalid="ignore"):
            p2_hit = ok & (np.abs(y - prev2) < tol) & (np.abs(y - prev1) > 100.0 * tol)
        streak_p2[idx] = np.where(p2_hit, streak_p2[idx] + 1, 0)

        conv_done = streak_conv[idx] >= t_consec
        p2_done = (streak_p2[idx] >= t_consec) & ~conv_done
        for mask, code in ((div, OUTCOME_DIVERGED),
                           (conv_done & ~div, OUTCOME_CONVERGED),
                           (p2_done & ~div, OUTCOME_PERIOD2)):
            if mask.any():
                sel = idx[mask]
                outcomes[sel] = code
                steps[sel] = step
                alive[sel] = False
    return outcomes, steps, finals
