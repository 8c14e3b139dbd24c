# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled execution backend: batch expression evaluation and orbit loops.

Mirrors the semantics of ``pyvm`` exactly (same opcodes, same outcome codes);
selected automatically at import when the build is available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp, fabs, isfinite, log as c_log, pow as c_pow, sqrt as c_sqrt

cnp.import_array()

NAME = "compiled"

DEF C_CONVERGED = 0
DEF C_DIVERGED = 1
DEF C_PERIOD2 = 2
DEF C_MAXITER = 3
DEF C_EVAL_ERROR = 4

OUTCOME_CONVERGED = C_CONVERGED
OUTCOME_DIVERGED = C_DIVERGED
OUTCOME_PERIOD2 = C_PERIOD2
OUTCOME_MAXITER = C_MAXITER
OUTCOME_EVAL_ERROR = C_EVAL_ERROR

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_NEG = 2
DEF OP_ADD = 3
DEF OP_SUB = 4
DEF OP_MUL = 5
DEF OP_DIV = 6
DEF OP_POW = 7
DEF OP_EXP = 8
DEF OP_LOG = 9
DEF OP_SQRT = 10
DEF OP_ABS = 11
DEF OP_MIN = 12
DEF OP_MAX = 13


cdef inline double _step(const int* code, int n_instr, const double* consts,
                         double* regs, const double* point, int* fail) nogil:
    """Run the program once on a scalar point; sets *fail to the failing
    instruction index (or -1) and returns the result register value."""
    cdef int i, op, a, b, out
    cdef double v
    fail[0] = -1
    for i in range(n_instr):
        op = code[4 * i]
        a = code[4 * i + 1]
        b = code[4 * i + 2]
        out = code[4 * i + 3]
        if op == OP_CONST:
            v = consts[a]
        elif op == OP_VAR:
            v = point[a]
        elif op == OP_NEG:
            v = -regs[a]
        elif op == OP_ADD:
            v = regs[a] + regs[b]
        elif op == OP_SUB:
            v = regs[a] - regs[b]
        elif op == OP_MUL:
            v = regs[a] * regs[b]
        elif op == OP_DIV:
            v = regs[a] / regs[b]
        elif op == OP_POW:
            v = c_pow(regs[a], regs[b])
        elif op == OP_EXP:
            v = c_exp(regs[a])
        elif op == OP_LOG:
            v = c_log(regs[a])
        elif op == OP_SQRT:
            v = c_sqrt(regs[a])
        elif op == OP_ABS:
            v = fabs(regs[a])
        elif op == OP_MIN:
            v = regs[a] if regs[a] < regs[b] else regs[b]
        else:
            v = regs[a] if regs[a] > regs[b] else regs[b]
        if not isfinite(v):
            fail[0] = i
            return v
        regs[out] = v
    return regs[code[4 * (n_instr - 1) + 3]]


DEF BLOCK = 1024


cdef int _run_block(const int* code, int n_instr, const double* consts,
                    double* regs, const double* pts, double* out,
                    int nb, int k, int result, Py_ssize_t* fail_row) nogil:
    """Execute the program on a block of nb points (column-major registers:
    regs[r * BLOCK + j]).  Returns the failing instruction index or -1;
    *fail_row receives the in-block point index."""
    cdef int i, op, a, b, o, j, bad
    cdef const double* ra
    cdef const double* rb
    cdef double* ro
    cdef double v
    for i in range(n_instr):
        op = code[4 * i]
        a = code[4 * i + 1]
        b = code[4 * i + 2]
        o = code[4 * i + 3]
        ra = regs + a * BLOCK
        rb = regs + b * BLOCK
        ro = regs + o * BLOCK
        if op == OP_CONST:
            v = consts[a]
            for j in range(nb):
                ro[j] = v
            continue
        elif op == OP_VAR:
            for j in range(nb):
                ro[j] = pts[j * k + a]
            continue
        elif op == OP_NEG:
            for j in range(nb):
                ro[j] = -ra[j]
            continue
        elif op == OP_ADD:
            for j in range(nb):
                ro[j] = ra[j] + rb[j]
        elif op == OP_SUB:
            for j in range(nb):
                ro[j] = ra[j] - rb[j]
        elif op == OP_MUL:
            for j in range(nb):
                ro[j] = ra[j] * rb[j]
        elif op == OP_DIV:
            for j in range(nb):
                ro[j] = ra[j] / rb[j]
        elif op == OP_POW:
            for j in range(nb):
                ro[j] = c_pow(ra[j], rb[j])
        elif op == OP_EXP:
            for j in range(nb):
                ro[j] = c_exp(ra[j])
        elif op == OP_LOG:
            for j in range(nb):
                ro[j] = c_log(ra[j])
        elif op == OP_SQRT:
            for j in range(nb):
                ro[j] = c_sqrt(ra[j])
        elif op == OP_ABS:
            for j in range(nb):
                ro[j] = fabs(ra[j])
            continue
        elif op == OP_MIN:
            for j in range(nb):
                ro[j] = ra[j] if ra[j] < rb[j] else rb[j]
            continue
        else:
            for j in range(nb):
                ro[j] = ra[j] if ra[j] > rb[j] else rb[j]
            continue
        bad = 0
        for j in range(nb):
            bad += not isfinite(ro[j])
        if bad:
            for j in range(nb):
                if not isfinite(ro[j]):
                    fail_row[0] = j
                    return i
    for j in range(nb):
        out[j] = regs[result * BLOCK + j]
    return -1


def eval_batch(object program, cnp.ndarray pts_in):
    """Evaluate ``program`` at each row of ``pts`` (shape (N, k))."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] pts = np.ascontiguousarray(
        pts_in if pts_in.ndim == 2 else pts_in[:, None], dtype=np.float64)
    cdef cnp.ndarray[int, ndim=2, mode="c"] code = np.ascontiguousarray(
        program.code, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1, mode="c"] consts = np.ascontiguousarray(
        program.consts, dtype=np.float64)
    cdef int n_instr = code.shape[0]
    cdef int result = program.result
    cdef Py_ssize_t n = pts.shape[0]
    cdef int k = pts.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(
        max(n, 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] regs = np.zeros(
        max(program.n_regs, 1) * BLOCK, dtype=np.float64)
    cdef Py_ssize_t start, bad = -1, fail_row = 0
    cdef int nb, fail_instr = -1
    with nogil:
        start = 0
        while start < n:
            nb = <int> (BLOCK if n - start >= BLOCK else n - start)
            fail_instr = _run_block(&code[0, 0], n_instr, &consts[0],
                                    &regs[0], &pts[start, 0], &out[start],
                                    nb, k, result, &fail_row)
            if fail_instr >= 0:
                bad = start + fail_row
                break
            start += BLOCK
    if bad >= 0:
        raise program.explain_failure(np.asarray(pts[bad]))
    return out[:n]


def orbit(object program, history, int lag, double fp, long n_max, double tol,
          int t_consec, double div_bound, double dom_lo, double dom_hi,
          bint record, long thin_after=10_000, long thin_every=10):
    """Single-orbit loop; see ``pyvm.orbit`` for the contract."""
    cdef cnp.ndarray[int, ndim=2, mode="c"] code = np.ascontiguousarray(
        program.code, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1, mode="c"] consts = np.ascontiguousarray(
        program.consts, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] regs = np.zeros(
        max(program.n_regs, 1), dtype=np.float64)
    cdef int n_instr = code.shape[0]
    cdef int result = program.result
    cdef int k = program.k
    cdef cnp.ndarray[double, ndim=1, mode="c"] h = np.array(history, dtype=np.float64)
    if h.shape[0] != k + lag:
        raise ValueError("history must have length k + lag")
    cdef long max_traj = 0
    if record:
        max_traj = 1 + min(n_max, thin_after) + max(0, (n_max - thin_after)) // thin_every + 2
    cdef cnp.ndarray[double, ndim=1, mode="c"] traj = np.empty(
        max_traj if record else 1, dtype=np.float64)
    cdef long n_traj = 0
    if record:
        traj[0] = h[0]
        n_traj = 1

    cdef int width = k + lag
    cdef int i
    cdef double worst = 0.0
    for i in range(k):
        if fabs(h[i] - fp) > worst:
            worst = fabs(h[i] - fp)
    if worst < tol:
        return C_CONVERGED, 0, h[0], (traj[:n_traj].copy() if record else None), -1

    cdef double last = h[0]
    cdef double last2 = h[1] if width > 1 else float("nan")
    cdef cnp.ndarray[double, ndim=1, mode="c"] point = np.empty(k, dtype=np.float64)
    cdef long step = 0
    cdef int streak_conv = 0, streak_p2 = 0
    cdef int outcome = C_MAXITER
    cdef long err_step = -1
    cdef int fail = -1
    cdef double y = h[0]
    with nogil:
        for step in range(1, n_max + 1):
            for i in range(k):
                point[i] = h[lag + i]
            y = _step(&code[0, 0], n_instr, &consts[0], &regs[0], &point[0], &fail)
            if fail >= 0:
                outcome = C_EVAL_ERROR
                err_step = step
                y = last
                break
            for i in range(width - 1, 0, -1):
                h[i] = h[i - 1]
            h[0] = y
            if record and (step <= thin_after or step % thin_every == 0):
                traj[n_traj] = y
                n_traj += 1
            if fabs(y) > div_bound or y < dom_lo or y > dom_hi:
                outcome = C_DIVERGED
                break
            if fabs(y - fp) < tol:
                streak_conv += 1
                if streak_conv >= t_consec:
                    outcome = C_CONVERGED
                    break
            else:
                streak_conv = 0
            if fabs(y - last2) < tol and fabs(y - last) > 100.0 * tol:
                streak_p2 += 1
                if streak_p2 >= t_consec:
                    outcome = C_PERIOD2
                    break
            else:
                streak_p2 = 0
            last2 = last
            last = y
    if outcome == C_MAXITER:
        step = n_max
    return outcome, step, y, (traj[:n_traj].copy() if record else None), err_step


def orbit_batch(object program, histories, int lag, double fp, long n_max,
                double tol, int t_consec, double div_bound, double dom_lo,
                double dom_hi):
    """Run ``orbit`` over each row of ``histories``; returns arrays."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] hist = np.ascontiguousarray(
        histories, dtype=np.float64)
    cdef Py_ssize_t n = hist.shape[0]
    outcomes = np.empty(n, dtype=np.int64)
    steps = np.empty(n, dtype=np.int64)
    finals = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t row
    for row in range(n):
        o, s, f, _t, _e = orbit(program, hist[row], lag, fp, n_max, tol,
                                t_consec, div_bound, dom_lo, dom_hi, False)
        outcomes[row] = o
        steps[row] = s
        finals[row] = f
    return outcomes, steps, finals
