"""Execution backend selection.

The hot kernels (batch expression evaluation, orbit iteration) exist twice:
a compiled Cython core (``_native``) and a numpy/pure-Python fallback
(``pyvm``).  The compiled one is used when importable; set the environment
variable ``STABCERT_KERNELS=python`` or ``=compiled`` to force a choice.
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import importlib
import os

from . import pyvm

_choice = os.environ.get("STABCERT_KERNELS", "auto").lower()

_native = None
if _choice in ("auto", "compiled"):
    try:
        _native = importlib.import_module(__name__ + "._native")
    except ImportError:
        _native = None
        if _choice == "compiled":
            raise

_backend = _native if _native is not None else pyvm

BACKEND = _backend.NAME

OUTCOME_CONVERGED = pyvm.OUTCOME_CONVERGED
OUTCOME_DIVERGED = pyvm.OUTCOME_DIVERGED
OUTCOME_PERIOD2 = pyvm.OUTCOME_PERIOD2
OUTCOME_MAXITER = pyvm.OUTCOME_MAXITER
OUTCOME_EVAL_ERROR = pyvm.OUTCOME_EVAL_ERROR

eval_batch = _backend.eval_batch
orbit = _backend.orbit
orbit_batch = _backend.orbit_batch


def available_backends() -> list:
    names = ["python"]
    if _native is not None:
        names.append("compiled")
    return names
