"""Hot stepping kernels: compiled core with a pure-Python fallback.

The one-step update of the transformed system and of its tangent bundle is
the runtime bottleneck of every experiment, so it is implemented twice with
identical semantics: a Cython extension (`chs._kernels._compiled`) and a
numpy reference (`chs._kernels.reference`).  The backend is selected at
import time; set CHS_BACKEND=python or CHS_BACKEND=compiled to force one.

Both backends consume a :class:`StepPlan`, a plain bundle of precomputed
arrays, and advance state arrays in place.  All per-run determinism claims
hold within a backend; cross-backend agreement is verified to solver
tolerance in the test suite and benchmarked in benchmarks/.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = ["StepPlan", "make_stepper", "available_backends", "BACKEND"]


@dataclass
class StepPlan:
    """Precomputed arrays for one (params, domain, covariance, dt) choice.

    T is the implicit one-step matrix over the unknowns
    (du_interior, dv_0, dv_pi, mass multiplier); fc/fpc are the polynomial
    and derivative coefficients highest-first with trailing zero constant;
    d1/q1/d2/q2 are the exact OU decay factors and increment multipliers;
    E1 maps convolution mode values to the z1 grid field.
    """

    N: int
    dt: float
    theta: float
    eps: float
    eps0: float
    lam: float
    beta: float
    invh2: float
    inv2h: float
    invpi: float
    wq: np.ndarray
    fc: np.ndarray
    fpc: np.ndarray
    T: np.ndarray
    Gcol0: np.ndarray
    Gcolpi: np.ndarray
    E1: np.ndarray
    d1: np.ndarray
    q1: np.ndarray
    d2: np.ndarray
    q2: np.ndarray
    blowup: float = 1e8


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _compiled  # noqa: F401

        out.insert(0, "compiled")
    except ImportError:
        pass
    return out


_requested = os.environ.get("CHS_BACKEND", "auto").lower()

if _requested in ("auto", "compiled"):
    try:
        from ._compiled import CompiledStepper as _Stepper

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from .reference import ReferenceStepper as _Stepper

        BACKEND = "python"
elif _requested == "python":
    from .reference import ReferenceStepper as _Stepper

    BACKEND = "python"
else:
    raise ValueError(f"unknown CHS_BACKEND={_requested!r}")


def make_stepper(plan: StepPlan, backend: str | None = None):
    """Instantiate a stepper for the plan, honoring an explicit backend."""
    if backend is None:
        return _Stepper(plan)
    if backend == "python":
        from .reference import ReferenceStepper

        return ReferenceStepper(plan)
    if backend == "compiled":
        from ._compiled import CompiledStepper

        return CompiledStepper(plan)
    raise ValueError(f"unknown backend {backend!r}")
