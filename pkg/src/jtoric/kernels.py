"""Kernel selection: compiled radial stepper with pure-numpy fallback.

Import-time choice; set JFLOW_FORCE_NUMPY=1 to force the fallback (used by
the benchmark and the agreement tests).
"""
import os

import numpy as np

from .errors import StepFailure

try:
    if os.environ.get("JFLOW_FORCE_NUMPY") == "1":
        raise ImportError("numpy kernel forced via JFLOW_FORCE_NUMPY")
    from . import _radial as _impl
    HAVE_COMPILED = True
except ImportError:
    from . import _radial_numpy as _impl
    HAVE_COMPILED = False

from . import _radial_numpy as numpy_impl

compiled_impl = _impl if HAVE_COMPILED else None

__all__ = ["HAVE_COMPILED", "radial_advance", "numpy_impl", "compiled_impl"]


def radial_advance(f, B, h, a, n, cfl, t_start, t_end,
                   max_steps=2_000_000_000, impl=None):
    """Advance the radial profile f in place; returns (t_reached, steps).

    Raises StepFailure if the profile loses monotonicity or the step budget
    is exhausted before t_end.
    """
    f = np.ascontiguousarray(f, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    mod = impl if impl is not None else _impl
    t, steps, status = mod.advance(f, B, float(h), float(a), int(n),
                                   float(cfl), float(t_start), float(t_end),
                                   int(max_steps))
    if status == 1:
        raise StepFailure(
            f"radial profile lost monotonicity at t = {t:.6g}")
    if status == 2:
        raise StepFailure(
            f"step budget {max_steps} exhausted at t = {t:.6g} < {t_end:.6g}")
    return f, t, steps
