"""Kernel selection: the compiled extension when available, else numpy/scipy.

Set ``ACEFLOW_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"
if not os.environ.get("ACEFLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        BACKEND = "compiled"
else:
    _compiled = None


def _compiled_solver(indptr, indices, lu, diag):
    def solve(b):
        return _compiled.ilu0_solve(indptr, indices, lu, diag, b)

    return solve


class Backend:
    def __init__(self, name, ilu0_factor, make_ilu0_solver, skew_convection):
        self.name = name
        self.ilu0_factor = ilu0_factor
        self.make_ilu0_solver = make_ilu0_solver
        self.skew_convection = skew_convection


def backend(name: str | None = None) -> Backend:
    """Kernel set for ``name`` ("compiled" or "python"), or the default."""
    name = name or BACKEND
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return Backend(name, _compiled.ilu0_factor, _compiled_solver, _compiled.skew_convection)
    if name == "python":
        return Backend(name, _fallback.ilu0_factor, _fallback.make_ilu0_solver, _fallback.skew_convection)
    raise ValueError(f"unknown backend {name!r}")
