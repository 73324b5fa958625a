"""Select the compiled kernels when available, numpy otherwise.

Set ``FDNFIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

python = _kernels_py

if os.environ.get("FDNFIT_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
NAME = "cython" if compiled is not None else "python"

fdn_forward = active.fdn_forward
fdn_backward = active.fdn_backward
fdn_integer = active.fdn_integer
soft_density = active.soft_density
soft_density_vjp = active.soft_density_vjp
