"""Hot numerical kernels, compiled when available.

The Cython extension ``funasm._kernels._core`` is preferred; a NumPy
fallback with identical semantics is selected when the extension is
missing or when the environment variable FUNASM_PURE_KERNELS is set to a
nonempty value other than "0".  ``BACKEND`` records the choice.
"""

import os

if os.environ.get("FUNASM_PURE_KERNELS", "0") not in ("", "0"):
    from . import pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import pure as _impl

        BACKEND = "pure"

apply_neg_laplacian = _impl.apply_neg_laplacian
solve_poisson = _impl.solve_poisson

__all__ = ["BACKEND", "apply_neg_laplacian", "solve_poisson"]
