"""Streaming kernels with a compiled fast path and a NumPy fallback.

The per-sample loops (IIR filtering, piecewise-quadratic evaluation, the
two feedback update loops) dominate the runtime of long runs, so they are
implemented twice: once in Cython (``_fastloops``) and once on top of
NumPy/SciPy (``_pyref``).  The active backend is chosen at import:

* ``NOISECAL_KERNELS=c``    require the compiled extension, fail otherwise
* ``NOISECAL_KERNELS=py``   force the NumPy fallback
* unset or ``auto``         use the extension if it imports, else fall back

Integer kernels produce bit-identical streams on both backends.  Float
kernels agree to rounding error (~1e-12 relative); tests pin this.  Both
backends carry their loop state in the same caller-owned arrays, but the
internal layout of scratch buffers differs, so a state started on one
backend must not be resumed on the other.
"""

import os

_choice = os.environ.get("NOISECAL_KERNELS", "auto").lower()

if _choice not in ("auto", "c", "py"):
    raise ImportError(f"NOISECAL_KERNELS must be 'auto', 'c' or 'py', got {_choice!r}")

if _choice == "py":
    from . import _pyref as _impl

    BACKEND = "py"
else:
    try:
        from . import _fastloops as _impl

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise ImportError(
                "NOISECAL_KERNELS=c but the compiled extension is not available; "
                "rebuild the package or set NOISECAL_KERNELS=py"
            ) from None
        from . import _pyref as _impl

        BACKEND = "py"

biquad_df2t = _impl.biquad_df2t
block_gather_stats = _impl.block_gather_stats
quad_eval = _impl.quad_eval
weight_update_run = _impl.weight_update_run
pwl_run = _impl.pwl_run

# state/parameter vector layout shared by both backends
from ._layout import *  # noqa: F401,F403
