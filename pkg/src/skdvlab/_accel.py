"""Select the compiled kernel module, falling back to pure numpy.

Set SKDVLAB_PURE=1 to force the numpy fallback (used by the benchmark).
"""

import os

if os.environ.get("SKDVLAB_PURE"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_c as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND
