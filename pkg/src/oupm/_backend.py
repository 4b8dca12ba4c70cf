"""Pick the kernel implementation at import time.

The compiled extension is used when it imports cleanly; setting
``OUPM_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if not os.environ.get("OUPM_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = kernels.BACKEND
