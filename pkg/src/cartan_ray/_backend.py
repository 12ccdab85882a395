"""Select the compiled kernel when it is importable, else the Python twin."""

import os

if os.environ.get("CARTAN_RAY_BACKEND", "").lower() == "python":
    from . import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _pykernels as kernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
