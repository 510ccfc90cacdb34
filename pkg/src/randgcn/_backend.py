"""Kernel backend selection.

The compiled extension is used when importable; ``RANDGCN_PURE_PYTHON=1``
forces the reference implementation.
"""

import os

if os.environ.get("RANDGCN_PURE_PYTHON", "") not in ("", "0"):
    from randgcn import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from randgcn import _kernels as kernels

        BACKEND = "cython"
    except ImportError:
        from randgcn import _kernels_py as kernels

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
