"""Pick the compiled event loop when available.

Set ``THETANET_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

if os.environ.get("THETANET_PURE_PYTHON", "") == "1":
    from . import _pykernel as kernel
else:
    try:
        from . import _kernel as kernel
    except ImportError:  # extension not built
        from . import _pykernel as kernel

BACKEND = kernel.BACKEND
run_events = kernel.run_events


def get_kernel(name=None):
    """Return the kernel module by name ('cython' or 'python'); default is the active one."""
    if name is None:
        return kernel
    if name == "python":
        from . import _pykernel
        return _pykernel
    if name == "cython":
        from . import _kernel
        return _kernel
    raise ValueError(f"unknown backend {name!r}")
