"""Selects the compiled stepping core when available.

The extension accelerates only the built-in planar fields; any other field
uses the pure-Python driver.  ``HEAVYBALL_LAB_PURE=1`` forces the pure path
(useful for the backend-agreement tests and the benchmark).
"""
import os

try:
    from . import _core
except ImportError:  # extension not built; pure fallback only
    _core = None

KERNEL_HEAVY_BALL_XY = 1
KERNEL_GRAD_FLOW_XY = 2

_KIND_CODES = {
    "heavy_ball_xy": KERNEL_HEAVY_BALL_XY,
    "grad_flow_xy": KERNEL_GRAD_FLOW_XY,
}


def compiled_available() -> bool:
    return _core is not None and os.environ.get("HEAVYBALL_LAB_PURE", "") != "1"


def kernel_code(kind: str) -> int:
    return _KIND_CODES[kind]


def run_kernel(*args, **kwargs):
    return _core.integrate_kernel(*args, **kwargs)
