"""Hot inner loops with two interchangeable backends.

``numpy_backend`` is always available; ``numba_backend`` holds the same
functions compiled with ``@njit``. ``active`` is whichever one the environment
selected (see :mod:`robustcover._accel`). Both backends take and return plain
numpy arrays and agree to floating-point round-off.
"""
from .._accel import USE_NUMBA
from . import numpy_backend

if USE_NUMBA:
    from . import numba_backend as active
else:
    active = numpy_backend

BACKEND = "numba" if USE_NUMBA else "numpy"

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_LEAKY_RELU = 2
ACT_TANH = 3

__all__ = ["active", "numpy_backend", "BACKEND",
           "ACT_IDENTITY", "ACT_RELU", "ACT_LEAKY_RELU", "ACT_TANH"]
