"""Optional numba acceleration.

Hot kernels are decorated with :func:`njit`. When numba is missing, or the
environment variable ``NLSGAP_DISABLE_JIT`` is set to a truthy value, the
decorator is a no-op and :data:`JIT_ENABLED` is False; callers then dispatch
to the vectorized numpy implementations instead of running the scalar loops
under the interpreter.
"""

import os

_truthy = {"1", "true", "yes", "on"}

JIT_REQUESTED = os.environ.get("NLSGAP_DISABLE_JIT", "").strip().lower() not in _truthy

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

JIT_ENABLED = JIT_REQUESTED and HAVE_NUMBA


def _identity_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(f):
        return f

    return wrapper


if HAVE_NUMBA:
    njit = numba.njit
else:  # pragma: no cover
    njit = _identity_jit
