"""Pointwise kernels on grid samples.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorized numpy version. The public names at the bottom of the module are
bound to one or the other according to :data:`nlsgap._jit.JIT_ENABLED`;
both variants stay importable for cross-checks and benchmarks.

Nonlinearity kind codes: ``POWER`` is ``q|u|^(p-2) u``, ``LOGTYPE`` is
``q u ln(1 + |u|^(p-2))``. The closed-form primitive of ``LOGTYPE`` exists
only for ``p = 4``; other exponents are integrated in
:mod:`nlsgap.functional`.
"""

import math

import numpy as np

from ._jit import JIT_ENABLED, njit

POWER = 0
LOGTYPE = 1

# below this value of u**2 the logtype primitive switches to its series
_SERIES_CUT = 1e-3
# a few ulps: the Newton iterate can cycle between neighbouring floats
_NEWTON_STOP = 4 * 2.220446049250313e-16


# -- numba variants ---------------------------------------------------------


@njit(cache=True, inline="always")
def _pow(s, e):
    # numpy turns ** 2 into a square; numba calls the generic pow
    if e == 2.0:
        return s * s
    if e == 3.0:
        return s * s * s
    if e == 4.0:
        z = s * s
        return z * z
    return s ** e


@njit(cache=True)
def _g_loop(kind, p, q, u):
    out = np.empty_like(u)
    m = p - 2.0
    for i in range(u.size):
        s = abs(u[i])
        if s == 0.0:
            out[i] = 0.0
        elif kind == POWER:
            out[i] = q[i] * _pow(s, m) * u[i]
        else:
            out[i] = q[i] * u[i] * math.log1p(_pow(s, m))
    return out


@njit(cache=True)
def _dg_loop(kind, p, q, u):
    out = np.empty_like(u)
    m = p - 2.0
    for i in range(u.size):
        s = abs(u[i])
        if s == 0.0:
            out[i] = 0.0
        elif kind == POWER:
            out[i] = q[i] * (p - 1.0) * _pow(s, m)
        else:
            sm = _pow(s, m)
            out[i] = q[i] * (math.log1p(sm) + m * sm / (1.0 + sm))
    return out


@njit(cache=True)
def _G_loop(kind, p, q, u):
    out = np.empty_like(u)
    for i in range(u.size):
        s = abs(u[i])
        if kind == POWER:
            out[i] = q[i] * _pow(s, p) / p
        else:
            z = s * s
            if z < _SERIES_CUT:
                acc = z * z * (
                    0.5 - z * (1.0 / 6.0 - z * (1.0 / 12.0 - z * (1.0 / 20.0 - z / 30.0)))
                )
            else:
                acc = (1.0 + z) * math.log1p(z) - z
            out[i] = 0.5 * q[i] * acc
    return out


@njit(cache=True)
def _sum_inverse_loop(u, alpha, mu):
    # solve s + alpha |s|^(mu-2) s = u pointwise; Newton from the right on a
    # convex increasing function is monotone
    out = np.empty_like(u)
    e = mu - 1.0
    for i in range(u.size):
        a = abs(u[i])
        if a == 0.0 or alpha == 0.0:
            out[i] = u[i]
            continue
        s = min(a, (a / alpha) ** (1.0 / e))
        for _ in range(100):
            se = _pow(s, e)
            f = s + alpha * se - a
            step = f / (1.0 + alpha * e * se / s)
            s_new = s - step
            if s_new <= 0.0:
                s_new = 0.5 * s
            if abs(s_new - s) <= _NEWTON_STOP * s:
                s = s_new
                break
            s = s_new
        out[i] = math.copysign(s, u[i])
    return out


# -- numpy variants ---------------------------------------------------------


def _g_vec(kind, p, q, u):
    s = np.abs(u)
    if kind == POWER:
        return q * s ** (p - 2.0) * u
    return q * u * np.log1p(s ** (p - 2.0))


def _dg_vec(kind, p, q, u):
    s = np.abs(u)
    m = p - 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        if kind == POWER:
            out = q * (p - 1.0) * s ** m
        else:
            sm = s ** m
            out = q * (np.log1p(sm) + m * sm / (1.0 + sm))
    out[s == 0.0] = 0.0
    return out


def _G_vec(kind, p, q, u):
    s = np.abs(u)
    if kind == POWER:
        return q * s ** p / p
    z = s * s
    series = z * z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 12.0 - z * (1.0 / 20.0 - z / 30.0))))
    closed = (1.0 + z) * np.log1p(z) - z
    return 0.5 * q * np.where(z < _SERIES_CUT, series, closed)


def _sum_inverse_vec(u, alpha, mu):
    a = np.abs(u)
    if alpha == 0.0:
        return u.copy()
    e = mu - 1.0
    s = np.minimum(a, (a / alpha) ** (1.0 / e))
    active = s > 0.0
    for _ in range(100):
        if not active.any():
            break
        sa = s[active]
        se = sa ** e
        step = (sa + alpha * se - a[active]) / (1.0 + alpha * e * se / sa)
        s_new = sa - step
        s_new = np.where(s_new <= 0.0, 0.5 * sa, s_new)
        done = np.abs(s_new - sa) <= _NEWTON_STOP * sa
        s[active] = s_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return np.copysign(s, u)


def _flat(kernel):
    def call(kind, p, q, u):
        u = np.asarray(u, dtype=float)
        q = np.broadcast_to(np.asarray(q, dtype=float), u.shape)
        out = kernel(int(kind), float(p), np.ascontiguousarray(q).ravel(), np.ascontiguousarray(u).ravel())
        return out.reshape(u.shape)

    return call


numba_kernels = {
    "g": _flat(_g_loop),
    "dg": _flat(_dg_loop),
    "G": _flat(_G_loop),
}
numpy_kernels = {
    "g": _flat(_g_vec),
    "dg": _flat(_dg_vec),
    "G": _flat(_G_vec),
}


def _sum_inverse_numba(u, alpha, mu):
    u = np.asarray(u, dtype=float)
    return _sum_inverse_loop(np.ascontiguousarray(u).ravel(), float(alpha), float(mu)).reshape(u.shape)


def _sum_inverse_numpy(u, alpha, mu):
    u = np.asarray(u, dtype=float)
    return _sum_inverse_vec(u.ravel().copy(), float(alpha), float(mu)).reshape(u.shape)


numba_kernels["sum_inverse"] = _sum_inverse_numba
numpy_kernels["sum_inverse"] = _sum_inverse_numpy

_active = numba_kernels if JIT_ENABLED else numpy_kernels

g_values = _active["g"]
dg_values = _active["dg"]
G_values = _active["G"]
sum_inverse = _active["sum_inverse"]
