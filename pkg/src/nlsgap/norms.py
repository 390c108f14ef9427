"""Lebesgue norms and the sum-space norms on ``L^2 + L^mu``.

The infimal decomposition behind ``|u|_{2,mu}`` is found without a
high-dimensional search. Every optimal split ``u = v1 + v2`` lies on the
Pareto frontier of ``(|v1|_2, |v2|_mu)``, and the frontier is traced by
``v2 = s`` solving ``s + alpha |s|^(mu-2) s = u`` pointwise for
``alpha in (0, inf)``. Along it ``|v1|_2`` increases and ``|v2|_mu``
decreases, so

* the sum norm sits where ``alpha = |v1|_2 / |v2|_mu^(mu-1)`` (the first-order
  condition), or at an endpoint;
* the max norm sits where ``|v1|_2 = |v2|_mu``.

Both are scalar root-finds in ``log(alpha)``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.optimize

from . import kernels
from .errors import ConvergenceError, ValidationError
from .lattice import State
from .spectral import SpaceSplit, e_norm, project


def _lp(values, weight, t):
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    if math.isinf(t):
        return float(a.max()) if a.size else 0.0
    m = a.max() if a.size else 0.0
    if m == 0.0:
        return 0.0
    # scale out the maximum to avoid overflow for large t
    return float(m * (weight * np.sum((a / m) ** t)) ** (1.0 / t))


def lp_norm(u: State, t: float) -> float:
    if not (t >= 1):
        raise ValidationError(f"Lebesgue exponent must be >= 1, got {t}")
    return _lp(u.values, u.grid.weight, t)


def omega_mask(u: State) -> np.ndarray:
    """Samples where ``|u| > 1`` (strict)."""
    return np.abs(u.values) > 1.0


def mixed_norm_surrogate(u: State, mu: float) -> float:
    """``|u chi_Omega|_2 + |u chi_Omega^c|_mu`` with ``Omega = {|u| > 1}``.

    One admissible decomposition, hence an upper bound for the exact norm.
    """
    _check_mu(mu)
    mask = omega_mask(u)
    w = u.grid.weight
    return _lp(u.values[mask], w, 2.0) + _lp(u.values[~mask], w, mu)


def _check_mu(mu, nu=2.0):
    if not mu > 2:
        raise ValidationError(f"mu must exceed 2, got {mu}")
    if not 2 <= nu <= mu:
        raise ValidationError(f"nu must lie in [2, mu], got {nu}")


def _split_at(u, alpha, mu, nu):
    """The frontier point ``(v1, v2)`` for the scalarization weight ``alpha``."""
    if nu == 2.0:
        v2 = kernels.sum_inverse(u, alpha, mu)
    else:
        v2 = _general_inverse(u, alpha, mu, nu)
    return u - v2, v2


def _general_inverse(u, alpha, mu, nu):
    # |u - s|^(nu-1) = alpha |s|^(mu-1) for s between 0 and u; bisection on |u|
    a = np.abs(u)
    lo = np.zeros_like(a)
    hi = a.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = (a - mid) ** (nu - 1.0) - alpha * mid ** (mu - 1.0)
        lo = np.where(f > 0, mid, lo)
        hi = np.where(f > 0, hi, mid)
        if np.all(hi - lo <= 1e-16 * np.maximum(a, 1e-300)):
            break
    return np.copysign(0.5 * (lo + hi), u)


def _frontier_root(fun, alpha0, tol, lo_val, hi_val):
    """Root of an increasing function of log(alpha); endpoint values on failure to bracket."""
    lo = hi = math.log(alpha0)
    for _ in range(80):
        if fun(lo) < 0:
            break
        lo -= math.log(10.0)
    else:
        return None, lo_val
    for _ in range(80):
        if fun(hi) > 0:
            break
        hi += math.log(10.0)
    else:
        return None, hi_val
    try:
        root, info = scipy.optimize.brentq(fun, lo, hi, xtol=1e-14, rtol=max(tol, 4.5e-16), maxiter=500, full_output=True)
    except (RuntimeError, ValueError) as exc:
        raise ConvergenceError(f"sum-space norm root search failed: {exc}") from exc
    if not info.converged:
        raise ConvergenceError("sum-space norm root search did not converge", detail=info)
    return math.exp(root), None


def mixed_norm_exact(u: State, mu: float, tol: float = 1e-12, nu: float = 2.0) -> float:
    """``inf { |v1|_nu + |v2|_mu : u = v1 + v2 }``."""
    _check_mu(mu, nu)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    return _exact(u.values.ravel(), u.grid.weight, mu, tol, nu)[0]


def _exact(u, w, mu, tol=1e-12, nu=2.0):
    """Value and optimal ``v1`` of the sum norm for raw samples."""
    n_u = _lp(u, w, nu)
    m_u = _lp(u, w, mu)
    if n_u == 0.0:
        return 0.0, np.zeros_like(u)

    def parts(alpha):
        v1, v2 = _split_at(u, alpha, mu, nu)
        return v1, v2, _lp(v1, w, nu), _lp(v2, w, mu)

    def r(b):
        _, _, a1, a2 = parts(math.exp(b))
        return math.exp(b) * a2 ** (mu - 1.0) - a1 ** (nu - 1.0) if a2 > 0 else 1.0

    alpha0 = n_u ** (nu - 1.0) / m_u ** (mu - 1.0)
    alpha, endpoint = _frontier_root(r, alpha0, tol, m_u, n_u)
    candidates = [(m_u, np.zeros_like(u)), (n_u, u.copy())]
    if endpoint is None:
        v1, _, a1, a2 = parts(alpha)
        candidates.append((a1 + a2, v1))
    return min(candidates, key=lambda c: c[0])


def mixed_norm_maxform(u: State, mu: float, tol: float = 1e-12, nu: float = 2.0) -> float:
    """``inf { max(|v1|_nu, |v2|_mu) : u = v1 + v2 }``."""
    _check_mu(mu, nu)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    x = u.values.ravel()
    w = u.grid.weight
    n_u = _lp(x, w, nu)
    if n_u == 0.0:
        return 0.0

    def s(b):
        v1, v2 = _split_at(x, math.exp(b), mu, nu)
        return _lp(v1, w, nu) - _lp(v2, w, mu)

    alpha, endpoint = _frontier_root(s, n_u / _lp(x, w, mu) ** (mu - 1.0), tol, n_u, n_u)
    if endpoint is not None:
        return endpoint
    v1, v2 = _split_at(x, alpha, mu, nu)
    return max(_lp(v1, w, nu), _lp(v2, w, mu))


def full_norm(u: State, split: SpaceSplit, mu: float) -> float:
    """``(|u+|_E^2 + |u'|_E^2 + |u'|_{2,mu}^2)^(1/2)``."""
    uprime = project(u, split, "minus")
    return math.sqrt(e_norm(u, split) ** 2 + mixed_norm_exact(uprime, mu) ** 2)
