"""The Nehari-Pankov map and the reduced functional on the unit sphere of E+.

For a unit ``w`` in E+ the fiber ``{t w + h' : t >= 0, h' in E'}`` carries a
unique maximizer of ``J``; it is found as ``max_t phi(t)`` with

    phi(t) = t**2 / 2 - min_{h'} Phi_t(h'),
    Phi_t(h') = 1/2 |h'|_E**2 + integral G(x, t w + h').

``Phi_t`` is strictly convex, so the inner problem is solved by damped
Newton in the coordinates of the E' eigenbasis. ``phi`` is unimodal on
``t >= 0``; it is bracketed by doubling, narrowed by golden section and
polished by Newton steps on ``phi'(t) = 0`` using the exact second
derivative of the reduced function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DegenerateFiberError, EPrimeError, ValidationError
from .functional import NonlinearitySpec, _energy
from .lattice import State
from .norms import full_norm
from .spectral import SpaceSplit

_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class FiberOptions:
    """Tolerances of the fiber maximization.

    ``inner_tol`` bounds the sup-norm of the inner gradient relative to the
    size of its two terms, ``width`` is
    the relative golden-section bracket width handed to the Newton polish.
    """

    inner_tol: float = 1e-12
    inner_max_iter: int = 100
    width: float = 1e-4
    newton_steps: int = 5
    psi_floor: float = 1e-12
    max_doublings: int = 60
    unit_tol: float = 1e-10
    warm_newton: bool = True
    warm_steps: int = 8


@dataclass
class _Inner:
    d: np.ndarray
    u: np.ndarray
    Phi: float
    grad_norm: float
    iterations: int
    chol: tuple | None


@dataclass
class FiberResult:
    """Raw outcome of one fiber maximization, in eigen-coordinates."""

    t: float
    d: np.ndarray
    u: np.ndarray
    psi: float
    dphi: float
    inner_grad: float
    evaluations: int
    inner_iterations: int

    @property
    def residual(self) -> float:
        return max(abs(self.dphi), self.inner_grad)


class FiberSolver:
    """Fiber maximization and reduced gradient for one split and nonlinearity.

    Plus-part states are handled through their coefficient vectors ``a``
    (L2 coefficients on the E+ eigenfunctions), minus parts through ``d``.
    """

    def __init__(self, split: SpaceSplit, spec: NonlinearitySpec):
        energy = _energy(split, spec)
        self.split = split
        self.spec = spec
        self.field = energy.field
        self.w = split.grid.weight
        self.Bp = split.plus_functions
        self.Bm = split.minus_functions
        self.lp = split.plus_eigenvalues
        self.lm = split.minus_abs_eigenvalues

    # -- coordinates --------------------------------------------------------

    def plus_coeffs(self, w: State, unit_tol: float = 1e-10) -> np.ndarray:
        c = self.split.spectrum.coefficients(w)
        a = c[self.split.plus_idx]
        rest = c[self.split.minus_idx]
        scale = float(np.linalg.norm(c))
        if scale == 0.0:
            raise ValidationError("w must be nonzero")
        if rest.size and np.linalg.norm(rest) > unit_tol * scale:
            raise ValidationError("w must lie in E+ (its E' component is not zero)")
        norm = math.sqrt(float(np.sum(self.lp * a * a)))
        if abs(norm - 1.0) > unit_tol:
            raise ValidationError(f"w must be a unit vector in the E-norm, got norm {norm:.12g}")
        return a

    def minus_coeffs(self, h: State) -> np.ndarray:
        return np.array(self.split.spectrum.coefficients(h)[self.split.minus_idx])

    def state(self, a=None, d=None) -> State:
        c = np.zeros(self.split.spectrum.size)
        if a is not None:
            c[self.split.plus_idx] = a
        if d is not None:
            c[self.split.minus_idx] = d
        return self.split.spectrum.synthesize(c)

    # -- inner problem ------------------------------------------------------

    def _Phi(self, d, u):
        return 0.5 * float(np.dot(self.lm, d * d)) + self.w * float(np.sum(self.field.G(u)))

    def inner(self, wv, t, d0=None, tol=1e-12, max_iter=100) -> _Inner:
        """Minimize ``Phi_t`` over E' starting from ``d0``."""
        n = self.lm.size
        if n == 0:
            u = t * wv
            return _Inner(np.zeros(0), u, self._Phi(np.zeros(0), u), 0.0, 0, None)
        d = np.zeros(n) if d0 is None else np.array(d0, dtype=float)
        u = t * wv + self.Bm @ d
        Phi = self._Phi(d, u)
        for it in range(max_iter + 1):
            quad = self.lm * d
            force = self.w * (self.Bm.T @ self.field.g(u))
            grad = quad + force
            H = np.diag(self.lm) + self.w * (self.Bm.T @ (self.field.dg(u)[:, None] * self.Bm))
            chol = self._factor(H)
            gnorm = float(np.max(np.abs(grad)))
            # the two terms of the gradient cancel at the minimizer; compare against their size
            scale = max(1.0, float(np.max(np.abs(quad))), float(np.max(np.abs(force))))
            if gnorm <= tol * scale:
                return _Inner(d, u, Phi, gnorm, it, chol)
            if it == max_iter:
                break
            step = -scipy.linalg.cho_solve(chol, grad)
            slope = float(np.dot(grad, step))
            if -slope <= 1e-14 * (1.0 + abs(Phi)):
                # quadratic regime: the Newton step is below the resolution of Phi
                d = d + step
                u = t * wv + self.Bm @ d
                Phi = self._Phi(d, u)
                if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(d))):
                    grad = self.lm * d + self.w * (self.Bm.T @ self.field.g(u))
                    return _Inner(d, u, Phi, float(np.max(np.abs(grad))), it + 1, chol)
                continue
            s = 1.0
            for _ in range(50):
                dn = d + s * step
                un = t * wv + self.Bm @ dn
                Pn = self._Phi(dn, un)
                if Pn <= Phi + 1e-4 * s * slope:
                    break
                s *= 0.5
            else:
                raise ConvergenceError(
                    f"inner Newton line search failed at t={t:.6g}", detail={"grad": gnorm, "iterations": it}
                )
            d, u, Phi = dn, un, Pn
        raise ConvergenceError(
            f"inner Newton did not reach tol {tol:g} in {max_iter} iterations (grad {gnorm:.3e})",
            detail={"grad": gnorm, "iterations": max_iter},
        )

    def _factor(self, H):
        try:
            return scipy.linalg.cho_factor(H)
        except np.linalg.LinAlgError:
            # edge modes where g'(u) vanishes: floor their curvature
            kappa = 1e-6 * self.split.beta_num
            return scipy.linalg.cho_factor(H + kappa * np.eye(H.shape[0]))

    def _derivatives(self, wv, t, r: _Inner):
        gu = self.field.g(r.u)
        dphi = t - self.w * float(np.dot(gu, wv))
        dgw = self.field.dg(r.u) * wv
        d2 = 1.0 - self.w * float(np.dot(dgw, wv))
        if r.chol is not None:
            a = self.w * (self.Bm.T @ dgw)
            d2 += float(np.dot(a, scipy.linalg.cho_solve(r.chol, a)))
        return dphi, d2

    # -- fiber --------------------------------------------------------------

    def fiber(self, a, opts: FiberOptions = FiberOptions(), t_init=None, d_init=None) -> FiberResult:
        wv = self.Bp @ a
        cache = {}
        count = {"inner": 0}

        def evaluate(t):
            r = cache.get(t)
            if r is None:
                if cache:
                    tn = min(cache, key=lambda s: abs(s - t))
                    d0 = cache[tn].d * (t / tn) if tn > 0 else cache[tn].d
                else:
                    d0 = None if d_init is None else d_init
                r = self.inner(wv, t, d0, opts.inner_tol, opts.inner_max_iter)
                count["inner"] += r.iterations
                cache[t] = r
            return r

        def phi(t):
            return 0.5 * t * t - evaluate(t).Phi

        t0 = 1.0 if t_init is None else float(t_init)
        if not t0 > 0:
            raise ValidationError("t_init must be positive")
        if t_init is not None and opts.warm_newton:
            fast = self._warm_newton(wv, t0, evaluate, opts)
            if fast is not None:
                t, r, dphi = fast
                return FiberResult(t, r.d, r.u, 0.5 * t * t - r.Phi, dphi, r.grad_norm, len(cache), count["inner"])
        ts = [0.0, t0] if t_init is None else [0.0, 0.5 * t0, t0]
        fs = [0.0] + [phi(t) for t in ts[1:]]
        while not (len(fs) >= 3 and fs[-1] < fs[-2] < fs[-3]):
            if len(ts) > opts.max_doublings:
                raise DegenerateFiberError(
                    f"phi kept increasing up to t={ts[-1]:.3e}; the fiber has no maximum"
                )
            ts.append(2.0 * ts[-1])
            fs.append(phi(ts[-1]))
        i = int(np.argmax(fs))
        while i == 0 and ts[1] > 1e-12 * t0:
            # every sample lies past the maximum: halve towards zero
            ts.insert(1, 0.5 * ts[1])
            fs.insert(1, phi(ts[1]))
            i = int(np.argmax(fs))
        if fs[i] <= opts.psi_floor:
            raise DegenerateFiberError(f"max of phi on the fiber is {fs[i]:.3e} <= psi floor")
        lo = ts[i - 1] if i > 0 else 0.0
        hi = ts[i + 1]

        # golden section for the maximum
        x1 = hi - _GOLD * (hi - lo)
        x2 = lo + _GOLD * (hi - lo)
        f1, f2 = phi(x1), phi(x2)
        while hi - lo > opts.width * hi:
            if f1 > f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - _GOLD * (hi - lo)
                f1 = phi(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + _GOLD * (hi - lo)
                f2 = phi(x2)
        t = x1 if f1 > f2 else x2

        # Newton polish on phi'(t) = 0
        r = evaluate(t)
        dphi, d2 = self._derivatives(wv, t, r)
        for _ in range(opts.newton_steps):
            if abs(dphi) <= 1e-14 * (1.0 + t) or d2 >= 0:
                break
            tn = t - dphi / d2
            if not lo <= tn <= hi:
                break
            if abs(tn - t) <= 4e-16 * t:
                break
            t = tn
            r = evaluate(t)
            dphi, d2 = self._derivatives(wv, t, r)
        psi = 0.5 * t * t - r.Phi
        return FiberResult(t, r.d, r.u, psi, dphi, r.grad_norm, len(cache), count["inner"])

    def _warm_newton(self, wv, t, evaluate, opts):
        """Newton on ``phi'`` from a nearby maximizer; None when it is not safe.

        A root of ``phi'`` with ``phi'' < 0`` is the maximum because ``phi``
        is unimodal, so the bracket can be skipped when this converges
        inside ``[t/2, 2 t]``.
        """
        lo, hi = 0.5 * t, 2.0 * t
        for _ in range(opts.warm_steps):
            r = evaluate(t)
            dphi, d2 = self._derivatives(wv, t, r)
            if d2 >= 0:
                return None
            if abs(dphi) <= 1e-14 * (1.0 + t):
                break
            tn = t - dphi / d2
            if not lo <= tn <= hi:
                return None
            if abs(tn - t) <= 4e-16 * t:
                break
            t = tn
        else:
            return None
        if 0.5 * t * t - r.Phi <= opts.psi_floor:
            return None
        return t, r, dphi

    def tangent_gradient(self, a, fr: FiberResult) -> np.ndarray:
        """E-metric gradient of Psi at ``a``, tangent to the unit sphere."""
        gl2 = self.lp * (fr.t * a) - self.w * (self.Bp.T @ self.field.g(fr.u))
        grad = fr.t * gl2 / self.lp
        grad -= float(np.dot(self.lp * grad, a)) * a
        return grad


def _solver(split, spec) -> FiberSolver:
    cache = split.__dict__.setdefault("_fiber_cache", {})
    s = cache.get(spec)
    if s is None:
        s = cache[spec] = FiberSolver(split, spec)
    return s


@dataclass(frozen=True, eq=False)
class NehariPoint:
    """The image ``u = t w + h'`` of a unit ``w`` in E+ on the manifold."""

    w: State
    t: float
    h: State
    u: State
    psi: float
    residual_fiber: float
    residual_manifold: tuple | None
    evaluations: int
    inner_iterations: int
    _a: np.ndarray = field(repr=False, default=None)
    _d: np.ndarray = field(repr=False, default=None)


def inner_minimize(w: State, t: float, split: SpaceSplit, spec: NonlinearitySpec, tol: float = 1e-12, h_init: State | None = None):
    """Minimize ``Phi_t`` over E'; returns ``(h', Phi_t(h'), iterations)``.

    ``w`` may be any element of E+ here (no normalization is required).
    """
    solver = _solver(split, spec)
    c = split.spectrum.coefficients(w)
    wv = solver.Bp @ c[split.plus_idx]
    d0 = None if h_init is None else solver.minus_coeffs(h_init)
    r = solver.inner(wv, float(t), d0, tol)
    return solver.state(d=r.d), r.Phi, r.iterations


def nehari_map(
    w: State,
    split: SpaceSplit,
    spec: NonlinearitySpec,
    opts: FiberOptions | None = None,
    h_init: State | None = None,
    t_init: float | None = None,
    residuals: bool = True,
) -> NehariPoint:
    """Map a unit ``w`` in E+ to the maximizer of ``J`` on its fiber.

    ``t_init`` and ``h_init`` are warm starts. With ``residuals`` the
    normalized manifold residuals of the image are evaluated as well.
    """
    opts = FiberOptions() if opts is None else opts
    solver = _solver(split, spec)
    a = solver.plus_coeffs(w, opts.unit_tol)
    d0 = None if h_init is None else solver.minus_coeffs(h_init)
    fr = solver.fiber(a, opts, t_init, d0)
    u = State(split.grid, fr.u)
    h = solver.state(d=fr.d)
    res = manifold_residual(u, split, spec) if residuals else None
    return NehariPoint(w, fr.t, h, u, fr.psi, fr.residual, res, fr.evaluations, fr.inner_iterations, a, fr.d)


def psi_value_and_grad(w: State, split: SpaceSplit, spec: NonlinearitySpec, opts: FiberOptions | None = None):
    """``Psi(w) = J(n(w))`` and its tangent gradient in the E-metric.

    The gradient is the E+ element ``g`` with ``D Psi(w)[z] = <g, z>_E`` for
    tangent ``z``; it is orthogonal to ``w``.
    """
    opts = FiberOptions() if opts is None else opts
    solver = _solver(split, spec)
    a = solver.plus_coeffs(w, opts.unit_tol)
    fr = solver.fiber(a, opts)
    return fr.psi, solver.state(a=solver.tangent_gradient(a, fr))


def manifold_residual(u: State, split: SpaceSplit, spec: NonlinearitySpec):
    """Normalized defects ``(r_u, r_E')`` of the manifold conditions.

    ``r_u = |J'(u) u| / N(u)**2`` and ``r_E' = max_i |J'(u) e_i| / N(u)``
    over the E' eigenfunctions, with ``N`` the full norm.
    """
    energy = _energy(split, spec)
    c = split.spectrum.coefficients(u)
    cp = c[split.plus_idx]
    if not np.any(cp) or np.linalg.norm(cp) <= 1e-14 * np.linalg.norm(c):
        raise EPrimeError("u lies in E' (its E+ component vanishes); the manifold residual is undefined")
    grad = energy.gradient(c, u.flat)
    N = full_norm(u, split, spec.mu)
    r_u = abs(float(np.dot(grad, c))) / N ** 2
    r_e = float(np.max(np.abs(grad[split.minus_idx]))) / N if split.n_minus else 0.0
    return r_u, r_e


@dataclass
class DominanceReport:
    n_samples: int
    violations: list
    worst_margin: float
    slack: float

    @property
    def passed(self) -> bool:
        return not self.violations


def dominance_check(
    point: NehariPoint,
    split: SpaceSplit,
    spec: NonlinearitySpec,
    n_samples: int = 1000,
    rng_seed: int = 0,
    slack: float = 1e-10,
) -> DominanceReport:
    """Sample the fiber of ``point`` and verify ``J(t u + h') < J(u) + slack``.

    ``t`` is log-uniform in ``[0.1, 10]`` and ``h'`` a random E' element of
    E-norm up to twice that of the maximizer's E' part. The margin is
    ``J(t u + h') - J(u)``; a violation is recorded when it exceeds ``slack``.
    """
    energy = _energy(split, spec)
    solver = _solver(split, spec)
    rng = np.random.default_rng(rng_seed)
    c_u = split.spectrum.coefficients(point.u)
    J0 = energy.J(c_u, point.u.flat)
    lm = solver.lm
    h_norm = math.sqrt(float(np.dot(lm, point._d * point._d))) if point._d is not None and lm.size else 0.0
    violations = []
    worst = -np.inf
    for k in range(n_samples):
        t = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        c = t * np.array(c_u)
        if lm.size:
            z = rng.standard_normal(lm.size)
            zn = math.sqrt(float(np.dot(lm, z * z)))
            r = rng.uniform(0.0, 2.0 * h_norm)
            if zn > 0:
                c[split.minus_idx] += r * z / zn
        margin = energy.J(c) - J0
        worst = max(worst, margin)
        if margin > slack:
            violations.append({"sample": k, "t": t, "margin": margin})
    return DominanceReport(n_samples, violations, float(worst), slack)
