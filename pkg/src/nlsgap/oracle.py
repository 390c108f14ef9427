"""Brute-force references for validating the main path.

Nothing here calls the solver modules: operators are rebuilt from explicit
DFT matrices, the nonlinearities are re-implemented in plain numpy, the
full Euler-Lagrange system is solved by damped Newton, Bloch bands come
from a Galerkin matrix with exact Fourier coefficients, sum-space norms
from a generic conic solver and the inner fiber problem from
``scipy.optimize``. The oracles are slow and meant for tiny grids.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize

from .errors import ConvergenceError, ValidationError
from .functional import NonlinearitySpec
from .lattice import Grid, PotentialSpec, State, build_grid

TINY_MAX = 32


# -- finite differences ------------------------------------------------------


def fd_gradient(f, u, step: float = 1e-5):
    """Central-difference partial derivatives of ``f`` at the samples of ``u``.

    ``u`` is a :class:`State` (then ``f`` takes a State and a State is
    returned) or a flat array. These are derivatives with respect to the
    nodal values, i.e. ``h**dim`` times the L2 gradient.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValidationError("step must lie in [1e-7, 1e-3]")
    as_state = isinstance(u, State)
    x = np.array(u.flat if as_state else u, dtype=float)
    wrap = (lambda v: f(State(u.grid, v))) if as_state else f
    out = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (wrap(xp) - wrap(xm)) / (2.0 * step)
    return State(u.grid, out) if as_state else out


# -- reference nonlinearity --------------------------------------------------


def _ref_g(kind, p, q, u):
    if kind == "zero":
        return np.zeros_like(u)
    if kind == "power":
        return q * np.abs(u) ** (p - 2.0) * u
    return q * u * np.log1p(np.abs(u) ** (p - 2.0))


def _ref_dg(kind, p, q, u):
    if kind == "zero":
        return np.zeros_like(u)
    a = np.abs(u)
    if kind == "power":
        return q * (p - 1.0) * a ** (p - 2.0)
    m = p - 2.0
    return q * (np.log1p(a ** m) + m * a ** m / (1.0 + a ** m))


def _ref_G(kind, p, q, u):
    if kind == "zero":
        return np.zeros_like(u)
    a = np.abs(u)
    if kind == "power":
        return q * a ** p / p
    if p == 4:
        s = a * a
        return 0.5 * q * ((1.0 + s) * np.log1p(s) - s)
    prim = np.array([scipy.integrate.quad(lambda r: r * math.log1p(r ** (p - 2.0)), 0.0, x, epsabs=0, epsrel=1e-13)[0] for x in a.ravel()])
    return q * prim.reshape(a.shape)


# -- tiny problems -----------------------------------------------------------


def _dft_laplacian(side: int, h: float) -> np.ndarray:
    j = np.arange(side)
    F = np.exp(-2j * np.pi * np.outer(j, j) / side)
    m = np.where(j <= side // 2, j, j - side)
    if side % 2 == 0:
        # the Nyquist mode is real; its symbol is taken from the positive side
        m[side // 2] = side // 2
    kappa = 2.0 * np.pi * m / (side * h)
    return (F.conj().T @ np.diag(kappa ** 2) @ F).real / side


@dataclass(eq=False)
class TinyProblem:
    """A small grid with its full dense operator ``-Laplacian + V``."""

    grid: Grid
    potential: PotentialSpec
    spec: NonlinearitySpec
    matrix: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if self.grid.size > TINY_MAX:
            raise ValidationError(f"tiny problems are limited to {TINY_MAX} points")
        if np.max(np.abs(self.matrix - self.matrix.T)) > 1e-12:
            raise ValidationError("dense operator is not symmetric")

    @property
    def h(self) -> float:
        return self.grid.weight

    def g(self, u):
        return _ref_g(self.spec.kind, self.spec.p, self.q, u)

    def dg(self, u):
        return _ref_dg(self.spec.kind, self.spec.p, self.q, u)

    def energy(self, u) -> float:
        u = np.ravel(u)
        return 0.5 * self.h * float(u @ self.matrix @ u) - self.h * float(np.sum(_ref_G(self.spec.kind, self.spec.p, self.q, u)))

    def residual(self, u) -> np.ndarray:
        return self.matrix @ u - self.g(u)

    def jacobian(self, u) -> np.ndarray:
        return self.matrix - np.diag(self.dg(u))


def build_tiny(potential: PotentialSpec, spec: NonlinearitySpec, cells: int = 4, points_per_cell: int = 8, dim: int = 1) -> TinyProblem:
    grid = build_grid(dim, cells, points_per_cell)
    if grid.size > TINY_MAX:
        raise ValidationError(f"tiny problems are limited to {TINY_MAX} points, got {grid.size}")
    D1 = _dft_laplacian(grid.side, grid.spacing)
    if dim == 1:
        D = D1
    else:
        eye = np.eye(grid.side)
        D = np.kron(D1, eye) + np.kron(eye, D1)
    D = 0.5 * (D + D.T)
    coords = grid.coordinates()
    V = potential.evaluate(coords, points_per_cell).ravel()
    q = spec.weight.evaluate(coords, points_per_cell).ravel()
    return TinyProblem(grid, potential, spec, D + np.diag(V), q)


def _roll_distance(a, b, tiny: TinyProblem, odd=True):
    grid = tiny.grid
    A = a.reshape(grid.shape)
    B = b.reshape(grid.shape)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    best = math.inf
    for k in np.ndindex(*(grid.cells,) * grid.dim):
        R = np.roll(B, tuple(kk * grid.points_per_cell for kk in k), axis=tuple(range(grid.dim)))
        best = min(best, np.linalg.norm(A - R))
        if odd:
            best = min(best, np.linalg.norm(A + R))
    return best / scale


@dataclass
class CriticalPoint:
    u: State
    J: float
    residual: float
    hits: int = 1


@dataclass
class CriticalPointSearch:
    points: list
    n_starts: int
    n_failed: int
    seed: int

    def ground_level(self, floor: float = 1e-10):
        """The nontrivial critical point with the least positive energy."""
        nontrivial = [c for c in self.points if c.J > floor and np.max(np.abs(c.u.flat)) > 1e-8]
        return min(nontrivial, key=lambda c: c.J) if nontrivial else None


def _newton(tiny: TinyProblem, u, tol, max_iter):
    F = tiny.residual(u)
    merit = 0.5 * float(F @ F)
    for _ in range(max_iter):
        if np.max(np.abs(F)) <= tol:
            return u, float(np.max(np.abs(F)))
        Jm = tiny.jacobian(u)
        try:
            step = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(Jm, -F, rcond=None)[0]
        s = 1.0
        while s > 1e-10:
            un = u + s * step
            Fn = tiny.residual(un)
            mn = 0.5 * float(Fn @ Fn)
            if mn <= (1.0 - 1e-4 * s) * merit:
                break
            s *= 0.5
        else:
            return u, float(np.max(np.abs(F)))
        u, F, merit = un, Fn, mn
    return u, float(np.max(np.abs(F)))


def _random_start(tiny: TinyProblem, rng):
    grid = tiny.grid
    P = grid.size
    amp = math.exp(rng.uniform(math.log(0.2), math.log(5.0)))
    kind = rng.integers(3)
    if kind == 0:
        u = rng.standard_normal(P)
    elif kind == 1:
        # low-pass random field
        z = np.fft.fftn(rng.standard_normal(grid.shape))
        freq = np.abs(np.fft.fftfreq(grid.side) * grid.side)
        mask = freq <= 3
        for ax in range(grid.dim):
            shape = [1] * grid.dim
            shape[ax] = grid.side
            z = z * mask.reshape(shape)
        u = np.fft.ifftn(z).real.ravel()
    else:
        # bump at a random point
        x0 = rng.uniform(0, grid.length, size=grid.dim)
        r2 = np.zeros(grid.shape)
        for c, c0 in zip(grid.coordinates(), x0):
            d = (c - c0 + grid.length / 2) % grid.length - grid.length / 2
            r2 = r2 + d * d
        u = np.exp(-r2 / rng.uniform(0.2, 1.5) ** 2).ravel()
    top = np.max(np.abs(u))
    return amp * u / top if top > 0 else u


def dense_critical_points(
    tiny: TinyProblem,
    n_starts: int = 200,
    seed: int = 0,
    tol: float = 1e-11,
    max_iter: int = 200,
    cluster_tol: float = 1e-6,
    trivial_tol: float = 1e-2,
) -> CriticalPointSearch:
    """Damped Newton on ``S u = g(u)`` from seeded random starts, clustered.

    Two solutions are merged when their energies agree to ``1e-9`` (relative)
    and they lie within ``cluster_tol`` of each other modulo whole-cell
    translations and sign. Endpoints with ``max |u| < trivial_tol`` are
    counted as the trivial solution.
    """
    rng = np.random.default_rng(seed)
    found = []
    failed = 0
    for _ in range(n_starts):
        u, res = _newton(tiny, _random_start(tiny, rng), tol, max_iter)
        if res > tol:
            failed += 1
            continue
        if np.max(np.abs(u)) < trivial_tol:
            # at a gap edge S is singular, so Newton creeps towards zero along its kernel
            u = np.zeros_like(u)
            res = float(np.max(np.abs(tiny.residual(u))))
        J = tiny.energy(u)
        for c in found:
            if abs(c.J - J) <= 1e-9 * max(1.0, abs(J)) and _roll_distance(c.u.flat, u, tiny, tiny.spec.odd) < cluster_tol:
                c.hits += 1
                if res < c.residual:
                    c.u, c.residual = State(tiny.grid, u), res
                break
        else:
            found.append(CriticalPoint(State(tiny.grid, u), J, res))
    found.sort(key=lambda c: c.J)
    return CriticalPointSearch(found, n_starts, failed, seed)


def tiny_orbit_distance(u1: State, u2: State, tiny: TinyProblem, odd: bool = True) -> float:
    return _roll_distance(u1.flat, u2.flat, tiny, odd)


# -- fiber inner problem -----------------------------------------------------


def inner_oracle(tiny: TinyProblem, w, t: float, eps: float | None = None):
    """Minimize ``1/2 |h'|_E^2 + integral G(t w + h')`` over E' with trust-region Newton.

    E' is spanned by the eigenvectors of the dense operator with eigenvalue
    ``<= eps``. Returns ``(h' samples, minimum value)``.
    """
    lam, vec = np.linalg.eigh(tiny.matrix)
    eps = 1e-9 * np.max(np.abs(lam)) if eps is None else eps
    sel = lam <= eps
    B = vec[:, sel] / math.sqrt(tiny.h)
    mu = np.abs(lam[sel])
    wv = np.ravel(w)
    kind, p, q, h = tiny.spec.kind, tiny.spec.p, tiny.q, tiny.h

    def fun(d):
        u = t * wv + B @ d
        return 0.5 * float(mu @ (d * d)) + h * float(np.sum(_ref_G(kind, p, q, u)))

    def jac(d):
        u = t * wv + B @ d
        return mu * d + h * (B.T @ _ref_g(kind, p, q, u))

    def hess(d):
        u = t * wv + B @ d
        return np.diag(mu) + h * (B.T @ (_ref_dg(kind, p, q, u)[:, None] * B))

    res = scipy.optimize.minimize(fun, np.zeros(B.shape[1]), jac=jac, hess=hess, method="trust-exact", options={"gtol": 1e-13, "maxiter": 500})
    return B @ res.x, float(res.fun)


# -- Bloch bands -------------------------------------------------------------


def galerkin_bands(amplitude: float, k_points, n_bands: int = 4, n_waves: int = 129, shift: float = 0.0) -> np.ndarray:
    """Bands of ``-d^2/dx^2 + 2 A cos(2 pi x) + shift`` from a plane-wave Galerkin matrix.

    The cosine couples plane waves ``m`` and ``m +- 1`` with weight ``A``
    exactly. Returns an array ``(n_bands, len(k_points))``.
    """
    if n_waves % 2 == 0:
        raise ValidationError("n_waves must be odd")
    m = np.arange(n_waves) - n_waves // 2
    off = amplitude * np.ones(n_waves - 1)
    out = np.empty((n_bands, len(k_points)))
    for j, k in enumerate(k_points):
        H = np.diag((k + 2.0 * np.pi * m) ** 2 + shift) + np.diag(off, 1) + np.diag(off, -1)
        out[:, j] = np.linalg.eigvalsh(H)[:n_bands]
    return out


# -- sum-space norms ---------------------------------------------------------


def mixed_norm_oracle(values, weight: float, mu: float, form: str = "sum") -> float:
    """Sum-space norm by direct conic minimization over all splits ``u = v1 + v2``.

    ``form`` is ``"sum"`` for ``|v1|_2 + |v2|_mu`` or ``"max"`` for their
    maximum.
    """
    import cvxpy as cp

    u = np.ravel(np.asarray(values, dtype=float))
    v1 = cp.Variable(u.size)
    a = math.sqrt(weight) * cp.norm(v1, 2)
    b = weight ** (1.0 / mu) * cp.pnorm(u - v1, mu)
    obj = a + b if form == "sum" else cp.maximum(a, b)
    prob = cp.Problem(cp.Minimize(obj))
    # at these tolerances the interior-point floor is reached and the solver
    # reports "optimal_inaccurate" although the value is good to about 1e-10
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12, max_iter=500)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise ConvergenceError(f"conic oracle failed with status {prob.status}")
    return float(prob.value)


# -- soliton -----------------------------------------------------------------


@dataclass(frozen=True)
class SolitonReference:
    """``u(x) = sqrt(2) sech(x - x0)``, the ground state of ``-u'' + u = u^3`` on the line."""

    x0: float = 0.0
    amplitude: float = math.sqrt(2.0)
    integrals: dict = field(default_factory=lambda: {"du2": 4.0 / 3.0, "u2": 4.0, "u4": 16.0 / 3.0})
    energy: float = 4.0 / 3.0

    def profile(self, x):
        return self.amplitude / np.cosh(np.asarray(x) - self.x0)

    def derivative(self, x):
        y = np.asarray(x) - self.x0
        return -self.amplitude * np.tanh(y) / np.cosh(y)

    def second_derivative(self, x):
        y = np.asarray(x) - self.x0
        s = 1.0 / np.cosh(y)
        return self.amplitude * (s * np.tanh(y) ** 2 - s ** 3)

    def residual(self, x):
        u = self.profile(x)
        return -self.second_derivative(x) + u - u ** 3

    def quadrature(self, f, half_width: float = 60.0) -> float:
        val, _ = scipy.integrate.quad(f, self.x0 - half_width, self.x0 + half_width, epsabs=1e-14, epsrel=1e-13, limit=400)
        return val

    def quadrature_energy(self) -> float:
        du2 = self.quadrature(lambda x: self.derivative(x) ** 2)
        u2 = self.quadrature(lambda x: self.profile(x) ** 2)
        u4 = self.quadrature(lambda x: self.profile(x) ** 4)
        return 0.5 * (du2 + u2) - 0.25 * u4

    def fiber_energy(self, dilation: float = 1.0) -> float:
        """``max_t J(t w)`` for ``w(x) = sech((x - x0) / dilation)``.

        For the cubic problem without an E' part this is
        ``(|w'|^2 + |w|^2)^2 / (4 |w|_4^4)``; it equals ``4/3`` only at
        ``dilation = 1``.
        """
        s = float(dilation)
        w = lambda x: 1.0 / np.cosh((x - self.x0) / s)
        dw = lambda x: -np.tanh((x - self.x0) / s) / np.cosh((x - self.x0) / s) / s
        quad = self.quadrature(lambda x: dw(x) ** 2, 60.0 * s) + self.quadrature(lambda x: w(x) ** 2, 60.0 * s)
        quart = self.quadrature(lambda x: w(x) ** 4, 60.0 * s)
        return quad * quad / (4.0 * quart)


def soliton_reference(p: float = 4) -> SolitonReference:
    if p != 4:
        raise ValidationError("the closed-form soliton reference exists for p = 4 only")
    return SolitonReference()
