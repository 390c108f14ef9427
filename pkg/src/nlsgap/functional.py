"""Nonlinearities, their primitives, the condition checker and the energy.

The energy of a state ``u`` with eigen-coefficients ``c`` is

    J(u) = 1/2 sum_i w_i c_i**2 - integral G(x, u) dx

with ``w_i = |lambda_i|`` on the positive part and ``-|lambda_i|`` on the
rest, which is ``1/2 <S u, u> - integral G`` written in the split form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import ValidationError
from .lattice import Grid, PotentialSpec, State
from .spectral import SpaceSplit, e_norm, project

KINDS = ("power", "logtype", "zero", "custom")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class NonlinearitySpec:
    """``g(x, u)`` and its primitive ``G``.

    ``power``: ``q |u|^(p-2) u`` (requires ``mu == p``); ``logtype``:
    ``q u ln(1 + |u|^(p-2))``; ``zero`` switches the nonlinearity off (the
    exponents are still validated); ``custom`` takes callables ``g(x, u)`` and
    ``G(x, u)`` and is meant for the condition checker only. ``weight`` is
    the 1-periodic factor ``q`` and must stay positive.
    """

    kind: str
    p: float
    mu: float
    weight: PotentialSpec = PotentialSpec("constant", constant=1.0)
    g_func: Callable | None = field(default=None, compare=False)
    G_func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.p > 2:
            raise ValidationError(f"p must exceed 2, got {self.p}")
        if not 2 < self.mu <= self.p:
            raise ValidationError(f"need 2 < mu <= p, got mu={self.mu}, p={self.p}")
        if self.kind == "power" and self.mu != self.p:
            raise ValidationError("power nonlinearity requires mu == p")
        if self.kind == "custom" and (self.g_func is None or self.G_func is None):
            raise ValidationError("custom nonlinearity needs g_func and G_func")
        x = np.arange(256) / 256
        if self.weight_inf(x) <= 0:
            raise ValidationError("weight q must have positive infimum")

    def weight_inf(self, x=None):
        x = np.arange(256) / 256 if x is None else x
        return float(np.min(self.weight.evaluate((x,))))

    @property
    def odd(self) -> bool:
        return self.kind in ("power", "logtype", "zero")

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "mu": self.mu, "weight": self.weight.to_dict()}


class _LogtypePrimitive:
    """Primitive of ``s ln(1 + s^m)`` for arbitrary ``m = p - 2``.

    Values at geometric nodes come from 16-point Gauss-Legendre sums over each
    node interval; a query adds one more 16-point rule on the short remainder.
    """

    def __init__(self, p, s_max=1e3):
        self.m = p - 2.0
        self._build(s_max)

    def _integrand(self, s):
        return s * np.log1p(s ** self.m)

    def _gl(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        pts = mid[..., None] + half[..., None] * _GL_NODES
        return half * (self._integrand(pts) @ _GL_WEIGHTS)

    def _build(self, s_max):
        nodes = np.concatenate([[0.0], np.geomspace(1e-8, s_max, int(200 * np.log10(s_max / 1e-8)) + 1)])
        self.nodes = nodes
        self.values = np.concatenate([[0.0], np.cumsum(self._gl(nodes[:-1], nodes[1:]))])

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        top = float(s.max()) if s.size else 0.0
        if top > self.nodes[-1]:
            self._build(2.0 * top)
        idx = np.searchsorted(self.nodes, s, side="right") - 1
        return self.values[idx] + self._gl(self.nodes[idx], s)


_PRIMITIVES: dict = {}
_WEIGHT_CACHE: dict = {}


def _logtype_primitive(p):
    prim = _PRIMITIVES.get(p)
    if prim is None:
        prim = _PRIMITIVES[p] = _LogtypePrimitive(p)
    return prim


def _as_coords(x):
    if isinstance(x, tuple):
        return tuple(np.asarray(c, dtype=float) for c in x)
    return (np.asarray(x, dtype=float),)


def eval_g(spec: NonlinearitySpec, x, u):
    """Pointwise ``g(x, u)``; ``x`` is an array (1D) or a tuple of arrays."""
    coords = _as_coords(x)
    u = np.asarray(u, dtype=float)
    if spec.kind == "custom":
        return np.asarray(spec.g_func(coords if len(coords) > 1 else coords[0], u), dtype=float)
    q = np.broadcast_to(spec.weight.evaluate(coords), np.broadcast(coords[0], u).shape)
    u = np.broadcast_to(u, q.shape)
    if spec.kind == "zero":
        return np.zeros(q.shape)
    return kernels.g_values(_code(spec), spec.p, q, u)


def eval_G(spec: NonlinearitySpec, x, u):
    coords = _as_coords(x)
    u = np.asarray(u, dtype=float)
    if spec.kind == "custom":
        return np.asarray(spec.G_func(coords if len(coords) > 1 else coords[0], u), dtype=float)
    q = np.broadcast_to(spec.weight.evaluate(coords), np.broadcast(coords[0], u).shape)
    u = np.broadcast_to(u, q.shape)
    return _G_with_q(spec, q, u)


def eval_dg(spec: NonlinearitySpec, x, u):
    """``d g / d u`` pointwise."""
    coords = _as_coords(x)
    if spec.kind == "custom":
        raise ValidationError("custom nonlinearities have no derivative")
    u = np.asarray(u, dtype=float)
    q = np.broadcast_to(spec.weight.evaluate(coords), np.broadcast(coords[0], u).shape)
    if spec.kind == "zero":
        return np.zeros(q.shape)
    return kernels.dg_values(_code(spec), spec.p, q, np.broadcast_to(u, q.shape))


def _code(spec):
    return kernels.POWER if spec.kind == "power" else kernels.LOGTYPE


def _G_with_q(spec, q, u):
    if spec.kind == "zero":
        return np.zeros(np.shape(u))
    if spec.kind == "logtype" and spec.p != 4:
        return q * _logtype_primitive(spec.p)(u)
    return kernels.G_values(_code(spec), spec.p, q, u)


class FieldNonlinearity:
    """``g``, ``G`` and ``dg/du`` on the samples of a fixed grid."""

    def __init__(self, spec: NonlinearitySpec, grid: Grid):
        if spec.kind == "custom":
            raise ValidationError("custom nonlinearities are supported by the checker only")
        self.spec = spec
        self.grid = grid
        key = (spec.weight, grid)
        q = _WEIGHT_CACHE.get(key)
        if q is None:
            q = spec.weight.evaluate(grid.coordinates(), grid.points_per_cell).ravel()
            q.setflags(write=False)
            _WEIGHT_CACHE[key] = q
        self.q = q
        self.code = _code(spec)
        self.p = float(spec.p)

    def g(self, u):
        if self.spec.kind == "zero":
            return np.zeros(np.shape(u))
        return kernels.g_values(self.code, self.p, self.q, u)

    def dg(self, u):
        if self.spec.kind == "zero":
            return np.zeros(np.shape(u))
        return kernels.dg_values(self.code, self.p, self.q, u)

    def G(self, u):
        return _G_with_q(self.spec, self.q, u)


# -- condition checker --------------------------------------------------------


@dataclass
class ConditionReport:
    """Sampled verdicts on (G1)-(G5).

    ``witnesses[name]`` holds the sample data that exhibits a violation; use
    :meth:`reproduce` to re-evaluate it.
    """

    spec: NonlinearitySpec
    passed: dict
    witnesses: dict
    a: float
    b: float
    convex: bool
    notes: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def reproduce(self, name: str) -> bool:
        """Re-evaluate the stored witness; True if the violation shows again."""
        w = self.witnesses[name]
        spec = self.spec
        if name == "G1":
            x, u = w["x"], w["u"]
            a, b = eval_g(spec, x, u), eval_g(spec, x + 1.0, u)
            return not (np.isfinite(a) and abs(a - b) <= 1e-12 * max(1.0, abs(a)))
        if name == "G2":
            x, u = w["x"], w["u"]
            r = abs(eval_g(spec, x, u)) / (abs(u) ** (spec.mu - 1) + abs(u) ** (spec.p - 1))
            return bool(r > 2.0 * w["central_sup"])
        if name == "G3":
            x, u = w["x"], w["u"]
            return bool(eval_G(spec, x, u) / abs(u) ** spec.mu <= w["tol"])
        if name in ("G4", "G5"):
            x, u1, u2 = w["x"], w["u1"], w["u2"]
            if name == "G4":
                f1 = eval_G(spec, x, u1) / u1 ** 2
                f2 = eval_G(spec, x, u2) / u2 ** 2
            else:
                f1 = eval_g(spec, x, u1) / abs(u1)
                f2 = eval_g(spec, x, u2) / abs(u2)
            return bool(f2 < w["min_ratio"] * f1) if name == "G4" else bool(f2 <= f1)
        raise KeyError(name)

    def to_dict(self):
        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "nonlinearity": self.spec.to_dict() if self.spec.kind != "custom" else {"kind": "custom"},
            "passed": dict(self.passed),
            "all_passed": self.all_passed,
            "witnesses": clean(self.witnesses),
            "a": self.a,
            "b": self.b,
            "convex": self.convex,
            "notes": dict(self.notes),
        }


def default_samples(n_x=16, n_u=401):
    x = np.arange(n_x) / n_x
    mag = np.geomspace(1e-4, 1e3, n_u)
    return x, mag


def check_conditions(
    spec: NonlinearitySpec, x_samples=None, u_samples=None, g4_ratio=2.0, g4_tail=1.1
) -> ConditionReport:
    """Sample (G1)-(G5) on ``x`` across a cell and ``|u|`` log-spaced in ``[1e-4, 1e3]``.

    ``u_samples`` are magnitudes; both signs are checked. Violations are
    recorded with witnesses, never raised.
    """
    xd, ud = default_samples()
    x = np.asarray(xd if x_samples is None else x_samples, dtype=float)
    mag = np.sort(np.abs(np.asarray(ud if u_samples is None else u_samples, dtype=float)))
    mag = mag[mag > 0]
    X, U = np.meshgrid(x, mag, indexing="ij")
    passed, wit, notes = {}, {}, {}

    g_pos = eval_g(spec, X, U)
    g_neg = eval_g(spec, X, -U)
    G_pos = eval_G(spec, X, U)
    G_neg = eval_G(spec, X, -U)

    # (G1): finite and 1-periodic in x
    g_shift = eval_g(spec, X + 1.0, U)
    bad = ~np.isfinite(g_pos) | (np.abs(g_shift - g_pos) > 1e-12 * np.maximum(1.0, np.abs(g_pos)))
    passed["G1"] = not bad.any()
    if bad.any():
        i, j = np.argwhere(bad)[0]
        wit["G1"] = {"x": float(x[i]), "u": float(mag[j])}

    # (G2): exponents and a bounded growth ratio
    mu, p = spec.mu, spec.p
    denom = mag ** (mu - 1) + mag ** (p - 1)
    ratio = np.maximum(np.abs(g_pos), np.abs(g_neg)) / denom
    a = float(ratio.max())
    central = (mag >= 1e-2) & (mag <= 1e2)
    central_sup = float(ratio[:, central].max()) if central.any() else a
    ends = ratio.copy()
    ends[:, central] = 0.0
    ok = 2 < mu <= p and np.isfinite(a) and ends.max() <= 2.0 * central_sup
    passed["G2"] = bool(ok)
    if not ok:
        i, j = np.unravel_index(np.argmax(ends), ends.shape)
        wit["G2"] = {"x": float(x[i]), "u": float(mag[j]), "central_sup": central_sup}
    notes["G2"] = "bound fitted on samples; 2* is infinite for dim <= 2"

    # (G3): G >= b |u|^mu on |u| <= 1
    small = mag <= 1.0
    tol = 1e-12
    if small.any():
        lower = np.minimum(G_pos[:, small], G_neg[:, small]) / mag[small] ** mu
        b = float(lower.min())
        passed["G3"] = b > tol
        if b <= tol:
            i, j = np.unravel_index(np.argmin(lower), lower.shape)
            wit["G3"] = {"x": float(x[i]), "u": float(mag[small][j]), "tol": tol}
    else:
        b = float("nan")
        passed["G3"] = False
        wit["G3"] = {"x": float(x[0]), "u": 1.0, "tol": tol}

    # (G4) proxy: G/u^2 increasing on |u| >= 1, grown by g4_ratio overall and
    # still growing by g4_tail over the last decade (rules out saturation)
    big = mag >= 1.0
    quot = G_pos[:, big] / mag[big] ** 2
    if quot.shape[1] >= 2:
        d = np.diff(quot, axis=1)
        grown = quot[:, -1] >= g4_ratio * quot[:, 0]
        j0 = int(np.searchsorted(mag[big], mag[-1] / 10.0))
        j0 = min(j0, quot.shape[1] - 2)
        tail = quot[:, -1] >= g4_tail * quot[:, j0]
        ok = bool((d > 0).all() and grown.all() and tail.all())
        passed["G4"] = ok
        if not ok:
            ub = mag[big]
            if (d <= 0).any():
                i, j = np.argwhere(d <= 0)[0]
                wit["G4"] = {"x": float(x[i]), "u1": float(ub[j]), "u2": float(ub[j + 1]), "min_ratio": 1.0}
            elif not grown.all():
                i = int(np.argmin(grown))
                wit["G4"] = {"x": float(x[i]), "u1": float(ub[0]), "u2": float(ub[-1]), "min_ratio": g4_ratio}
            else:
                i = int(np.argmin(tail))
                wit["G4"] = {"x": float(x[i]), "u1": float(ub[j0]), "u2": float(ub[-1]), "min_ratio": g4_tail}
    else:
        passed["G4"] = False
        wit["G4"] = {"x": float(x[0]), "u1": 1.0, "u2": 1.0, "min_ratio": 1.0}
    notes["G4"] = "proxy: finite samples up to |u| = %.3g" % mag[-1]

    # (G5): g/|u| strictly increasing on each side of zero
    f_pos = g_pos / mag
    f_neg = (g_neg / mag)[:, ::-1]  # u increasing from -max to -min
    ok = True
    for f, sgn, order in ((f_pos, 1.0, mag), (f_neg, -1.0, mag[::-1])):
        d = np.diff(f, axis=1)
        if (d <= 0).any():
            ok = False
            if "G5" not in wit:
                i, j = np.argwhere(d <= 0)[0]
                wit["G5"] = {"x": float(x[i]), "u1": float(sgn * order[j]), "u2": float(sgn * order[j + 1])}
    passed["G5"] = ok

    if spec.kind == "custom":
        convex = bool(ok)
    else:
        convex = bool((eval_dg(spec, X, U) >= 0).all() and (eval_dg(spec, X, -U) >= 0).all())
    notes["convexity"] = "G convex in u (g nondecreasing) on samples" if convex else "G not convex on samples"
    return ConditionReport(spec, passed, wit, a, b, convex, notes)


def assert_solvable(spec: NonlinearitySpec) -> ConditionReport:
    """Run the checker and refuse nonlinearities the fiber solver cannot handle."""
    rep = check_conditions(spec)
    if not (rep.passed["G5"] and rep.convex):
        raise ValidationError(f"nonlinearity fails (G5)/convexity, solver unsupported: {rep.witnesses}")
    return rep


# -- energy -------------------------------------------------------------------


class Energy:
    """Energy, its pieces and its gradient for one split and nonlinearity.

    Works on raw coefficient and sample arrays; the module-level functions
    wrap it for :class:`State` arguments.
    """

    def __init__(self, split: SpaceSplit, spec: NonlinearitySpec):
        self.split = split
        self.spec = spec
        self.grid = split.grid
        self.field = FieldNonlinearity(spec, self.grid)
        self.weights = split.weights
        self.basis = split.spectrum.basis
        self.sw = split.spectrum.sqrt_weight
        self.w = self.grid.weight

    def values(self, c):
        return (self.basis @ c) / self.sw

    def coeffs(self, values):
        return self.sw * (self.basis.T @ np.ravel(values))

    def quadratic(self, c):
        return 0.5 * float(np.dot(self.weights, c * c))

    def integral_G(self, values):
        return self.w * float(np.sum(self.field.G(np.ravel(values))))

    def J(self, c, values=None):
        if values is None:
            values = self.values(c)
        return self.quadratic(c) - self.integral_G(values)

    def gradient(self, c, values=None):
        """L2-gradient coefficients ``w_i c_i - <g(u), e_i>``."""
        if values is None:
            values = self.values(c)
        return self.weights * c - self.sw * (self.basis.T @ self.field.g(np.ravel(values)))


def _energy(split, spec):
    cache = split.__dict__.setdefault("_energy_cache", {})
    e = cache.get(spec)
    if e is None:
        e = cache[spec] = Energy(split, spec)
    return e


def eval_J(u: State, split: SpaceSplit, spec: NonlinearitySpec) -> float:
    E = _energy(split, spec)
    c = split.spectrum.coefficients(u)
    return E.quadratic(c) - E.integral_G(u.flat)


def eval_I(u: State, split: SpaceSplit, spec: NonlinearitySpec) -> float:
    """``1/2 |u'|_E^2 + integral G(x, u)``; nonnegative."""
    E = _energy(split, spec)
    return 0.5 * e_norm(project(u, split, "minus"), split) ** 2 + E.integral_G(u.flat)


def grad_J(u: State, split: SpaceSplit, spec: NonlinearitySpec) -> State:
    """The L2-gradient of ``J`` at ``u``, carrying its eigen-coefficients."""
    E = _energy(split, spec)
    c = split.spectrum.coefficients(u)
    return split.spectrum.synthesize(E.gradient(c, u.flat))


def strong_residual(u: State, split: SpaceSplit, spec: NonlinearitySpec) -> State:
    """``S u - g(x, u)`` computed on the grid."""
    from .lattice import apply_S

    spectrum = split.spectrum
    Su = apply_S(spectrum.potential, u, spectrum.laplacian)
    return State(u.grid, Su.values - _energy(split, spec).field.g(u.flat).reshape(u.grid.shape))
