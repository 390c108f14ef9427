"""Ground states as minimizers of the reduced functional on the unit sphere of E+.

The iteration works in the coordinates ``y_i = sqrt(lambda_i) a_i`` of E+,
in which the E-norm is Euclidean, so the retraction is plain normalization
and the Riemannian gradient is the projected coordinate gradient. Step
sizes come from the Barzilai-Borwein formula, safeguarded by Armijo
backtracking on ``Psi``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, EPrimeError, NlsGapError, ValidationError
from .functional import assert_solvable, eval_J
from .lattice import State, shift_cells
from .nehari import FiberOptions, FiberSolver, _solver, manifold_residual
from .norms import full_norm, mixed_norm_surrogate
from .problem import Problem, build_problem

START_MODES = ("random_lowmode", "gaussian", "provided")


@dataclass(frozen=True)
class SolveOptions:
    """Controls of the descent; all tolerances are relative.

    ``tol_residual`` bounds the manifold residuals and the tangent gradient
    (as a dual norm divided by the full norm of ``u``). When the Armijo
    decrease is below ``resolution * |Psi|`` it cannot be resolved in
    floating point; the step is then taken unless Psi rises by more than
    that amount.
    """

    max_outer_iterations: int = 3000
    tol_residual: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    rng_seed: int = 0
    start_mode: str = "random_lowmode"
    gaussian_width: float = 1.0
    resolution: float = 1e-13
    fiber: FiberOptions = FiberOptions()

    def __post_init__(self):
        if self.start_mode not in START_MODES:
            raise ValidationError(f"start_mode must be one of {START_MODES}")
        for name in ("tol_residual", "armijo", "gaussian_width", "resolution"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not 0 < self.backtrack < 1:
            raise ValidationError("backtrack must lie in (0, 1)")
        if self.armijo >= 1:
            raise ValidationError("armijo must lie in (0, 1)")
        if self.max_outer_iterations < 1 or self.max_backtracks < 1:
            raise ValidationError("iteration caps must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class GroundStateReport:
    """Outcome of one descent run.

    ``u`` is normalized: translated by ``translation`` whole cells so that
    its largest value sits in the central cell, then multiplied by ``sign``
    so that value is positive. ``c_est`` is ``J(u)``.
    """

    u: State | None
    c_est: float
    r_u: float
    r_eprime: float
    grad_norm: float
    iterations: int
    cells: int
    points_per_cell: int
    dim: int
    decay: float
    translation: tuple
    sign: int
    converged: bool
    seed: int | None
    start_mode: str
    t_star: float = math.nan
    norm_ratio: float = math.nan
    psi_history: list = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def residual(self) -> float:
        return max(self.r_u, self.r_eprime, self.grad_norm)

    def to_dict(self, samples: bool = True) -> dict:
        d = {
            "c_est": self.c_est,
            "r_u": self.r_u,
            "r_eprime": self.r_eprime,
            "grad_norm": self.grad_norm,
            "residual": self.residual,
            "iterations": self.iterations,
            "cells": self.cells,
            "points_per_cell": self.points_per_cell,
            "dim": self.dim,
            "decay": self.decay,
            "translation": list(self.translation),
            "sign": self.sign,
            "converged": self.converged,
            "seed": self.seed,
            "start_mode": self.start_mode,
            "t_star": self.t_star,
            "norm_ratio": self.norm_ratio,
            "psi_history": list(self.psi_history),
            "message": self.message,
        }
        if samples and self.u is not None:
            d["u"] = self.u.flat.tolist()
        return d


# -- normalization and diagnostics -------------------------------------------


def normalize_state(u: State, odd: bool = True):
    """Shift by whole cells so the max-|u| point is in the central cell, fix the sign.

    Returns ``(u, translation, sign)``; applying it twice changes nothing.
    """
    grid = u.grid
    idx = np.unravel_index(int(np.argmax(np.abs(u.values))), grid.shape)
    n = grid.points_per_cell
    centre = grid.cells // 2
    shift = tuple(int(centre - i // n) for i in idx)
    if any(shift):
        u = shift_cells(u, shift)
    sign = 1
    if odd:
        peak = u.values[tuple((i + s * n) % grid.side for i, s in zip(idx, shift))]
        if peak < 0:
            u = -u
            sign = -1
    return u, shift, sign


def decay_metric(u: State) -> float:
    """``max |u|`` over the outermost cells divided by ``max |u|``."""
    grid = u.grid
    cell = grid.cell_index()
    edge = np.zeros(grid.shape, dtype=bool)
    for c in cell:
        edge |= (c == 0) | (c == grid.cells - 1)
    top = float(np.max(np.abs(u.values)))
    if top == 0.0:
        return 0.0
    return float(np.max(np.abs(u.values[edge]))) / top


def _norm_proxy(solver: FiberSolver, split, mu, t, d):
    """Cheap stand-in for the full norm of ``t w + h'`` (``w`` a unit vector)."""
    if not d.size:
        return t
    minus = State(split.grid, solver.Bm @ d)
    e2 = t * t + float(np.dot(solver.lm, d * d))
    return math.sqrt(e2 + mixed_norm_surrogate(minus, mu) ** 2)


# -- starts ------------------------------------------------------------------


def start_state(problem: Problem, opts: SolveOptions, seed: int | None = None) -> State:
    """Unit E+ start for ``random_lowmode`` or ``gaussian`` modes."""
    seed = opts.rng_seed if seed is None else seed
    split = problem.split
    solver = _solver(split, problem.nonlinearity)
    rng = np.random.default_rng(seed)
    if opts.start_mode == "random_lowmode":
        k = min(8 * problem.grid.dim, split.n_plus)
        a = np.zeros(split.n_plus)
        a[:k] = rng.standard_normal(k)
    elif opts.start_mode == "gaussian":
        grid = problem.grid
        centre = rng.uniform(0.0, grid.length, size=grid.dim)
        r2 = np.zeros(grid.shape)
        for c, x0 in zip(grid.coordinates(), centre):
            dx = (c - x0 + 0.5 * grid.length) % grid.length - 0.5 * grid.length
            r2 = r2 + dx * dx
        bump = State(grid, np.exp(-r2 / opts.gaussian_width ** 2))
        a = np.array(split.spectrum.coefficients(bump)[split.plus_idx])
    else:
        raise ValidationError("start_mode 'provided' needs an explicit start state")
    return solver.state(a=a / math.sqrt(float(np.dot(solver.lp, a * a))))


def _provided(problem: Problem, start: State) -> np.ndarray:
    split = problem.split
    c = split.spectrum.coefficients(start)
    a = np.array(c[split.plus_idx])
    norm = math.sqrt(float(np.dot(split.plus_eigenvalues, a * a)))
    if norm == 0.0 or np.linalg.norm(a) <= 1e-14 * np.linalg.norm(c):
        raise EPrimeError("start state has no E+ component")
    return a / norm


# -- descent -----------------------------------------------------------------


def ground_state(problem: Problem, start=None, opts: SolveOptions | None = None) -> GroundStateReport:
    """Minimize ``Psi`` on the unit sphere of E+ and report the normalized minimizer.

    ``start`` is a seed, a :class:`State` (projected onto E+ and normalized)
    or None for ``opts.rng_seed``. Raises :class:`ConvergenceError` with the
    partial report in ``detail`` when the iteration cap is reached.
    """
    opts = SolveOptions() if opts is None else opts
    spec = problem.nonlinearity
    split = problem.split
    assert_solvable(spec)
    solver = _solver(split, spec)
    seed = None
    if isinstance(start, State):
        a = _provided(problem, start)
        mode = "provided"
    else:
        seed = opts.rng_seed if start is None else int(start)
        a = solver.plus_coeffs(start_state(problem, opts, seed))
        mode = opts.start_mode
    sl = np.sqrt(solver.lp)
    y = sl * a
    fo = opts.fiber
    fr = solver.fiber(a, fo)
    history = [fr.psi]
    norms = []
    prev = None
    iterations = 0
    converged = False
    for it in range(opts.max_outer_iterations + 1):
        grad = solver.tangent_gradient(a, fr)
        gy = sl * grad
        gn = float(np.linalg.norm(gy))
        norms.append(_norm_proxy(solver, split, spec.mu, fr.t, fr.d))
        if gn <= 0.5 * opts.tol_residual * fr.t * norms[-1]:
            u_state = State(split.grid, fr.u)
            N = full_norm(u_state, split, spec.mu)
            r_u, r_e = manifold_residual(u_state, split, spec)
            if max(r_u, r_e, gn / (fr.t * N)) <= opts.tol_residual:
                converged = True
                break
        if it == opts.max_outer_iterations:
            break
        if prev is None:
            alpha = 0.1 / gn
        else:
            s = y - prev[0]
            dg = gy - prev[1]
            sy = float(np.dot(s, dg))
            alpha = float(np.dot(s, s)) / sy if sy > 0 else 0.1 / gn
            alpha = min(alpha, 1.0 / gn)
        for _ in range(opts.max_backtracks):
            yn = y - alpha * gy
            yn /= np.linalg.norm(yn)
            an = yn / sl
            frn = solver.fiber(an, fo, fr.t, fr.d)
            want = opts.armijo * alpha * gn * gn
            noise = opts.resolution * abs(fr.psi)
            # below the resolution only ask that Psi does not visibly rise
            if frn.psi <= fr.psi - want or (want < noise and frn.psi <= fr.psi + noise):
                break
            alpha *= opts.backtrack
        else:
            break
        prev = (y, gy)
        y, a, fr = yn, an, frn
        history.append(fr.psi)
        iterations += 1

    u, shift, sign = normalize_state(State(split.grid, fr.u), spec.odd)
    c_est = eval_J(u, split, spec)
    r_u, r_e = manifold_residual(u, split, spec)
    final_norm = full_norm(u, split, spec.mu)
    report = GroundStateReport(
        u=u,
        c_est=c_est,
        r_u=r_u,
        r_eprime=r_e,
        grad_norm=gn / (fr.t * final_norm),
        iterations=iterations,
        cells=problem.grid.cells,
        points_per_cell=problem.grid.points_per_cell,
        dim=problem.grid.dim,
        decay=decay_metric(u),
        translation=shift,
        sign=sign,
        converged=converged,
        seed=seed,
        start_mode=mode,
        t_star=fr.t,
        norm_ratio=max(norms) / norms[-1],
        psi_history=history,
        message="converged" if converged else "iteration cap reached",
    )
    if not converged:
        raise ConvergenceError(
            f"no convergence in {opts.max_outer_iterations} iterations (residual {report.residual:.3e})",
            detail=report,
        )
    return report



# -- multistart and orbits ---------------------------------------------------


def _run(problem, opts, seed):
    try:
        return ground_state(problem, seed, opts)
    except ConvergenceError as exc:
        if isinstance(exc.detail, GroundStateReport):
            return exc.detail
        return _failed(problem, opts, seed, str(exc))
    except NlsGapError as exc:
        return _failed(problem, opts, seed, f"{type(exc).__name__}: {exc}")


def _failed(problem, opts, seed, message):
    g = problem.grid
    return GroundStateReport(
        None, math.nan, math.nan, math.nan, math.nan, 0, g.cells, g.points_per_cell, g.dim,
        math.nan, (), 1, False, seed, opts.start_mode, message=message,
    )


def multistart(problem: Problem, n_starts: int, opts: SolveOptions | None = None, threads: int = 1) -> list:
    """Independent runs with seeds ``opts.rng_seed + i``, returned in seed order.

    Failed runs are kept (``converged`` is False) instead of raised.
    """
    opts = SolveOptions() if opts is None else opts
    if n_starts < 1:
        raise ValidationError("n_starts must be >= 1")
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    seeds = [opts.rng_seed + i for i in range(n_starts)]
    # build the shared caches before any worker touches them
    _solver(problem.split, problem.nonlinearity)
    if threads == 1:
        return [_run(problem, opts, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: _run(problem, opts, s), seeds))


def orbit_distance(u1: State, u2: State, odd: bool = True, step: int | None = None) -> float:
    """Relative L2 distance between ``u1`` and the lattice orbit of ``u2``.

    The minimum runs over all translations by multiples of ``step`` grid
    points per axis (default: whole cells) and, when ``odd``, over the sign.
    """
    u1._check(u2)
    grid = u1.grid
    step = grid.points_per_cell if step is None else int(step)
    if step < 1 or grid.side % step:
        raise ValidationError("step must be a positive divisor of the grid side")
    scale = max(float(np.linalg.norm(u1.values)), float(np.linalg.norm(u2.values)))
    if scale == 0.0:
        return 0.0
    a, b = u1.values, u2.values
    axes = tuple(range(grid.dim))
    shifts = np.arange(0, grid.side, step)
    best = math.inf
    for k in np.ndindex(*(len(shifts),) * grid.dim):
        moved = np.roll(b, tuple(int(shifts[i]) for i in k), axis=axes)
        best = min(best, float(np.linalg.norm(a - moved)))
        if odd:
            best = min(best, float(np.linalg.norm(a + moved)))
    return best / scale


def dedup(reports, tol_orbit: float = 1e-2, odd: bool = True, step: int | None = None) -> list:
    """Greedy clustering of converged reports by orbit distance.

    Reports are visited by increasing ``c_est``; each one either joins the
    first representative within ``tol_orbit`` or becomes a new one.
    """
    if not 0 < tol_orbit < 1:
        raise ValidationError("tol_orbit must lie in (0, 1)")
    done = sorted((r for r in reports if r.converged and r.u is not None), key=lambda r: r.c_est)
    reps = []
    for r in done:
        if all(orbit_distance(r.u, q.u, odd, step) >= tol_orbit for q in reps):
            reps.append(r)
    return reps


@dataclass
class ConvergenceStudy:
    """``c_est`` across box sizes; ``drift`` is the largest relative change
    between consecutive converged sizes."""

    cells: list
    c_est: list
    converged: list
    decay: list
    drift: float

    def to_dict(self):
        return asdict(self)


def convergence_study(
    potential,
    nonlinearity,
    cells=(10, 20, 40),
    points_per_cell: int = 16,
    dim: int = 1,
    calibrate: bool = True,
    opts: SolveOptions | None = None,
    n_starts: int = 1,
    threads: int = 1,
) -> ConvergenceStudy:
    """Repeat the solve on growing boxes and report how ``c_est`` moves.

    For each box the lowest converged ``c_est`` over ``n_starts`` seeds is
    kept.
    """
    opts = SolveOptions() if opts is None else opts
    out_c, out_ok, out_decay = [], [], []
    for M in cells:
        problem = build_problem(potential, nonlinearity, dim, M, points_per_cell, calibrate)
        runs = [r for r in multistart(problem, n_starts, opts, threads) if r.converged]
        if runs:
            best = min(runs, key=lambda r: r.c_est)
            out_c.append(best.c_est)
            out_decay.append(best.decay)
            out_ok.append(True)
        else:
            out_c.append(math.nan)
            out_decay.append(math.nan)
            out_ok.append(False)
    good = [c for c, ok in zip(out_c, out_ok) if ok]
    drift = max((abs(b - a) / abs(b) for a, b in zip(good, good[1:])), default=math.nan)
    return ConvergenceStudy(list(cells), out_c, out_ok, out_decay, drift)
