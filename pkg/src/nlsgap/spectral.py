"""Bloch bands, zero-edge calibration and the box eigenbasis.

The box operator on ``M`` cells with ``n`` samples per cell is block-diagonal
in quasimomentum: its spectrum is exactly the union of the unit-cell Bloch
spectra (with ``n`` plane waves) at ``k = 2 pi j / M``. Calibrating with
``cell_resolution = n`` therefore puts the box's zone-edge eigenvalue at zero
to rounding when ``M`` is even.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize

from .errors import AmbiguousSplitError, EigensolveError, GridMismatchError, NoGapError, ValidationError
from .lattice import Grid, PotentialField, PotentialSpec, State, build_grid, operator_matrix

DEFAULT_MAX_SIZE = 4096


class UncalibratedWarning(UserWarning):
    """The box operator is indefinite but zero is not numerically in its spectrum."""


# -- Bloch bands --------------------------------------------------------------


def _plane_wave_orders(r):
    return np.rint(np.fft.fftfreq(r) * r).astype(int)


def _symbol(kappa, r, laplacian):
    if laplacian == "spectral":
        return kappa ** 2
    h = 1.0 / r
    return (2.0 - 2.0 * np.cos(kappa * h)) / h ** 2


@dataclass(frozen=True, eq=False)
class _CellOperator:
    """Unit-cell Bloch Hamiltonian in the plane-wave basis, minus the kinetic diagonal."""

    spec: PotentialSpec
    dim: int
    resolution: int
    laplacian: str

    def __post_init__(self):
        r = self.resolution
        cell = build_grid(self.dim, 1, r) if r >= 4 else None
        if cell is None:
            raise ValidationError("cell_resolution must be >= 4")
        V = self.spec.evaluate(cell.coordinates(), r)
        Vhat = np.fft.fftn(V) / V.size
        m = _plane_wave_orders(r)
        if self.dim == 1:
            C = Vhat[np.subtract.outer(m, m) % r]
            orders = (m,)
        else:
            m1, m2 = (a.ravel() for a in np.meshgrid(m, m, indexing="ij"))
            C = Vhat[np.subtract.outer(m1, m1) % r, np.subtract.outer(m2, m2) % r]
            orders = (m1, m2)
        object.__setattr__(self, "coupling", 0.5 * (C + C.conj().T))
        object.__setattr__(self, "orders", orders)

    def matrix(self, k):
        k = np.atleast_1d(np.asarray(k, dtype=float))
        diag = sum(_symbol(2.0 * np.pi * m + kk, self.resolution, self.laplacian) for m, kk in zip(self.orders, k))
        return self.coupling + np.diag(diag)

    def energies(self, k, n_bands, vectors=False):
        H = self.matrix(k)
        try:
            if vectors:
                lam, vec = np.linalg.eigh(H)
            else:
                return np.linalg.eigvalsh(H)[:n_bands]
        except np.linalg.LinAlgError as exc:
            raise EigensolveError(f"eigensolve failed at k={k}: {exc}", k=k) from exc
        res = np.linalg.norm(H @ vec[:, :n_bands] - vec[:, :n_bands] * lam[:n_bands], axis=0)
        return lam[:n_bands], res


@dataclass(frozen=True, eq=False)
class BandStructure:
    """Lowest bands sampled on a uniform quasimomentum grid over ``[0, 2 pi)**dim``.

    ``bands[j, i]`` is band ``j`` at ``k_points[i]``.
    """

    k_points: np.ndarray
    bands: np.ndarray
    residuals: np.ndarray
    spec: PotentialSpec
    dim: int
    cell_resolution: int
    laplacian: str = "spectral"

    @property
    def n_bands(self):
        return self.bands.shape[0]

    def band_at(self, j, k):
        return _cell(self.spec, self.dim, self.cell_resolution, self.laplacian).energies(k, j + 1)[j]


_CELL_CACHE: dict = {}


def _cell(spec, dim, resolution, laplacian):
    key = (spec, dim, resolution, laplacian)
    op = _CELL_CACHE.get(key)
    if op is None:
        if len(_CELL_CACHE) > 64:
            _CELL_CACHE.clear()
        op = _CellOperator(spec, dim, resolution, laplacian)
        _CELL_CACHE[key] = op
    return op


def bloch_bands(
    spec: PotentialSpec,
    n_k: int = 64,
    n_bands: int = 4,
    cell_resolution: int = 32,
    dim: int = 1,
    laplacian: str = "spectral",
) -> BandStructure:
    """Lowest ``n_bands`` eigenvalues of ``-(grad + ik)**2 + V`` on the unit cell."""
    if n_k < 8:
        raise ValidationError(f"n_k must be >= 8, got {n_k}")
    if n_bands < 2:
        raise ValidationError(f"n_bands must be >= 2, got {n_bands}")
    if dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {dim}")
    op = _cell(spec, dim, cell_resolution, laplacian)
    if n_bands > op.coupling.shape[0]:
        raise ValidationError(f"n_bands={n_bands} exceeds the {op.coupling.shape[0]} plane waves")
    ks = 2.0 * np.pi * np.arange(n_k) / n_k
    if dim == 1:
        kpts = ks[:, None]
    else:
        kpts = np.stack([a.ravel() for a in np.meshgrid(ks, ks, indexing="ij")], axis=1)
    bands = np.empty((n_bands, len(kpts)))
    res = np.empty(len(kpts))
    for i, k in enumerate(kpts):
        lam, r = op.energies(k, n_bands, vectors=True)
        bands[:, i] = lam
        res[i] = r.max()
    return BandStructure(kpts, bands, res, spec, dim, cell_resolution, laplacian)


@dataclass(frozen=True)
class GapReport:
    gap_index: int
    left_edge: float
    right_edge: float
    width: float
    k_left: tuple = ()
    k_right: tuple = ()

    def to_dict(self):
        return {
            "gap_index": self.gap_index,
            "left_edge": self.left_edge,
            "right_edge": self.right_edge,
            "width": self.width,
            "k_left": list(self.k_left),
            "k_right": list(self.k_right),
        }


def _refine(bands: BandStructure, j: int, sign: float):
    """Refine ``sign * max_k sign * band_j(k)`` starting from the best sample."""
    samples = sign * bands.bands[j]
    i = int(np.argmax(samples))
    k0 = bands.k_points[i]
    best = samples[i]
    best_k = k0
    dk = 2.0 * np.pi / round(len(bands.k_points) ** (1.0 / bands.dim))

    def f(k):
        return -sign * bands.band_at(j, k)

    if bands.dim == 1:
        r = scipy.optimize.minimize_scalar(
            lambda k: f([k]), bounds=(k0[0] - dk, k0[0] + dk), method="bounded", options={"xatol": 1e-10}
        )
        cand, ck = -r.fun, np.array([r.x])
    else:
        r = scipy.optimize.minimize(
            f, k0, method="L-BFGS-B", bounds=[(kk - dk, kk + dk) for kk in k0], options={"ftol": 1e-15, "gtol": 1e-12}
        )
        cand, ck = -r.fun, r.x
    if cand > best:
        best, best_k = cand, ck
    return sign * best, tuple(float(v) for v in np.mod(best_k, 2.0 * np.pi))


def find_gap(bands: BandStructure, gap_index: int = 0, gap_tol: float = 1e-8, refine: bool = True) -> GapReport:
    """Locate the gap above band ``gap_index``; raise :class:`NoGapError` if it is closed."""
    if bands.n_bands <= gap_index + 1:
        raise ValidationError(f"need more than {gap_index + 1} bands, have {bands.n_bands}")
    if refine:
        left, kl = _refine(bands, gap_index, 1.0)
        right, kr = _refine(bands, gap_index + 1, -1.0)
    else:
        il = int(np.argmax(bands.bands[gap_index]))
        ir = int(np.argmin(bands.bands[gap_index + 1]))
        left, right = float(bands.bands[gap_index, il]), float(bands.bands[gap_index + 1, ir])
        kl, kr = tuple(bands.k_points[il]), tuple(bands.k_points[ir])
    width = right - left
    if width <= gap_tol * max(1.0, abs(left)):
        raise NoGapError(f"no gap above band {gap_index}: width {width:.3e}")
    return GapReport(gap_index, float(left), float(right), float(width), kl, kr)


def calibrate_zero_edge(
    spec: PotentialSpec,
    gap_index: int = 0,
    n_k: int = 64,
    cell_resolution: int = 32,
    dim: int = 1,
    laplacian: str = "spectral",
    return_gap: bool = False,
):
    """Shift ``spec`` so the left edge of gap ``gap_index`` sits at zero.

    With ``return_gap`` the gap report of the *calibrated* spec is returned
    as well.
    """
    n_bands = gap_index + 2
    gap = find_gap(bloch_bands(spec, n_k, n_bands, cell_resolution, dim, laplacian), gap_index)
    out = spec.with_shift(spec.shift - gap.left_edge)
    if return_gap:
        shifted = GapReport(gap.gap_index, 0.0, gap.width, gap.width, gap.k_left, gap.k_right)
        return out, shifted
    return out


def bands_to_csv(bands: BandStructure, path) -> None:
    path = Path(path)
    kcols = ["k"] if bands.dim == 1 else ["k1", "k2"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(kcols + [f"band_{j}" for j in range(bands.n_bands)])
        for i, k in enumerate(bands.k_points):
            w.writerow([repr(float(v)) for v in k] + [repr(float(v)) for v in bands.bands[:, i]])


def gap_to_json(gap: GapReport, path) -> None:
    Path(path).write_text(json.dumps(gap.to_dict(), indent=2))


# -- box eigenbasis -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    """All eigenpairs of the discretized ``S`` on the box.

    ``basis`` holds Euclidean-orthonormal eigenvectors as columns; the
    L2-orthonormal eigenfunctions are ``basis / sqrt(h**dim)``.
    """

    grid: Grid
    potential: PotentialField
    eigenvalues: np.ndarray
    basis: np.ndarray
    max_residual: float
    laplacian: str = "spectral"

    @property
    def size(self):
        return self.grid.size

    @property
    def sqrt_weight(self):
        return np.sqrt(self.grid.weight)

    def coefficients(self, u: State) -> np.ndarray:
        """L2 coefficients ``<u, e_i>``."""
        if u.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {u.grid} vs {self.grid}")
        c = u._coeffs.get(self)
        if c is None:
            c = self.sqrt_weight * (self.basis.T @ u.flat)
            c.setflags(write=False)
            u._coeffs[self] = c
        return c

    def synthesize(self, c) -> State:
        c = np.asarray(c, dtype=float)
        u = State(self.grid, (self.basis @ c) / self.sqrt_weight)
        c = c.copy()
        c.setflags(write=False)
        u._coeffs[self] = c
        return u

    def eigenfunction(self, i) -> State:
        c = np.zeros(self.size)
        c[i] = 1.0
        return self.synthesize(c)


def eigendecompose_box(
    potential: PotentialField, laplacian: str = "spectral", max_size: int = DEFAULT_MAX_SIZE
) -> OperatorSpectrum:
    grid = potential.grid
    if grid.size > max_size:
        raise ValidationError(
            f"{grid.size} grid points exceed the dense eigensolve cap {max_size}; use a smaller grid"
        )
    A = operator_matrix(potential, laplacian)
    try:
        lam, vec = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise EigensolveError(f"box eigensolve failed: {exc}") from exc
    res = float(np.max(np.linalg.norm(A @ vec - vec * lam, axis=0)))
    scale = float(np.max(np.abs(lam)))
    if lam[0] < 0 and np.min(np.abs(lam)) > 1e-8 * scale:
        warnings.warn(
            "box operator is indefinite but zero is not an eigenvalue; calibrate the potential first",
            UncalibratedWarning,
            stacklevel=2,
        )
    lam.setflags(write=False)
    vec.setflags(write=False)
    return OperatorSpectrum(grid, potential, lam, vec, res, laplacian)


@dataclass(frozen=True, eq=False)
class SpaceSplit:
    """Index partition of the eigenbasis into the positive part and the rest.

    ``weights`` are the signed quadratic-form weights: ``|lambda_i|`` on the
    positive part, ``-|lambda_i|`` on the non-positive part, so that
    ``sum(weights * c**2) = |u+|_E**2 - |u'|_E**2``.
    """

    spectrum: OperatorSpectrum
    minus_idx: np.ndarray
    plus_idx: np.ndarray
    eps_split: float
    beta_floor: float
    beta_num: float
    weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        lam = np.abs(self.spectrum.eigenvalues)
        w = lam.copy()
        w[self.minus_idx] *= -1.0
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        sw = self.spectrum.sqrt_weight
        # eigenfunction values (L2-normalized) restricted to each part
        object.__setattr__(self, "plus_functions", self.spectrum.basis[:, self.plus_idx] / sw)
        object.__setattr__(self, "minus_functions", self.spectrum.basis[:, self.minus_idx] / sw)

    @property
    def grid(self):
        return self.spectrum.grid

    @property
    def n_minus(self):
        return len(self.minus_idx)

    @property
    def n_plus(self):
        return len(self.plus_idx)

    @property
    def plus_eigenvalues(self):
        return self.spectrum.eigenvalues[self.plus_idx]

    @property
    def minus_abs_eigenvalues(self):
        return np.abs(self.spectrum.eigenvalues[self.minus_idx])


def split_spaces(
    spectrum: OperatorSpectrum,
    eps_split: float | None = None,
    beta_floor: float | None = None,
    gap: GapReport | None = None,
) -> SpaceSplit:
    """Partition the eigenbasis at zero.

    Defaults: ``eps_split = 1e-9 * max|lambda|``; ``beta_floor = width / 2``
    of ``gap`` when one is given, otherwise half the smallest eigenvalue above
    ``eps_split`` (which makes the ambiguity check vacuous).
    """
    lam = spectrum.eigenvalues
    scale = float(np.max(np.abs(lam)))
    if eps_split is None:
        eps_split = 1e-9 * scale
    if eps_split < 0:
        raise ValidationError("eps_split must be >= 0")
    if beta_floor is None:
        if gap is not None:
            beta_floor = 0.5 * gap.width
        else:
            above = lam[lam > eps_split]
            beta_floor = 0.5 * float(above.min()) if above.size else 2.0 * eps_split + 1.0
    if beta_floor <= eps_split:
        raise ValidationError("beta_floor must exceed eps_split")
    bad = np.flatnonzero((lam > eps_split) & (lam < beta_floor))
    if bad.size:
        raise AmbiguousSplitError(
            f"ambiguous splitting: {bad.size} eigenvalue(s) in ({eps_split:.3e}, {beta_floor:.3e}), "
            f"e.g. {lam[bad[0]]:.6e}; is the potential calibrated?"
        )
    minus = np.flatnonzero(lam <= eps_split)
    plus = np.flatnonzero(lam >= beta_floor)
    if plus.size == 0:
        raise ValidationError("no eigenvalues above beta_floor")
    return SpaceSplit(spectrum, minus, plus, float(eps_split), float(beta_floor), float(lam[plus].min()))


def project(u: State, split: SpaceSplit, part: str) -> State:
    c = split.spectrum.coefficients(u)
    if part == "plus":
        idx = split.minus_idx
    elif part == "minus":
        idx = split.plus_idx
    else:
        raise ValidationError(f"part must be 'plus' or 'minus', got {part!r}")
    c = c.copy()
    c[idx] = 0.0
    return split.spectrum.synthesize(c)


def e_norm(u: State, split: SpaceSplit) -> float:
    c = split.spectrum.coefficients(u)
    return float(np.sqrt(np.sum(np.abs(split.spectrum.eigenvalues) * c * c)))
