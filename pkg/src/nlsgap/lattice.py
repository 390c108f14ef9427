"""Periodic grids, 1-periodic potentials and the operator ``S = -Laplacian + V``.

The whole space is replaced by a torus of ``M`` unit cells per dimension with
``n`` samples per cell. Integrals are rectangle sums with weight ``h**dim``,
which is spectrally accurate for smooth periodic integrands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import GridMismatchError, ResamplingError, ValidationError

LAPLACIANS = ("spectral", "fd")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of ``cells`` unit cells per dimension."""

    dim: int
    cells: int
    points_per_cell: int

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_cell

    @property
    def side(self) -> int:
        return self.cells * self.points_per_cell

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.dim

    @property
    def size(self) -> int:
        return self.side ** self.dim

    @property
    def length(self) -> int:
        return self.cells

    @property
    def weight(self) -> float:
        """Quadrature weight ``h**dim`` of a single sample."""
        return self.spacing ** self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.side) / self.points_per_cell

    def coordinates(self) -> tuple:
        """Coordinate arrays, one per dimension, each of shape :attr:`shape`."""
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def cell_index(self) -> tuple:
        """Integer cell index of every sample, one array per dimension."""
        idx = np.arange(self.side) // self.points_per_cell
        return tuple(np.meshgrid(*([idx] * self.dim), indexing="ij"))


def build_grid(dim: int, cells: int, points_per_cell: int) -> Grid:
    if dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {dim}")
    if int(cells) != cells or cells < 1:
        raise ValidationError(f"cells must be a positive integer, got {cells}")
    if int(points_per_cell) != points_per_cell or points_per_cell < 4:
        raise ValidationError(
            f"points_per_cell must be an integer >= 4 (insufficient resolution), got {points_per_cell}"
        )
    return Grid(int(dim), int(cells), int(points_per_cell))


@dataclass(frozen=True)
class PotentialSpec:
    """A 1-periodic potential plus an additive energy shift.

    ``cosine`` is ``2 A cos(2 pi x)`` summed over coordinates, ``tabulated``
    holds samples at ``x_j = j / L`` over one cell and is interpolated
    linearly (summed over coordinates in 2D).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    constant: float = 0.0
    table: tuple = ()
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "cosine", "tabulated"):
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "tabulated" and len(self.table) < 1:
            raise ValidationError("tabulated potential needs a non-empty table")
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))

    def with_shift(self, shift: float) -> "PotentialSpec":
        return PotentialSpec(self.kind, self.amplitude, self.constant, self.table, float(shift))

    def evaluate(self, coords, resolution: int | None = None) -> np.ndarray:
        """Values of ``V + shift`` at the given coordinate arrays.

        ``resolution`` is the number of samples per cell the caller uses; a
        tabulated table must divide it.
        """
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        out = np.zeros(coords[0].shape)
        if self.kind == "constant":
            out += self.constant
        elif self.kind == "cosine":
            for c in coords:
                out += 2.0 * self.amplitude * np.cos(2.0 * np.pi * c)
        elif self.kind == "tabulated":
            L = len(self.table)
            if resolution is not None and resolution % L:
                raise ResamplingError(
                    f"table length {L} does not divide {resolution} points per cell"
                )
            xp = np.arange(L) / L
            fp = np.asarray(self.table)
            for c in coords:
                out += np.interp(np.mod(c, 1.0), xp, fp, period=1.0)
        return out + self.shift

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "shift": self.shift}
        if self.kind == "cosine":
            d["amplitude"] = self.amplitude
        elif self.kind == "constant":
            d["constant"] = self.constant
        elif self.kind == "tabulated":
            d["table"] = list(self.table)
        return d


def load_tabulated_csv(path, shift: float = 0.0) -> PotentialSpec:
    """Read a one-cell potential table with columns ``x,V``."""
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"x", "V"} - set(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns x,V")
        rows = [(float(r["x"]), float(r["V"])) for r in reader]
    if not rows:
        raise ValidationError(f"{path}: empty table")
    rows.sort()
    x = np.array([r[0] for r in rows])
    L = len(rows)
    if not np.allclose(x, np.arange(L) / L, atol=1e-9):
        raise ValidationError(f"{path}: x must be the uniform samples j/{L} of one cell")
    return PotentialSpec("tabulated", table=tuple(r[1] for r in rows), shift=shift)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: Grid
    samples: np.ndarray
    spec: PotentialSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _readonly(np.reshape(self.samples, self.grid.shape)))


def sample_potential(spec: PotentialSpec, grid: Grid) -> PotentialField:
    return PotentialField(grid, spec.evaluate(grid.coordinates(), grid.points_per_cell), spec)


@dataclass(frozen=True, eq=False)
class State:
    """A real field sampled on a grid.

    Eigen-coefficients are computed lazily by :mod:`nlsgap.spectral` and
    cached per spectrum in ``_coeffs``.
    """

    grid: Grid
    values: np.ndarray
    _coeffs: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.reshape(self.values, self.grid.shape)))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other):
        self._check(other)
        return State(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return State(self.grid, self.values - other.values)

    def __neg__(self):
        return State(self.grid, -self.values)

    def __mul__(self, a):
        return State(self.grid, float(a) * self.values)

    __rmul__ = __mul__


def shift_cells(u: State, k) -> State:
    """Translate ``u`` by ``k`` whole cells (an int, or one int per dimension)."""
    ks = (k,) * u.grid.dim if np.isscalar(k) else tuple(k)
    n = u.grid.points_per_cell
    return State(u.grid, np.roll(u.values, [int(kk) * n for kk in ks], axis=tuple(range(u.grid.dim))))


def laplacian_symbol(grid: Grid, laplacian: str = "spectral") -> np.ndarray:
    """Fourier multiplier of ``-Laplacian`` on the grid, in FFT ordering."""
    if laplacian not in LAPLACIANS:
        raise ValidationError(f"laplacian must be one of {LAPLACIANS}")
    h = grid.spacing
    freq = 2.0 * np.pi * np.fft.fftfreq(grid.side, d=h)
    if laplacian == "spectral":
        one = freq ** 2
    else:
        one = (2.0 - 2.0 * np.cos(freq * h)) / h ** 2
    if grid.dim == 1:
        return one
    return one[:, None] + one[None, :]


def apply_S(potential: PotentialField, u: State, laplacian: str = "spectral") -> State:
    """Return ``-Laplacian u + V u``."""
    if u.grid != potential.grid:
        raise GridMismatchError(f"grid mismatch: {u.grid} vs {potential.grid}")
    grid = u.grid
    if laplacian == "spectral":
        lap = np.fft.ifftn(laplacian_symbol(grid) * np.fft.fftn(u.values)).real
    elif laplacian == "fd":
        lap = np.zeros(grid.shape)
        for ax in range(grid.dim):
            lap += 2.0 * u.values - np.roll(u.values, 1, ax) - np.roll(u.values, -1, ax)
        lap /= grid.spacing ** 2
    else:
        raise ValidationError(f"laplacian must be one of {LAPLACIANS}")
    return State(grid, lap + potential.samples * u.values)


def operator_matrix(potential: PotentialField, laplacian: str = "spectral") -> np.ndarray:
    """Dense symmetric matrix of ``S`` acting on flattened grid samples."""
    grid = potential.grid
    sym1 = laplacian_symbol(build_grid(1, grid.cells, grid.points_per_cell), laplacian)
    col = np.fft.ifft(sym1).real
    D1 = scipy.linalg.circulant(col)
    if grid.dim == 1:
        D = D1
    else:
        eye = np.eye(grid.side)
        D = np.kron(D1, eye) + np.kron(eye, D1)
    D = 0.5 * (D + D.T)
    return D + np.diag(potential.samples.ravel())
