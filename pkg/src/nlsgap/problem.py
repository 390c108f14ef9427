"""Assembly of a discretized problem: grid, calibrated potential, eigenbasis, split."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoGapError
from .functional import NonlinearitySpec
from .lattice import Grid, PotentialField, PotentialSpec, build_grid, sample_potential
from .spectral import (
    GapReport,
    OperatorSpectrum,
    SpaceSplit,
    calibrate_zero_edge,
    eigendecompose_box,
    split_spaces,
)


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the Nehari solver needs for one box.

    ``symmetry_step`` is the translation period in grid points: one cell for
    a genuinely periodic potential, one grid point for a constant one.
    """

    grid: Grid
    potential: PotentialField
    spectrum: OperatorSpectrum
    split: SpaceSplit
    nonlinearity: NonlinearitySpec
    gap: GapReport | None
    laplacian: str = "spectral"

    @property
    def potential_spec(self) -> PotentialSpec:
        return self.potential.spec

    @property
    def symmetry_step(self) -> int:
        translation_invariant = self.potential.spec is not None and self.potential.spec.kind in ("zero", "constant")
        if translation_invariant and self.nonlinearity.weight.kind in ("zero", "constant"):
            return 1
        return self.grid.points_per_cell


def build_problem(
    potential: PotentialSpec,
    nonlinearity: NonlinearitySpec,
    dim: int = 1,
    cells: int = 20,
    points_per_cell: int = 16,
    calibrate: bool = True,
    gap_index: int = 0,
    n_k: int | None = None,
    laplacian: str = "spectral",
    eps_split: float | None = None,
    beta_floor: float | None = None,
    max_size: int = 4096,
) -> Problem:
    """Build the grid, shift ``V`` so the gap edge sits at zero, and split.

    With ``calibrate=False`` the potential is used as given; this is the
    route for the positive-definite control (``V`` a positive constant).
    The Bloch calibration uses ``points_per_cell`` plane waves so that the
    box spectrum contains the calibrated edge exactly.
    """
    grid = build_grid(dim, cells, points_per_cell)
    gap = None
    if calibrate:
        if potential.kind in ("zero", "constant"):
            raise NoGapError("a constant potential has no spectral gap to calibrate against")
        if n_k is None:
            n_k = 64 if dim == 1 else 16
        potential, gap = calibrate_zero_edge(
            potential,
            gap_index=gap_index,
            n_k=n_k,
            cell_resolution=points_per_cell,
            dim=dim,
            laplacian=laplacian,
            return_gap=True,
        )
    field = sample_potential(potential, grid)
    spectrum = eigendecompose_box(field, laplacian, max_size=max_size)
    split = split_spaces(spectrum, eps_split=eps_split, beta_floor=beta_floor, gap=gap)
    return Problem(grid, field, spectrum, split, nonlinearity, gap, laplacian)
