"""Ground states of periodic nonlinear Schroedinger equations with zero at a gap edge.

The discretized problem lives on a periodic box of whole lattice cells. The
operator ``-Laplacian + V`` is shifted so that the top of a spectral band
sits at zero, split into its positive part E+ and the rest E', and ground
states are found by minimizing the energy over the Nehari-Pankov manifold,
parametrized by the unit sphere of E+.
"""

__version__ = "0.1.0"

from ._jit import HAVE_NUMBA, JIT_ENABLED
from .errors import (
    AmbiguousSplitError,
    ConvergenceError,
    DegenerateFiberError,
    EigensolveError,
    EPrimeError,
    GridMismatchError,
    NlsGapError,
    NoGapError,
    ResamplingError,
    ValidationError,
)
from .functional import (
    ConditionReport,
    NonlinearitySpec,
    assert_solvable,
    check_conditions,
    eval_G,
    eval_I,
    eval_J,
    eval_dg,
    eval_g,
    grad_J,
    strong_residual,
)
from .lattice import (
    Grid,
    PotentialField,
    PotentialSpec,
    State,
    apply_S,
    build_grid,
    load_tabulated_csv,
    sample_potential,
    shift_cells,
)
from .nehari import (
    DominanceReport,
    FiberOptions,
    NehariPoint,
    dominance_check,
    inner_minimize,
    manifold_residual,
    nehari_map,
    psi_value_and_grad,
)
from .norms import full_norm, lp_norm, mixed_norm_exact, mixed_norm_maxform, mixed_norm_surrogate
from .problem import Problem, build_problem
from .solver import (
    ConvergenceStudy,
    GroundStateReport,
    SolveOptions,
    convergence_study,
    decay_metric,
    dedup,
    ground_state,
    multistart,
    normalize_state,
    orbit_distance,
)
from .spectral import (
    BandStructure,
    GapReport,
    OperatorSpectrum,
    SpaceSplit,
    bloch_bands,
    calibrate_zero_edge,
    e_norm,
    eigendecompose_box,
    find_gap,
    project,
    split_spaces,
)
