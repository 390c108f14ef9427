import math

import numpy as np
import pytest
from conftest import COSINE, LOG4

from nlsgap import (
    ConvergenceError,
    EPrimeError,
    SolveOptions,
    State,
    ValidationError,
    convergence_study,
    decay_metric,
    dedup,
    eval_J,
    full_norm,
    ground_state,
    manifold_residual,
    multistart,
    normalize_state,
    orbit_distance,
    shift_cells,
)
from nlsgap.solver import start_state


@pytest.fixture(scope="module")
def soliton(soliton_problem):
    return ground_state(soliton_problem, 0)


def test_soliton_ground_state(soliton):
    assert soliton.converged
    assert soliton.c_est == pytest.approx(4 / 3, rel=1e-2)
    assert np.abs(soliton.u.flat).max() == pytest.approx(math.sqrt(2), rel=1e-2)
    assert soliton.decay < 1e-3
    # the normalized peak sits in the central cell with a positive value
    i = int(np.argmax(np.abs(soliton.u.flat)))
    assert i // 16 == 20 and soliton.u.flat[i] > 0


def test_report_invariants(gap_problem, gap_ground_state):
    rep = gap_ground_state
    split = gap_problem.split
    assert rep.converged and rep.c_est > 0
    assert rep.residual <= 1e-8
    assert eval_J(rep.u, split, LOG4) == rep.c_est
    r_u, r_e = manifold_residual(rep.u, split, LOG4)
    assert (r_u, r_e) == (rep.r_u, rep.r_eprime)
    assert rep.norm_ratio <= 1e3
    assert rep.cells == 20 and rep.points_per_cell == 16


def test_psi_is_monotone(gap_ground_state, soliton):
    for rep in (gap_ground_state, soliton):
        h = np.array(rep.psi_history)
        assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))


def test_restart_from_converged_state(gap_problem, gap_ground_state, soliton_problem, soliton):
    for problem, rep in ((gap_problem, gap_ground_state), (soliton_problem, soliton)):
        again = ground_state(problem, rep.u)
        assert again.iterations <= 2
        assert again.start_mode == "provided" and again.seed is None
        assert again.c_est == pytest.approx(rep.c_est, rel=1e-10)


def test_provided_start_needs_plus_part(small_gap_problem):
    split = small_gap_problem.split
    e = split.spectrum.eigenfunction(split.minus_idx[0])
    with pytest.raises(EPrimeError):
        ground_state(small_gap_problem, e)


def test_normalization_is_idempotent(gap_ground_state, soliton, rng):
    for rep in (gap_ground_state, soliton):
        u, shift, sign = normalize_state(rep.u)
        np.testing.assert_array_equal(u.values, rep.u.values)
        assert not any(shift) and sign == 1
    moved = -shift_cells(soliton.u, 7)
    back, shift, sign = normalize_state(moved)
    np.testing.assert_array_equal(back.values, soliton.u.values)
    assert shift == (-7,) and sign == -1


def test_decay_metric():
    from nlsgap import build_grid

    g = build_grid(1, 5, 4)
    vals = np.zeros(20)
    vals[10] = 2.0
    vals[1] = 0.5
    assert decay_metric(State(g, vals)) == 0.25
    assert decay_metric(State(g, np.zeros(20))) == 0.0


def test_gap_edge_box_minimizer_is_edge_bloch_like(gap_ground_state):
    # on 20 cells the minimizer fills the box and flips sign from cell to cell,
    # like the band-edge Bloch wave at quasimomentum pi
    u = gap_ground_state.u
    cells = u.values.reshape(20, 16)
    signs = (-1.0) ** np.arange(20)[:, None]
    ref = cells[10] * signs * signs[10]
    assert np.abs(cells - ref).max() <= 1e-6 * np.abs(cells).max()
    assert gap_ground_state.decay > 0.99


def test_orbit_distance_examples(small_gap_problem, soliton):
    u = soliton.u
    for k in (3, -5):
        assert orbit_distance(u, shift_cells(u, k)) < 1e-12
        assert orbit_distance(u, -shift_cells(u, k)) < 1e-12
    # without the sign quotient the best shift separates the supports
    assert orbit_distance(u, -u, odd=False) == pytest.approx(math.sqrt(2), rel=1e-6)
    spec = small_gap_problem.split.spectrum
    e1, e2 = spec.eigenfunction(20), spec.eigenfunction(33)
    a, b = e1.values, e2.values
    direct = min(
        np.linalg.norm(a - s * np.roll(b, 16 * k)) for k in range(4) for s in (1, -1)
    ) / max(np.linalg.norm(a), np.linalg.norm(b))
    assert orbit_distance(e1, e2) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValidationError):
        orbit_distance(e1, e2, step=5)


def test_dedup_examples(soliton):
    assert dedup([]) == []
    shifted = type(soliton)(**{**soliton.__dict__, "u": shift_cells(soliton.u, 4), "c_est": soliton.c_est + 1e-9})
    reps = dedup([shifted, soliton])
    assert reps == [soliton]
    with pytest.raises(ValidationError):
        dedup([soliton], tol_orbit=1.5)


def test_multistart_contract(gap_problem):
    opts = SolveOptions(rng_seed=3)
    runs = multistart(gap_problem, 3, opts)
    assert [r.seed for r in runs] == [3, 4, 5]
    assert [r.c_est for r in multistart(gap_problem, 3, opts)] == [r.c_est for r in runs]
    threaded = multistart(gap_problem, 3, opts, threads=3)
    assert [r.c_est for r in threaded] == pytest.approx([r.c_est for r in runs], rel=1e-12)
    single = multistart(gap_problem, 1, opts)[0]
    direct = ground_state(gap_problem, 3, opts)
    assert single.c_est == direct.c_est
    np.testing.assert_array_equal(single.u.values, direct.u.values)
    reps = dedup(runs, step=gap_problem.symmetry_step)
    assert len(reps) == 1
    assert all(r.c_est == pytest.approx(reps[0].c_est, rel=1e-4) for r in runs)
    with pytest.raises(ValidationError):
        multistart(gap_problem, 0)


def test_iteration_cap_attaches_report(gap_problem):
    with pytest.raises(ConvergenceError) as info:
        ground_state(gap_problem, 0, SolveOptions(max_outer_iterations=1))
    rep = info.value.detail
    assert not rep.converged and rep.iterations == 1
    assert rep.message == "iteration cap reached"
    failed = multistart(gap_problem, 2, SolveOptions(max_outer_iterations=1))
    assert not any(r.converged for r in failed)
    assert dedup(failed) == []


def test_start_modes(small_gap_problem):
    split = small_gap_problem.split
    lam = np.abs(split.spectrum.eigenvalues)
    for mode in ("random_lowmode", "gaussian"):
        w = start_state(small_gap_problem, SolveOptions(start_mode=mode), 4)
        c = split.spectrum.coefficients(w)
        assert math.sqrt(np.dot(lam, c * c)) == pytest.approx(1.0, rel=1e-12)
        assert np.all(c[split.minus_idx] == 0)
    rep = ground_state(small_gap_problem, 1, SolveOptions(start_mode="gaussian", gaussian_width=0.5))
    assert rep.converged and rep.start_mode == "gaussian"
    with pytest.raises(ValidationError):
        start_state(small_gap_problem, SolveOptions(start_mode="provided"))


@pytest.mark.parametrize(
    "kwargs",
    [dict(start_mode="warm"), dict(tol_residual=0), dict(backtrack=1.0), dict(armijo=1.5), dict(max_outer_iterations=0)],
)
def test_solve_options_validation(kwargs):
    with pytest.raises(ValidationError):
        SolveOptions(**kwargs)


def test_convergence_study_small_boxes():
    study = convergence_study(COSINE, LOG4, cells=(4, 8), points_per_cell=16)
    assert study.converged == [True, True]
    # the box minimizer extends over the whole box, so the level is extensive in M
    assert study.c_est[1] == pytest.approx(2 * study.c_est[0], rel=1e-6)
    assert study.drift == pytest.approx(0.5, rel=1e-6)
    assert study.to_dict()["cells"] == [4, 8]


def test_full_norm_of_report(gap_problem, gap_ground_state):
    N = full_norm(gap_ground_state.u, gap_problem.split, LOG4.mu)
    assert math.isfinite(N) and N > 0
