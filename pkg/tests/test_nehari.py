import math

import numpy as np
import pytest
from conftest import LOG4, POW4, random_minus_state, random_plus_state

from nlsgap import (
    DegenerateFiberError,
    EPrimeError,
    FiberOptions,
    NonlinearitySpec,
    State,
    ValidationError,
    dominance_check,
    e_norm,
    eval_J,
    inner_minimize,
    lp_norm,
    manifold_residual,
    nehari_map,
    project,
    psi_value_and_grad,
    shift_cells,
)
from nlsgap.oracle import build_tiny, inner_oracle


def unit(u, split):
    return u * (1.0 / e_norm(u, split))


def retract(w, z, eps, split):
    return unit(w + eps * z, split)


def test_inner_matches_trust_region_oracle(tiny_gap_problem, oracles, rng):
    spec = tiny_gap_problem.potential_spec
    assert spec.shift == oracles["tiny"]["gap_edge"]["shift"]
    tiny = build_tiny(spec, LOG4, cells=4, points_per_cell=8)
    split = tiny_gap_problem.split
    for t in (0.5, 2.0, 6.0):
        w = random_plus_state(tiny_gap_problem, rng)
        h, Phi, _ = inner_minimize(w, t, split, LOG4)
        h_ref, Phi_ref = inner_oracle(tiny, w.flat, t)
        scale = max(1.0, np.abs(h_ref).max())
        assert np.abs(h.flat - h_ref).max() <= 1e-8 * scale
        assert Phi == pytest.approx(Phi_ref, rel=1e-8, abs=1e-12)


def test_inner_trivial_cases(small_gap_problem, tiny_positive_problem, rng):
    w = random_plus_state(small_gap_problem, rng)
    h, Phi, _ = inner_minimize(w, 0.0, small_gap_problem.split, LOG4)
    assert np.all(h.flat == 0) and Phi == 0.0
    w = random_plus_state(tiny_positive_problem, rng)
    h, _, _ = inner_minimize(w, 3.0, tiny_positive_problem.split, POW4)
    assert np.all(h.flat == 0)


def test_positive_definite_fiber_closed_form(tiny_positive_problem, rng):
    split = tiny_positive_problem.split
    for _ in range(5):
        w = random_plus_state(tiny_positive_problem, rng)
        pt = nehari_map(w, split, POW4)
        assert pt.t ** 2 == pytest.approx(1.0 / lp_norm(w, 4) ** 4, rel=1e-10)
        assert np.all(pt.h.flat == 0)
        assert pt.psi == pytest.approx(0.25 * pt.t ** 2, rel=1e-10)


def test_nehari_map_preconditions(small_gap_problem, rng):
    split = small_gap_problem.split
    w = random_plus_state(small_gap_problem, rng)
    with pytest.raises(ValidationError, match="unit"):
        nehari_map(2.0 * w, split, LOG4)
    with pytest.raises(ValidationError, match="E\\+"):
        nehari_map(unit(w + random_minus_state(small_gap_problem, rng, 0.1), split), split, LOG4)


def test_fiber_uniqueness_under_random_starts(small_gap_problem, rng):
    split = small_gap_problem.split
    for _ in range(3):
        w = random_plus_state(small_gap_problem, rng)
        base = nehari_map(w, split, LOG4)
        assert base.t > 0 and base.psi > 0
        for _ in range(5):
            t0 = base.t * math.exp(rng.uniform(-2, 2))
            h0 = random_minus_state(small_gap_problem, rng, rng.uniform(0, 3))
            pt = nehari_map(w, split, LOG4, h_init=h0, t_init=t0)
            assert pt.t == pytest.approx(base.t, rel=1e-6)
            assert pt.psi == pytest.approx(base.psi, rel=1e-6)


def test_round_trip_and_residuals(small_gap_problem, rng):
    split = small_gap_problem.split
    w = random_plus_state(small_gap_problem, rng)
    pt = nehari_map(w, split, LOG4)
    up = project(pt.u, split, "plus")
    np.testing.assert_allclose(unit(up, split).flat, w.flat, atol=1e-8 * np.abs(w.flat).max())
    np.testing.assert_allclose(up.flat, pt.t * w.flat, atol=1e-10 * pt.t * np.abs(w.flat).max())
    r_u, r_e = pt.residual_manifold
    assert r_u <= 1e-11 and r_e <= 1e-11
    assert pt.psi == pytest.approx(eval_J(pt.u, split, LOG4), rel=1e-12)


def test_oddness_and_shift_equivariance(gap_problem, rng):
    split = gap_problem.split
    w = random_plus_state(gap_problem, rng)
    pt = nehari_map(w, split, LOG4)
    neg = nehari_map(-w, split, LOG4)
    scale = np.abs(pt.u.flat).max()
    np.testing.assert_allclose(neg.u.flat, -pt.u.flat, atol=1e-10 * scale)
    for k in (1, 7):
        sh = nehari_map(shift_cells(w, k), split, LOG4)
        np.testing.assert_allclose(sh.u.flat, shift_cells(pt.u, k).flat, atol=1e-10 * scale)
        assert sh.psi == pytest.approx(pt.psi, rel=1e-10)


def test_psi_gradient_matches_finite_differences(tiny_gap_problem, rng):
    split = tiny_gap_problem.split
    for _ in range(3):
        w = random_plus_state(tiny_gap_problem, rng)
        psi, grad = psi_value_and_grad(w, split, LOG4)
        gc = split.spectrum.coefficients(grad)
        wc = split.spectrum.coefficients(w)
        lam = np.abs(split.spectrum.eigenvalues)
        assert abs(np.dot(lam * gc, wc)) <= 1e-10 * max(1.0, math.sqrt(np.dot(lam * gc, gc)))
        z = random_plus_state(tiny_gap_problem, rng)
        zc = split.spectrum.coefficients(z)
        zc = zc - np.dot(lam * zc, wc) * wc
        z = split.spectrum.synthesize(zc)
        eps = 1e-5
        fp = psi_value_and_grad(retract(w, z, eps, split), split, LOG4)[0]
        fm = psi_value_and_grad(retract(w, z, -eps, split), split, LOG4)[0]
        fd = (fp - fm) / (2 * eps)
        analytic = float(np.dot(lam * gc, zc))
        assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-8 * max(1.0, abs(psi)))


def test_psi_gradient_has_no_normal_component(small_gap_problem, rng):
    split = small_gap_problem.split
    w = random_plus_state(small_gap_problem, rng)
    _, grad = psi_value_and_grad(w, split, LOG4)
    gc = split.spectrum.coefficients(grad)
    wc = split.spectrum.coefficients(w)
    lam = np.abs(split.spectrum.eigenvalues)
    assert abs(np.dot(lam * gc, wc)) < 1e-12 * max(1.0, np.abs(gc).max())
    assert np.all(gc[split.minus_idx] == 0)


def test_manifold_residual_contract(small_gap_problem, tiny_positive_problem, rng):
    split = small_gap_problem.split
    with pytest.raises(EPrimeError):
        manifold_residual(random_minus_state(small_gap_problem, rng), split, LOG4)
    off = NonlinearitySpec("zero", 4, 4)
    psplit = tiny_positive_problem.split
    for i in (psplit.plus_idx[0], psplit.plus_idx[9]):
        u = 3.7 * psplit.spectrum.eigenfunction(i)
        r_u, r_e = manifold_residual(u, psplit, off)
        # J'(u)u = lambda_i s^2 and the full norm squared is lambda_i s^2
        assert r_u == pytest.approx(1.0, rel=1e-12) and r_e == 0.0


def test_zero_nonlinearity_has_degenerate_fiber(tiny_positive_problem, rng):
    off = NonlinearitySpec("zero", 4, 4)
    w = random_plus_state(tiny_positive_problem, rng)
    with pytest.raises(DegenerateFiberError):
        nehari_map(w, tiny_positive_problem.split, off, FiberOptions(max_doublings=20))


def test_ground_state_properties(gap_problem, gap_ground_state):
    split = gap_problem.split
    rep = gap_ground_state
    up = project(rep.u, split, "plus")
    w = unit(up, split)
    pt = nehari_map(w, split, LOG4)
    assert pt.psi == pytest.approx(rep.c_est, rel=1e-10)
    _, grad = psi_value_and_grad(w, split, LOG4)
    assert e_norm(grad, split) <= 1e-6 * pt.t
    plus = e_norm(up, split)
    minus = e_norm(project(rep.u, split, "minus"), split)
    assert plus >= max(math.sqrt(2 * rep.c_est), minus) - 1e-8


def test_dominance_on_ground_state(gap_problem, gap_ground_state):
    split = gap_problem.split
    pt = nehari_map(unit(project(gap_ground_state.u, split, "plus"), split), split, LOG4)
    rep = dominance_check(pt, split, LOG4, n_samples=200, rng_seed=1, slack=1e-9 * abs(pt.psi))
    assert rep.passed and rep.worst_margin < 0
    assert eval_J(0 * pt.u, split, LOG4) < pt.psi


def test_singular_inner_hessian_gets_a_floor(tiny_gap_problem):
    from nlsgap.nehari import _solver

    solver = _solver(tiny_gap_problem.split, LOG4)
    H = np.diag(np.r_[0.0, 1.0, 2.0])
    c, lower = solver._factor(H)
    kappa = 1e-6 * tiny_gap_problem.split.beta_num
    assert c[0, 0] ** 2 == pytest.approx(kappa, rel=1e-12)
    # a regular matrix is factored unchanged
    c, _ = solver._factor(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(np.diag(c), [2.0, 3.0])
