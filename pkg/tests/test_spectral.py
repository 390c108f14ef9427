import warnings

import numpy as np
import pytest
from conftest import COSINE, LOG4, ONE

from nlsgap import (
    AmbiguousSplitError,
    NoGapError,
    PotentialSpec,
    State,
    ValidationError,
    bloch_bands,
    build_grid,
    build_problem,
    calibrate_zero_edge,
    e_norm,
    eigendecompose_box,
    find_gap,
    project,
    sample_potential,
    split_spaces,
)
from nlsgap.lattice import apply_S
from nlsgap.spectral import UncalibratedWarning, bands_to_csv


@pytest.fixture(scope="module")
def calibrated_cosine():
    return calibrate_zero_edge(COSINE, 0, 64, 16)


def test_bands_match_galerkin_oracle(oracles):
    ref = oracles["bands"]
    b = bloch_bands(COSINE, 64, 4, 32)
    np.testing.assert_allclose(b.k_points[:, 0], ref["k"], atol=1e-15)
    expect = np.array(ref["bands"])
    assert np.all(np.abs(b.bands - expect) <= 1e-6 * np.maximum(1.0, np.abs(expect)))
    assert np.all(np.diff(b.bands, axis=0) >= 0)


def test_free_bands():
    b = bloch_bands(PotentialSpec("zero"), 64, 4, 32)
    assert abs(b.bands[0, 0]) < 1e-12
    # the sampled union of the first bands covers [0, pi**2 * 4] without holes
    vals = np.sort(b.bands[:2].ravel())
    assert vals[0] < 1e-12 and vals[-1] > 4 * np.pi ** 2 - 1
    assert np.max(np.diff(vals)) < 2.0
    with pytest.raises(NoGapError):
        find_gap(b, 0)


def test_band_preconditions():
    with pytest.raises(ValidationError):
        bloch_bands(COSINE, 4, 4)
    with pytest.raises(ValidationError):
        bloch_bands(COSINE, 16, 1)


def test_gap_report_is_consistent():
    b = bloch_bands(COSINE, 64, 4, 32)
    gap = find_gap(b, 0)
    assert gap.width > 0
    mid = gap.left_edge + gap.width / 2
    assert np.min(np.abs(b.bands - mid)) >= gap.width / 2 - 1e-12
    assert gap.to_dict()["width"] == gap.width


def test_calibration_puts_edge_at_zero(calibrated_cosine):
    gap = find_gap(bloch_bands(calibrated_cosine, 64, 2, 16), 0)
    assert abs(gap.left_edge) < 1e-8
    again = calibrate_zero_edge(calibrated_cosine, 0, 64, 16)
    assert abs(again.shift - calibrated_cosine.shift) < 1e-8


@pytest.mark.parametrize("spec", [PotentialSpec("zero"), PotentialSpec("constant", constant=3.0)])
def test_calibration_without_gap(spec):
    with pytest.raises(NoGapError):
        calibrate_zero_edge(spec, 0, 16, 16)
    with pytest.raises(NoGapError):
        build_problem(spec, LOG4, cells=4, points_per_cell=8)


def test_free_box_spectrum_is_fourier():
    g = build_grid(1, 4, 8)
    spec = eigendecompose_box(sample_potential(PotentialSpec("zero"), g))
    expect = np.sort((2 * np.pi * np.arange(-16, 16) / 4) ** 2)
    np.testing.assert_allclose(spec.eigenvalues, expect, atol=1e-9)
    gram = spec.basis.T @ spec.basis
    assert np.max(np.abs(gram - np.eye(32))) < 1e-10


def test_box_spectrum_is_union_of_bloch_samples(calibrated_cosine):
    M, n = 8, 16
    g = build_grid(1, M, n)
    spec = eigendecompose_box(sample_potential(calibrated_cosine, g))
    b = bloch_bands(calibrated_cosine, 8 * M, n, n)
    # quasimomenta 2 pi j / M are every 8th sample of the 8M-point k-grid
    sampled = np.sort(b.bands[:, ::8].ravel())
    np.testing.assert_allclose(spec.eigenvalues, sampled, atol=1e-8 * np.max(np.abs(sampled)))
    assert spec.max_residual <= 1e-8 * np.max(np.abs(spec.eigenvalues))
    split = split_spaces(spec, gap=find_gap(bloch_bands(calibrated_cosine, 64, 2, n), 0))
    assert split.n_minus == M


def test_l2_orthonormal_eigenfunctions(small_gap_problem):
    spec = small_gap_problem.spectrum
    h = small_gap_problem.grid.weight
    F = spec.basis / np.sqrt(h)
    assert np.max(np.abs(h * F.T @ F - np.eye(spec.size))) < 1e-10
    assert np.all(np.diff(spec.eigenvalues) >= 0)


def test_uncalibrated_indefinite_box_warns():
    g = build_grid(1, 4, 8)
    pot = sample_potential(PotentialSpec("cosine", amplitude=1.0, shift=-4.0), g)
    with pytest.warns(UncalibratedWarning):
        eigendecompose_box(pot)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        eigendecompose_box(sample_potential(ONE, g))


def test_box_size_cap():
    g = build_grid(2, 4, 8)
    with pytest.raises(ValidationError, match="smaller grid"):
        eigendecompose_box(sample_potential(COSINE, g), max_size=512)


def test_positive_definite_split_is_all_plus():
    g = build_grid(1, 4, 8)
    split = split_spaces(eigendecompose_box(sample_potential(ONE, g)))
    assert split.n_minus == 0 and split.n_plus == 32
    assert split.beta_num == pytest.approx(1.0)


def test_ambiguous_split_detected(small_gap_problem):
    spec = small_gap_problem.spectrum
    lam = np.array(spec.eigenvalues)
    eps, beta = 1e-6, 0.5
    lam[np.argmin(np.abs(lam - 1.0))] = (eps + beta) / 2
    fake = type(spec)(spec.grid, spec.potential, lam, spec.basis, spec.max_residual)
    with pytest.raises(AmbiguousSplitError):
        split_spaces(fake, eps, beta)
    with pytest.raises(ValidationError):
        split_spaces(spec, 1.0, 0.5)


def test_split_counts_bloch_samples(small_gap_problem):
    split = small_gap_problem.split
    assert split.n_minus + split.n_plus == small_gap_problem.grid.size
    assert split.n_minus == small_gap_problem.grid.cells
    assert split.beta_num > 0


def test_project_identities(small_gap_problem, rng):
    split = small_gap_problem.split
    g = small_gap_problem.grid
    u = State(g, rng.standard_normal(g.shape))
    up, um = project(u, split, "plus"), project(u, split, "minus")
    np.testing.assert_allclose((up + um).values, u.values, atol=1e-12)
    np.testing.assert_allclose(project(up, split, "plus").values, up.values, atol=1e-12)
    assert abs(np.sum(up.values * um.values) * g.weight) < 1e-10
    i = split.plus_idx[3]
    e = split.spectrum.eigenfunction(i)
    np.testing.assert_allclose(project(e, split, "plus").values, e.values, atol=1e-12)
    assert np.max(np.abs(project(e, split, "minus").values)) < 1e-12
    with pytest.raises(ValidationError):
        project(u, split, "both")


def test_e_norm_examples(small_gap_problem, rng):
    split = small_gap_problem.split
    spec = split.spectrum
    g = small_gap_problem.grid
    assert e_norm(State(g, np.zeros(g.shape)), split) == 0.0
    i, j = split.plus_idx[0], split.plus_idx[5]
    e = spec.eigenfunction(i)
    scaled = State(g, e.values * 2 / np.sqrt(spec.eigenvalues[i]))
    assert e_norm(scaled, split) == pytest.approx(2.0, rel=1e-10)
    both = e + spec.eigenfunction(j)
    expect = np.sqrt(abs(spec.eigenvalues[i]) + abs(spec.eigenvalues[j]))
    assert e_norm(both, split) == pytest.approx(expect, rel=1e-10)


def test_e_norm_is_quadratic_form_on_each_part(small_gap_problem, rng):
    split = small_gap_problem.split
    pot = small_gap_problem.potential
    g = small_gap_problem.grid
    u = State(g, rng.standard_normal(g.shape))
    for part, sign in (("plus", 1.0), ("minus", -1.0)):
        v = project(u, split, part)
        form = np.sum(apply_S(pot, v).values * v.values) * g.weight
        assert e_norm(v, split) ** 2 == pytest.approx(sign * form, rel=1e-10)


def test_beta_num_trend():
    betas = [build_problem(COSINE, LOG4, cells=M, points_per_cell=16).split.beta_num for M in (4, 8)]
    width = find_gap(bloch_bands(calibrate_zero_edge(COSINE, 0, 64, 16), 64, 2, 16), 0).width
    assert betas[1] <= betas[0] + 1e-9
    assert betas[1] >= width - 1e-8


def test_near_edge_eigenvalues_scale_inverse_square():
    # A strong lattice flattens the band so the edge is quadratic already at k = 2 pi / 4
    spec = PotentialSpec("cosine", amplitude=8.0)
    cells = np.array([4, 8, 16])
    gaps = []
    for M in cells:
        lam = np.abs(build_problem(spec, LOG4, cells=int(M), points_per_cell=16).split.minus_abs_eigenvalues)
        gaps.append(np.min(lam[lam > 1e-9 * lam.max()]))
    slope = np.polyfit(np.log(cells), np.log(gaps), 1)[0]
    assert -2.5 <= slope <= -1.5


def test_2d_bands_are_sums():
    b1 = bloch_bands(COSINE, 16, 2, 16)
    b2 = bloch_bands(COSINE, 16, 2, 16, dim=2)
    k1, k2 = np.divmod(np.arange(256), 16)
    np.testing.assert_allclose(b2.bands[0], b1.bands[0, k1] + b1.bands[0, k2], atol=1e-9)


def test_bands_csv(tmp_path):
    b = bloch_bands(COSINE, 8, 3, 16)
    path = tmp_path / "b.csv"
    bands_to_csv(b, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "k,band_0,band_1,band_2"
    assert len(rows) == 9
    assert float(rows[3].split(",")[2]) == b.bands[1, 2]
