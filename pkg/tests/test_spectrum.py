import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from spherespec.profiles import make_football, make_round, make_smoothed, rescale
from spherespec.spectrum import (
    ChannelCoverageError,
    RadialProblem,
    TridiagonalSystem,
    assemble_radial,
    first_eigs,
    football_alpha,
    football_lambda,
    harmonic_multiplicity,
    lichnerowicz_gap_report,
    normalize_eigenfunctions,
    richardson,
    solve_channel,
    solve_lowest,
    sphere_mode_eigenvalue,
)


def test_mode_eigenvalues_and_multiplicities():
    assert sphere_mode_eigenvalue(3, 0) == 0
    assert sphere_mode_eigenvalue(3, 1) == 2
    assert harmonic_multiplicity(3, 1) == 3
    assert sphere_mode_eigenvalue(2, 1) == 1
    assert harmonic_multiplicity(2, 1) == 2
    # degree-2 harmonics on S^2 have dimension 5
    assert harmonic_multiplicity(3, 2) == 5
    with pytest.raises(ValueError):
        sphere_mode_eigenvalue(1, 0)


def test_football_alpha_extended_precision():
    mpmath.mp.dps = 30
    n, c = 3, mpmath.mpf("0.9")
    alpha = (-n + mpmath.sqrt(n * n - 4 * (n - 1) * (1 - 1 / c**2))) / 2
    assert football_alpha(3, 0.9) == pytest.approx(float(alpha), rel=1e-14)
    assert football_alpha(3, 0.9) == pytest.approx(0.14898, abs=1e-5)
    lam = alpha + 1 + (n - 1) / c**2
    assert football_lambda(3, 0.9) == pytest.approx(float(lam), rel=1e-13)
    assert float(lam) == pytest.approx(3.6181, abs=1e-4)


@given(n=st.integers(2, 6), c=st.floats(0.2, 1.0))
def test_football_lambda_forms_agree(n, c):
    a = football_alpha(n, c)
    assert football_lambda(n, c, 1) == pytest.approx(a + 1 + (n - 1) / c**2, rel=1e-12)


def test_solve_lowest_toy_system():
    # diag(1, 2) against identity mass
    sys_ = TridiagonalSystem(np.zeros(2), np.ones(2), np.array([1.0, 2.0]), np.array([0.0]), np.ones(2))
    lam, _ = solve_lowest(sys_, 2)
    np.testing.assert_allclose(lam, [1.0, 2.0], atol=1e-14)


def test_solve_lowest_matches_dense_solver():
    p = make_football(3, 0.8, 256)
    sys_ = assemble_radial(RadialProblem.uniform(p, 1, 128))
    lam, u = solve_lowest(sys_, 4)
    K = np.diag(sys_.diag) + np.diag(sys_.off, 1) + np.diag(sys_.off, -1)
    ref = eigh(K, np.diag(sys_.mass), eigvals_only=True)[:4]
    np.testing.assert_allclose(lam, ref, rtol=1e-10)
    assert np.all(u[0] > 0)


def test_assemble_rejects_coarse_grid():
    with pytest.raises(ValueError):
        assemble_radial(RadialProblem.uniform(make_round(3), 0, 32))


def test_round_channels():
    p = make_round(3, 1024)
    lam0, _, _ = solve_channel(p, 0, 3, 1024)
    lam1, _, _ = solve_channel(p, 1, 1, 1024)
    np.testing.assert_allclose(lam0, [0.0, 3.0, 8.0], atol=1e-6)
    assert lam1[0] == pytest.approx(3.0, rel=1e-6)


def test_richardson_cancels_second_order():
    h = np.array([0.1])
    exact = 2.0
    coarse = exact + 3 * h**2
    fine = exact + 3 * (h / 2) ** 2
    assert richardson(coarse, fine)[0] == pytest.approx(exact, abs=1e-14)


def test_richardson_improves_round():
    p = make_round(3, 1024)
    raw, _, _ = solve_channel(p, 0, 2, 256, extrapolate=False)
    ext, _, _ = solve_channel(p, 0, 2, 256, extrapolate=True)
    assert abs(ext[1] - 3.0) < abs(raw[1] - 3.0) / 10


def test_round_first_eigs():
    res = first_eigs(make_round(3, 1024), 3)
    np.testing.assert_allclose(res.lambda_sorted, [3, 3, 3, 3, 8], rtol=1e-6)
    assert sorted(res.labels[:4]) == [(0, 1), (1, 0), (1, 0), (1, 0)]


@pytest.mark.parametrize("c", [0.7, 0.8, 0.9])
def test_football_first_eigs(c):
    res = first_eigs(make_football(3, c, 1024), 3)
    expected = sorted([3.0] + [football_lambda(3, c)] * 3)
    np.testing.assert_allclose(res.lambda_sorted[:4], expected, rtol=1e-6)


def test_far_football_breaks_channel_order():
    # at c = 0.5 the k = 1 ground state sits above the second radial mode
    with pytest.raises(ChannelCoverageError):
        first_eigs(make_football(3, 0.5, 512), 3, cells=512)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        first_eigs(make_round(3), 2)


def test_normalization_round():
    p = make_round(3, 1024)
    res = normalize_eigenfunctions(first_eigs(p, 3), p)
    nz = res.normalization
    assert nz["mean_f1_sq"] == pytest.approx(0.25, rel=1e-12)
    assert nz["mean_fj_sq"] == pytest.approx(0.25, rel=1e-12)
    # f = ambient coordinates: A u0 = cos r
    r = np.linspace(0.1, 3.0, 7)
    np.testing.assert_allclose(nz["A"] * res.first_radial.radial(r), np.cos(r), atol=1e-8)
    np.testing.assert_allclose(nz["B"] * res.harmonic_radial.radial(r), np.sin(r), atol=1e-8)


def test_normalization_football_quadrature():
    from scipy.integrate import quad

    c = 0.9
    p = make_football(3, c, 1024)
    res = normalize_eigenfunctions(first_eigs(p, 3), p)
    # u0 = cos r up to sign and scale; A cos r must have mean square 1/4
    num = quad(lambda r: math.cos(r) ** 2 * math.sin(r) ** 2, 0, math.pi)[0]
    den = quad(lambda r: math.sin(r) ** 2, 0, math.pi)[0]
    A_ref = math.sqrt(0.25 / (num / den))
    r = np.array([0.3, 1.0, 2.0])
    np.testing.assert_allclose(np.abs(res.normalization["A"] * res.first_radial.radial(r)),
                               A_ref * np.abs(np.cos(r)), rtol=1e-7)


def test_harmonic_radial_vanishes_at_poles():
    p = make_football(3, 0.9, 1024)
    res = first_eigs(p, 3)
    u1 = res.harmonic_radial.radial
    mid = abs(float(u1(np.array([p.R / 2]))[0]))
    assert abs(float(u1(np.array([1e-6]))[0])) < 1e-5 * mid
    assert abs(float(u1(np.array([p.R - 1e-6]))[0])) < 1e-5 * mid


def test_sign_convention():
    p = make_football(3, 0.9, 512)
    res = first_eigs(p, 3, cells=512, refine=False)
    for m in res.modes:
        assert m.u[0] > 0


def test_lichnerowicz_gaps():
    p = make_round(3, 1024)
    rep = lichnerowicz_gap_report(first_eigs(p, 3), p)
    assert abs(rep["lambda1_gap"]) < 1e-6 and abs(rep["lambda_n1_gap"]) < 1e-6
    assert not rep["violation"]
    f = make_football(3, 0.9, 1024)
    rep = lichnerowicz_gap_report(first_eigs(f, 3), f)
    assert rep["lambda_n1_gap"] == pytest.approx(0.6181, abs=1e-4)
    assert rep["lambda1_gap"] >= -1e-6


def test_smoothed_close_to_football():
    # spectral continuity as xi shrinks: the k = 1 ground state approaches the football value
    target = football_lambda(3, 0.9)
    errs = []
    for xi in (0.1, 0.05, 0.025):
        kappa = xi / 10
        p = make_smoothed(3, 0.9, xi, kappa / 20, kappa, grid_size=1024)
        res = first_eigs(p, 3, cells=1024)
        errs.append(abs(res.harmonic_radial.lam - target))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] < 1.0


def test_rescaled_gap_shrinks():
    gaps = []
    for eta in (0.2, 0.1, 0.05):
        xi = eta**2
        kappa = xi / 10
        p = rescale(make_smoothed(3, 1 - eta, xi, kappa / 20, kappa, grid_size=1024), xi)
        gaps.append(first_eigs(p, 3, cells=1024).lambda_sorted[3] - 3)
    assert gaps[0] > gaps[1] > gaps[2] > 0


@settings(max_examples=6, deadline=None)
@given(c=st.floats(0.7, 0.99))
def test_football_k1_oracle_property(c):
    res = first_eigs(make_football(2, c, 512), 2, cells=1024)
    assert res.harmonic_radial.lam == pytest.approx(football_lambda(2, c), rel=1e-5)
