import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherespec.geodesy import (
    DistanceEngine,
    closed_form_distance,
    distance,
    fast_march,
    fitted_order,
    reduce_pair,
    round_field_error,
    round_oracle_report,
    sphere_chordal_distance,
    unit_angle,
)
from spherespec.profiles import make_football, make_round, make_smoothed, rescale


def cosine_law(r1, r2, T):
    return np.arccos(np.clip(np.cos(r1) * np.cos(r2) + np.sin(r1) * np.sin(r2) * np.cos(T), -1, 1))


@pytest.fixture(scope="module")
def smoothed():
    return make_smoothed(3, 0.9, 0.1, 1e-4, 5e-3)


def test_unit_angle_cases():
    e = np.eye(3)
    assert unit_angle(e[0], e[0]) == 0.0
    assert unit_angle(e[0], -e[0]) == pytest.approx(math.pi, abs=1e-15)
    assert unit_angle(e[0], e[1]) == pytest.approx(math.pi / 2, abs=1e-15)
    # stable for tiny angles where arccos of the dot product loses digits
    a = 1e-9
    assert unit_angle(e[0], np.array([math.cos(a), math.sin(a), 0])) == pytest.approx(a, rel=1e-6)


def test_reduce_pair_cases():
    t = np.array([1.0, 0, 0])
    assert reduce_pair((0.3, t), (1.2, t))[2] == 0.0
    assert reduce_pair((0.3, t), (1.2, -t))[2] == pytest.approx(math.pi)
    assert reduce_pair((0.3, t), (1.2, np.array([0, 1.0, 0])))[2] == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        reduce_pair((0.3, 2 * t), (1.2, t))


def test_sphere_chordal_distance_rejects_non_unit():
    with pytest.raises(ValueError):
        sphere_chordal_distance(np.array([1.0, 1.0]), np.array([1.0, 0.0]))


def test_distance_zero_and_poles():
    p = make_round(3, 512)
    t = np.array([1.0, 0, 0])
    assert distance(p, (1.0, t), (1.0, t)) == 0.0
    assert distance(p, (0.0, t), (math.pi, t)) == pytest.approx(math.pi)


@settings(max_examples=50)
@given(r1=st.floats(0, math.pi), r2=st.floats(0, math.pi), T=st.floats(0, math.pi))
def test_round_closed_form_matches_cosine_law(r1, r2, T):
    p = make_round(2, 64)
    d = closed_form_distance(p, r1, r2, T)
    assert float(d) == pytest.approx(float(cosine_law(r1, r2, T)), abs=1e-7)


@settings(max_examples=50)
@given(r1=st.floats(0, 3), r2=st.floats(0, 3), r3=st.floats(0, 3),
       a=st.floats(0, math.pi), b=st.floats(0, math.pi))
def test_football_closed_form_triangle(r1, r2, r3, a, b):
    p = make_football(3, 0.8, 256)
    d12 = float(closed_form_distance(p, r1, r2, a))
    d23 = float(closed_form_distance(p, r2, r3, b))
    # the angle between theta_1 and theta_3 lies in [|a - b|, min(a + b, 2 pi - a - b)]
    for T in (abs(a - b), min(a + b, 2 * math.pi - a - b)):
        assert float(closed_form_distance(p, r1, r3, T)) <= d12 + d23 + 1e-10


def test_meridians_exact_any_profile(smoothed):
    rng = np.random.default_rng(0)
    for p in (make_round(3, 256), make_football(3, 0.9, 256), smoothed, rescale(smoothed, 0.1)):
        r1, r2 = rng.uniform(0, p.R, 50), rng.uniform(0, p.R, 50)
        eng = DistanceEngine(p, 64, 64)
        np.testing.assert_allclose(eng.distance(r1, r2, np.zeros(50)), np.abs(r1 - r2), atol=1e-10)


def test_football_equator_arc_bound():
    c = 0.9
    p = make_football(3, c, 512)
    exact = float(closed_form_distance(p, math.pi / 2, math.pi / 2, math.pi / 2))
    assert exact <= c * math.pi / 2 + 1e-12
    fld = fast_march(p, math.pi / 2, 256, 256)
    # first-order fast marching approaches from above
    assert float(fld(np.array([math.pi / 2]), np.array([math.pi / 2]))[0]) >= exact - 1e-3


def test_pole_source_is_radial_distance():
    p = make_round(2, 64)
    fld = fast_march(p, 0.0, 128, 128)
    R, _ = np.meshgrid(fld.r, fld.Theta, indexing="ij")
    np.testing.assert_allclose(fld.d, R, atol=1e-12)


def test_generic_source_first_order():
    errs = [round_field_error(m, 1.0, cut_margin=0.3) for m in (64, 128, 256)]
    h = [math.pi / m for m in (64, 128, 256)]
    assert errs[0] > errs[1] > errs[2]
    assert fitted_order(h, errs) >= 0.9
    assert max(e / hh for e, hh in zip(errs, h)) < 2.0


def test_oracle_report_pole_source_exact():
    rep = round_oracle_report(0.0, (32, 64))
    assert rep["order"] == math.inf
    assert max(rep["max_err"]) < 1e-12


def test_monotone_along_acceptance_order():
    p = make_football(3, 0.8, 256)
    fld = fast_march(p, 1.1, 128, 128)
    vals = fld.d.ravel()[fld.order]
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.all(np.isfinite(fld.d))


def test_smooth_cap_branch_against_fast_marching(smoothed):
    a = smoothed.pole_branch[2]
    rng = np.random.default_rng(5)
    r1 = rng.uniform(0, a, 20)
    r2 = rng.uniform(0, a, 20)
    T = rng.uniform(0, math.pi, 20)
    exact = closed_form_distance(smoothed, r1, r2, T)
    assert not np.any(np.isnan(exact))
    eng = DistanceEngine(smoothed, 256, 256)
    np.testing.assert_allclose(eng.distance(r1, r2, T, method="fmm"), exact, atol=5 * eng.h)


def test_engine_symmetry_and_mirror(smoothed):
    eng = DistanceEngine(smoothed, 128, 128)
    R = smoothed.R
    r1, r2, T = np.array([0.4, 2.0]), np.array([1.7, 0.9]), np.array([1.0, 2.5])
    d12 = eng.distance(r1, r2, T)
    np.testing.assert_allclose(eng.distance(r2, r1, T), d12, atol=3 * eng.h)
    np.testing.assert_allclose(eng.distance(R - r1, R - r2, T), d12, atol=3 * eng.h)


def test_engine_matches_cosine_law_on_round():
    p = make_round(3, 256)
    eng = DistanceEngine(p, 256, 256)
    rng = np.random.default_rng(7)
    r1, r2, T = rng.uniform(0, math.pi, 200), rng.uniform(0, math.pi, 200), rng.uniform(0, 2.5, 200)
    keep = cosine_law(r1, r2, T) < math.pi - 0.3
    d = eng.distance(r1[keep], r2[keep], T[keep], method="fmm")
    np.testing.assert_allclose(d, cosine_law(r1, r2, T)[keep], atol=2 * eng.h)


def test_rescaled_round_distances():
    p = rescale(make_smoothed(3, 0.9, 0.1, 1e-4, 5e-3), 0.1)
    s = math.sqrt(0.9)
    base = make_smoothed(3, 0.9, 0.1, 1e-4, 5e-3)
    a = base.pole_branch[2]
    np.testing.assert_allclose(closed_form_distance(p, s * 0.5 * a, s * 0.3 * a, 1.0),
                               s * closed_form_distance(base, 0.5 * a, 0.3 * a, 1.0), rtol=1e-12)


def test_fast_march_validation():
    with pytest.raises(ValueError):
        fast_march(make_round(2, 64), 4.0)
