import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from spherespec.eigenmap import build_map, football_map, radial_jacobian
from spherespec.profiles import make_football, make_round
from spherespec.regularity import (
    SamplerSpec,
    SweepRow,
    distortion_scan,
    fit_epsilon,
    gh_proxy_report,
    image_angle,
    injectivity_scan,
    lipschitz_lower,
    pole_witness,
    sample_pairs,
    sharpness_sweep,
    sweep_profile,
    sweep_row,
    write_sweep,
    xi_from_rule,
)
from spherespec.spectrum import first_eigs, football_alpha

SMALL = SamplerSpec(count=400, fmm_grid=128)


@pytest.fixture(scope="module")
def round_map():
    p = make_round(3, 1024)
    return build_map(first_eigs(p, 3), p)


def test_fit_epsilon_identity_and_known():
    d = np.linspace(0.01, 1.0, 50)
    assert fit_epsilon(d, d) == 0.0
    assert fit_epsilon(d, 1.2 * d) == pytest.approx(0.2, abs=1e-12)


@settings(max_examples=40)
@given(scale=st.floats(0.05, 2.0), seed=st.integers(0, 1000))
def test_fit_epsilon_is_tight(scale, seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(1e-3, 1.0, 30)
    dt = d * rng.uniform(scale, max(scale, 1.0) + 0.1, 30)
    eps = fit_epsilon(d, dt)
    assert np.all(dt <= (1 + eps) * d + 1e-12)
    assert np.all((1 - eps) * d ** (1 + eps) <= dt + 1e-12)
    if eps > 1e-9:
        e2 = eps - 1e-6
        tight = np.all(dt <= (1 + e2) * d) and np.all((1 - e2) * d ** (1 + e2) <= dt)
        assert not tight


def test_sampler_deterministic_and_stratified():
    p = make_football(3, 0.9, 512)
    a = sample_pairs(p, SMALL, seed=4)
    b = sample_pairs(p, SMALL, seed=4)
    np.testing.assert_array_equal(a.d, b.d)
    assert len(a) == 400
    assert np.all((a.d > 0) & (a.d <= 1.0))
    kinds, counts = np.unique(a.kind, return_counts=True)
    assert dict(zip(kinds, counts)) == {"equatorial": 80, "meridian": 160, "random": 160}


def test_round_identity_distortion(round_map):
    res = distortion_scan(round_map.profile, round_map, SamplerSpec(count=2000), seed=0)
    assert res.epsilon <= 1e-6
    assert res.inf_ratio >= 1 - 1e-6
    assert lipschitz_lower(res) == pytest.approx(1.0, abs=1e-8)


def test_football_meridian_integral():
    # along a meridian the image moves on a great circle: psi(s) = int_0^s |df~(d_r)| dr
    m = football_map(3, 0.9)
    w = pole_witness(m, fractions=(0.5, 0.1, 0.01))
    for s, dt in zip(w["s"], w["dt"]):
        psi = quad(lambda r: float(radial_jacobian(m, np.array([r]))[0]), 0, s, limit=200)[0]
        assert dt == pytest.approx(2 * psi, rel=1e-7)
    assert float(image_angle(m, np.array([w["s"][0]]))[0]) == pytest.approx(w["dt"][0] / 2, rel=1e-12)


def test_football_short_pole_pairs_contract():
    m = football_map(3, 0.9)
    res = distortion_scan(m.profile, m, SMALL, seed=1)
    assert res.epsilon > 0.0
    ratio = res.ratio
    # upper bound holds with the fitted epsilon, and some pair drops well below 1 - epsilon
    assert np.all(ratio <= 1 + res.epsilon + 1e-12)
    assert res.inf_ratio < 1 - 0.1


def test_pole_witness_round(round_map):
    w = pole_witness(round_map)
    # an isometry: the image arc across the pole has the source length 2s
    np.testing.assert_allclose(w["ratio"], 1.0, rtol=1e-7)


def test_injectivity_round_and_football(round_map):
    rep = injectivity_scan(round_map)
    assert rep["passed"] and rep["psi_monotone"] and rep["coverage"] == 1.0
    rep = injectivity_scan(football_map(3, 0.5))
    assert 0 <= rep["coverage"] <= 1  # report only


def test_xi_rules():
    assert xi_from_rule(0.1, 3, "square") == pytest.approx(0.01)
    a = football_alpha(3, 0.9)
    assert xi_from_rule(0.1, 3, "pole") ** a == pytest.approx(0.1, rel=1e-12)
    assert xi_from_rule(0.1, 3, lambda e: e / 2) == 0.05
    with pytest.raises(ValueError):
        xi_from_rule(0.1, 3, "cubic")


def test_round_sweep_row():
    row = sweep_row(3, 0.0, sampler=SMALL, cells=1024)
    assert row.ok
    assert row.volume_ratio == pytest.approx(1.0, abs=1e-12)
    assert row.min_radial_jac == pytest.approx(1.0, abs=1e-7)
    assert abs(row.lambda_gap) < 1e-6
    base, resc = sweep_profile(3, 0.0, 0.0)
    assert base is resc


def test_sweep_row_failure_is_reported():
    row = sweep_row(3, 0.1, xi_rule=lambda e: 1.5, sampler=SMALL, cells=1024)
    assert not row.ok and row.error


def test_sweep_requires_decreasing_etas():
    with pytest.raises(ValueError):
        sharpness_sweep(3, [0.1, 0.2])
    with pytest.raises(ValueError):
        sharpness_sweep(3, [])


def test_small_sweep_trends(tmp_path):
    res = sharpness_sweep(2, [0.3, 0.15], sampler=SMALL, cells=1024)
    rows = res["rows"]
    assert all(r.ok for r in rows)
    assert res["trends"]["volume_ratio_increasing"]
    assert res["trends"]["min_radial_jac_decreasing"]
    write_sweep(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(SweepRow.CSV_COLUMNS)
    assert len(lines) == 3


def test_gh_proxy_round_and_football():
    p = make_round(2, 256)
    rep = gh_proxy_report(p, first_eigs(p, 2, cells=1024), nodes=16)
    assert rep["rad"] == pytest.approx(math.pi, abs=1e-9)
    assert rep["volume_ratio"] == pytest.approx(1.0, abs=1e-12)
    assert abs(rep["lambda_gap"]) < 1e-6
    # on the football the equator is the worst center: eccentricity c pi there
    f = make_football(2, 0.9, 256)
    rep = gh_proxy_report(f, nodes=16)
    assert rep["rad"] == pytest.approx(0.9 * math.pi, abs=1e-9)
    assert rep["rad_center_r"] == pytest.approx(math.pi / 2)
