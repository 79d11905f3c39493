import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherespec.eigenmap import build_map, eval_tilde, football_map
from spherespec.profiles import make_round, make_smoothed
from spherespec.spectrum import first_eigs
from spherespec.splitting import (
    BallQuadrature,
    ball_average,
    ball_quadrature,
    center_lattice,
    chain_scan,
    default_direction,
    gram_matrix,
    matrix_inequality_check,
    max_norm,
    rotate_to_pole,
    sphere_nodes,
    splitting_defect,
    transform_at_scale,
    transform_from_gram,
)


@pytest.fixture(scope="module")
def round3():
    p = make_round(3, 1024)
    return build_map(first_eigs(p, 3), p)


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_matrix_inequality_examples():
    I = np.eye(3)
    assert max_norm(I @ I - I) == 0.0
    # A = 2I, B = I: |AB - I| = 1 = |A - I| + |B - I| + n |A - I| |B - I|
    assert max_norm(2 * I @ I - I) == 1.0
    for n in (2, 3, 4):
        rep = matrix_inequality_check(20_000, n, seed=n)
        assert rep["passed"] and rep["violations"] == 0
    with pytest.raises(ValueError):
        matrix_inequality_check(0)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_sphere_nodes_integrate_moments(m):
    pts, w = sphere_nodes(m, 16)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # second moments of the uniform measure on S^m are delta / (m + 1)
    M = (pts * w[:, None]).T @ pts
    np.testing.assert_allclose(M, np.eye(m + 1) / (m + 1), atol=1e-12)
    np.testing.assert_allclose(w @ pts, 0.0, atol=1e-14)


def test_rotation_cases(round3):
    n = 3
    e = np.eye(n)
    sm = rotate_to_pole(round3, (math.pi / 2, e[-1]))
    np.testing.assert_allclose(sm.T, np.eye(n + 1), atol=1e-12)
    sm = rotate_to_pole(round3, (math.pi / 2, -e[-1]))
    np.testing.assert_allclose(sm.T, np.diag([-1.0, 1, 1, -1]), atol=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = (rng.uniform(0.1, 3.0), _unit(rng, n))
        sm = rotate_to_pole(round3, x)
        assert np.linalg.det(sm.T) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(sm.T @ sm.T.T, np.eye(n + 1), atol=1e-12)
        fx = eval_tilde(round3, np.array([x[0]]), x[1][None, :])[0]
        np.testing.assert_allclose(sm.T[-1], fx, atol=1e-12)


def test_chart_gradient_orthonormal_at_center(round3):
    rng = np.random.default_rng(1)
    x = (1.1, _unit(rng, 3))
    sm = rotate_to_pole(round3, x)
    q = ball_quadrature(round3.profile, x, 0.01)
    G = gram_matrix(sm, q)
    np.testing.assert_allclose(G, np.eye(3), atol=1e-4)


def test_ball_average_constant_and_indicator(round3):
    x = (1.0, default_direction(3))
    q = ball_quadrature(round3.profile, x, 0.2)
    assert isinstance(q, BallQuadrature)
    ones = np.ones(q.theta.shape[:2])
    assert q.average(ones) == pytest.approx(1.0, abs=1e-14)
    val = ball_average(lambda r, th: 7.5 * np.ones(th.shape[:-1]), round3.profile, x, 0.2)
    assert float(val) == pytest.approx(7.5, rel=1e-14)


def test_ball_average_radial_moment(round3):
    # average of d(x, .)^2 over a small ball in dimension 3 is 3 s^2 / 5 (1 + O(s^2))
    s = 0.1
    x = (math.pi / 2, default_direction(3))
    q = ball_quadrature(round3.profile, x, s)
    # x is the equator point (0, theta_c) in ambient coordinates
    c = np.sin(q.r)[:, None] * (q.theta @ x[1])
    d2 = np.arccos(np.clip(c, -1, 1)) ** 2
    assert q.average(d2) == pytest.approx(0.6 * s**2, rel=0.02)


def test_gradient_norm_average_round(round3):
    sm = rotate_to_pole(round3, (1.0, default_direction(3)))
    devs = []
    for s in (0.2, 0.1):
        G = gram_matrix(sm, ball_quadrature(round3.profile, (1.0, default_direction(3)), s))
        devs.append(max(abs(np.diag(G) - 1)))
    assert devs[1] < devs[0] / 3


def test_round_defect_second_order(round3):
    sm = rotate_to_pole(round3, (math.pi / 2, default_direction(3)))
    eps = [splitting_defect(sm, s).epsilon_achieved for s in (0.2, 0.1, 0.05)]
    orders = np.log2(np.array(eps[:-1]) / np.array(eps[1:]))
    assert np.all(orders >= 1.8)
    assert splitting_defect(sm, 0.1).epsilon_achieved < 0.02


def test_transform_from_gram_cases():
    np.testing.assert_allclose(transform_from_gram(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(transform_from_gram(np.diag([4.0, 1, 1])), np.diag([0.5, 1, 1]), atol=1e-15)
    with pytest.raises(np.linalg.LinAlgError):
        transform_from_gram(np.diag([1.0, -1.0, 1.0]))


@settings(max_examples=30)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5))
def test_transform_uniqueness(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    G = M @ M.T + n * np.eye(n)
    T = transform_from_gram(G)
    assert np.allclose(np.triu(T, 1), 0) and np.all(np.diag(T) > 0)
    np.testing.assert_allclose(T @ G @ T.T, np.eye(n), atol=1e-10)
    # second route: the lower factor from QR of the symmetric square root
    w, V = np.linalg.eigh(G)
    S = V @ np.diag(np.sqrt(w)) @ V.T
    Q, Rm = np.linalg.qr(S)
    L = Rm.T * np.sign(np.diag(Rm))
    np.testing.assert_allclose(np.linalg.inv(L), T, atol=1e-10)


def test_transform_stable_under_quadrature_permutation(round3):
    x = (1.2, default_direction(3))
    sm = rotate_to_pole(round3, x)
    q = ball_quadrature(round3.profile, x, 0.1)
    perm = np.random.default_rng(2).permutation(q.r.size)
    qp = BallQuadrature(q.r[perm], q.Theta[perm], q.cell_weight[perm], q.theta[perm],
                        q.omega_weight, q.s, q.cells_inside)
    T1 = transform_from_gram(gram_matrix(sm, q))
    T2 = transform_from_gram(gram_matrix(sm, qp))
    np.testing.assert_allclose(T1, T2, atol=1e-10)


def test_round_transform_near_identity(round3):
    sm = rotate_to_pole(round3, (1.0, default_direction(3)))
    devs = [max_norm(transform_at_scale(sm, s)[0] - np.eye(3)) for s in (0.1, 0.05)]
    assert devs[1] < devs[0] / 3
    assert devs[1] < 1e-3


def test_round_chain_coherence(round3):
    sm = rotate_to_pole(round3, (math.pi / 2, default_direction(3)))
    ch = chain_scan(sm, 0.2, 3)
    orders = np.log2(ch.deviations[:-1] / ch.deviations[1:])
    assert np.all(orders >= 1.5)
    assert np.all(ch.growth < 1.01)


def test_football_equator_chain():
    m = football_map(3, 0.9)
    sm = rotate_to_pole(m, (math.pi / 2, default_direction(3)))
    ch = chain_scan(sm, 0.1, 2)
    assert np.all(ch.deviations < 0.01)


def test_smoothed_defects_finite():
    p = make_smoothed(3, 0.9, 0.1, 1e-4, 5e-3)
    m = build_map(first_eigs(p, 3), p)
    sm = rotate_to_pole(m, (0.5 * p.R, default_direction(3)))
    rep = splitting_defect(sm, 0.1)
    assert all(math.isfinite(v) for v in (rep.defect_grad, rep.defect_gram, rep.defect_hess))
    assert rep.epsilon_achieved == max(rep.defect_grad, rep.defect_gram, math.sqrt(rep.defect_hess))


def test_center_lattice_and_pole_ball(round3):
    r = center_lattice(round3.profile, 5)
    np.testing.assert_allclose(r, np.linspace(0, math.pi, 5))
    # the round sphere is homogeneous: a ball at the pole matches one at the equator
    at_pole = splitting_defect(rotate_to_pole(round3, (0.0, default_direction(3))), 0.1)
    at_eq = splitting_defect(rotate_to_pole(round3, (math.pi / 2, default_direction(3))), 0.1)
    assert at_pole.epsilon_achieved == pytest.approx(at_eq.epsilon_achieved, rel=1e-3)


def test_under_resolved_ball(round3):
    with pytest.raises(ValueError):
        ball_quadrature(round3.profile, (1.0, default_direction(3)), 0.1, cells=8)
