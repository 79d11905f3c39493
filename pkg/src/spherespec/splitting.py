"""(n, eps)-splitting defects of the rotated eigenmap and lower-triangular rescalings.

The map F is the first n components of T f~ with T in SO(n+1) sending
f~(x) to the last basis vector.  Ball averages use a product quadrature in
(r, Theta, omega): Theta is the angle to the center's direction and omega
runs over the unit sphere orthogonal to it, so f~ and all its derivatives
are explicit at every node.  Membership in B(x, s) is decided per (r, Theta)
cell, with partial weight for cells cut by the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import roots_jacobi

from .eigenmap import EigenMap, MapUndefinedError, eval_tilde
from .geodesy import closed_form_distance, fast_march

__all__ = [
    "SplitMap",
    "BallQuadrature",
    "SplitReport",
    "TransformChain",
    "rotate_to_pole",
    "ball_quadrature",
    "ball_average",
    "gram_matrix",
    "splitting_defect",
    "transform_at_scale",
    "chain_scan",
    "max_norm",
    "matrix_inequality_check",
    "calibrate_cn",
    "center_lattice",
]


def max_norm(M) -> float:
    """Entrywise maximum absolute value."""
    return float(np.max(np.abs(M)))


# ---------------------------------------------------------------------------
# rotation to the pole

@dataclass(frozen=True)
class SplitMap:
    """F = first n components of T f~, centred at x = (r_c, theta_c)."""

    m: EigenMap
    T: np.ndarray
    r_c: float
    theta_c: np.ndarray

    @property
    def n(self):
        return self.m.n

    @property
    def A(self):
        return self.T[:-1]

    def __call__(self, r, theta):
        return eval_tilde(self.m, r, theta) @ self.A.T


def rotate_to_pole(m: EigenMap, x) -> SplitMap:
    """Rotation T in SO(n+1) with T f~(x) = (0, ..., 0, 1).

    A Householder reflection sends f~(x) to the pole; composing with the
    reflection of the first coordinate (which fixes the pole) makes the
    determinant +1.  When f~(x) is already the pole T is the identity; the
    antipodal case comes out as the rotation by pi in the (e_0, e_n) plane.
    """
    r_c, theta_c = x
    theta_c = np.asarray(theta_c, dtype=float)
    v = eval_tilde(m, np.array([float(r_c)]), theta_c[None, :])[0]
    dim = v.size
    q = np.zeros(dim)
    q[-1] = 1.0
    w = v - q
    if np.linalg.norm(w) < 1e-15:
        T = np.eye(dim)
    else:
        H = np.eye(dim) - 2.0 * np.outer(w, w) / (w @ w)
        S = np.eye(dim)
        S[0, 0] = -1.0
        T = S @ H
    F0 = (T @ v)[:-1]
    if max_norm(F0) > 1e-12:
        raise MapUndefinedError("rotation failed to centre F at x")
    return SplitMap(m, T, float(r_c), theta_c)


# ---------------------------------------------------------------------------
# ball quadrature

def sphere_nodes(m: int, k: int = 32):
    """Points on S^m in R^{m+1} with weights summing to one.

    S^0 is {-1, +1}; S^1 uses k equispaced angles; higher spheres recurse
    through t = cos(angle) with Gauss-Jacobi weights (1 - t^2)^{(m-2)/2}.
    """
    if m == 0:
        return np.array([[-1.0], [1.0]]), np.array([0.5, 0.5])
    if m == 1:
        a = 2.0 * math.pi * (np.arange(k) + 0.5) / k
        return np.column_stack([np.cos(a), np.sin(a)]), np.full(k, 1.0 / k)
    t, wt = roots_jacobi(k // 2, 0.5 * (m - 2), 0.5 * (m - 2))
    wt = wt / wt.sum()
    sub, ws = sphere_nodes(m - 1, k)
    pts = np.concatenate([t[:, None, None].repeat(sub.shape[0], 1),
                          np.sqrt(1.0 - t**2)[:, None, None] * sub[None, :, :]], axis=2)
    return pts.reshape(-1, m + 1), (wt[:, None] * ws[None, :]).ravel()


def _complement_basis(theta_c):
    """Orthonormal basis (columns) of the complement of theta_c in R^n."""
    n = theta_c.size
    q, _ = np.linalg.qr(np.column_stack([theta_c, np.eye(n)]))
    return q[:, 1:n]


@dataclass
class BallQuadrature:
    """Nodes and weights of a geodesic ball, weights summing to one."""

    r: np.ndarray        # (cells,)
    Theta: np.ndarray    # (cells,)
    cell_weight: np.ndarray
    theta: np.ndarray    # (cells, nodes, n)
    omega_weight: np.ndarray
    s: float
    cells_inside: int

    def average(self, values) -> np.ndarray:
        """Average of values shaped (cells, nodes, ...)."""
        values = np.asarray(values)
        w = self.cell_weight[:, None] * self.omega_weight[None, :]
        return np.tensordot(w, values, axes=([0, 1], [0, 1]))


def _ball_distances(profile, r_c, R2, T2, s, fmm_cells):
    exact = closed_form_distance(profile, np.full_like(R2, r_c), R2, T2)
    if not np.any(np.isnan(exact)):
        return exact
    lo, hi = float(R2.min()), float(R2.max())
    tmax = float(T2.max())
    fld = fast_march(profile, r_c, fmm_cells, fmm_cells, seed_radius=s / 8.0,
                     r_range=(min(lo, r_c), max(hi, r_c)), theta_max=tmax if tmax > 0 else math.pi)
    out = fld(R2, T2)
    return np.where(np.isnan(exact), out, exact)


def ball_quadrature(profile, x, s: float, cells: int = 128, omega_nodes: int | None = None,
                    fmm_cells: int = 384, min_cells: int = 100) -> BallQuadrature:
    """Quadrature for the average over B(x, s), x = (r_c, theta_c).

    Membership of each midpoint cell comes from the distance to x: exact
    where an analytic branch exists, otherwise a windowed fast-marching field.
    A cell whose distance range straddles s gets the fractional weight of
    the linear model across the cell.
    """
    r_c, theta_c = x
    r_c = float(r_c)
    theta_c = np.asarray(theta_c, dtype=float)
    n, R = profile.n, profile.R
    if n < 2:
        raise ValueError("splitting defects need n >= 2")
    lo, hi = max(0.0, r_c - s), min(R, r_c + s)
    if lo == 0.0 or hi == R:
        tmax = math.pi
    else:
        phimin = float(np.min(profile.evaluate(np.linspace(lo, hi, 257))[0]))
        tmax = min(math.pi, 1.05 * s / phimin)
    dr = (hi - lo) / cells
    dt = tmax / cells
    rc = lo + dr * (np.arange(cells) + 0.5)
    tc = dt * (np.arange(cells) + 0.5)
    R2, T2 = np.meshgrid(rc, tc, indexing="ij")
    d = _ball_distances(profile, r_c, R2, T2, s, fmm_cells)
    gr, gt = np.gradient(d, dr, dt)
    spread = np.abs(gr) * dr + np.abs(gt) * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(spread > 0.0, np.clip(0.5 + (s - d) / spread, 0.0, 1.0),
                        (d < s).astype(float))
    inside = int(np.count_nonzero(frac > 0.0))
    if inside < min_cells:
        raise ValueError(f"ball under-resolved: {inside} cells < {min_cells}")
    phi = profile.evaluate(rc)[0]
    w = frac * (phi[:, None] ** (n - 1)) * (np.sin(tc)[None, :] ** (n - 2))
    keep = w.ravel() > 0.0
    w = w.ravel()[keep]
    w /= w.sum()
    Rk, Tk = R2.ravel()[keep], T2.ravel()[keep]
    pts, ow = sphere_nodes(n - 2, omega_nodes or (32 if n <= 3 else 12))
    U = _complement_basis(theta_c)
    omega = pts @ U.T  # (nodes, n)
    theta = (np.cos(Tk)[:, None, None] * theta_c[None, None, :]
             + np.sin(Tk)[:, None, None] * omega[None, :, :])
    return BallQuadrature(Rk, Tk, w, theta, ow, float(s), inside)


def ball_average(values_fn, profile, x, s: float, **kw) -> np.ndarray:
    """Average of values_fn(r, theta) over B(x, s); r, theta broadcast as (cells, nodes[, n])."""
    q = ball_quadrature(profile, x, s, **kw)
    vals = values_fn(q.r[:, None], q.theta)
    return q.average(np.broadcast_to(vals, q.theta.shape[:2] + np.shape(vals)[2:]))


# ---------------------------------------------------------------------------
# pointwise first and second derivatives of F

def _unit_radials(m: EigenMap, r):
    """g = w/|w| for (w0, w1) with first and second derivatives."""
    (a0, a1, a2), (b0, b1, b2) = m.radial_parts(r)
    N = np.hypot(a0, b0)
    dN = (a0 * a1 + b0 * b1) / N
    ddN = (a1**2 + b1**2 + a0 * a2 + b0 * b2) / N - dN**2 / N
    out = []
    for w, dw, ddw in ((a0, a1, a2), (b0, b1, b2)):
        g = w / N
        dg = dw / N - w * dN / N**2
        ddg = ddw / N - 2.0 * dw * dN / N**2 - w * ddN / N**2 + 2.0 * w * dN**2 / N**3
        out.append((g, dg, ddg))
    return out


def _pointwise(sm: SplitMap, q: BallQuadrature):
    """Gram matrices (cells, nodes, n, n) and |Hess F|^2 (cells, nodes)."""
    n = sm.n
    A = sm.A
    a0, A1 = A[:, 0], A[:, 1:]
    (g0, dg0, ddg0), (g1, dg1, ddg1) = _unit_radials(sm.m, q.r)
    phi, dphi, _ = sm.m.profile.evaluate(q.r)
    th = q.theta                                   # (c, k, n)
    Y = th @ A1.T                                  # (c, k, n): Y_alpha = t_alpha . theta
    col = lambda v: v[:, None, None]
    grad_r = col(dg0) * a0[None, None, :] + col(dg1) * Y
    tang = col(g1 / phi)
    G = grad_r[..., :, None] * grad_r[..., None, :]
    G = G + tang[..., None] ** 2 * (A1 @ A1.T)[None, None] - (tang * Y)[..., :, None] * (tang * Y)[..., None, :]
    # covariant Hessian of g0 + g1 Y in the orthonormal frame (e_r, e_i / phi)
    hrr = col(ddg0) * a0 + col(ddg1) * Y
    mixed = col((dg1 - g1 * dphi / phi) / phi)
    tt = col(dg0 * dphi / phi) * a0 + col(dg1 * dphi / phi - g1 / phi**2) * Y
    gradY2 = np.sum(A1**2, axis=1)[None, None, :] - Y**2
    hess2 = np.sum(hrr**2 + 2.0 * mixed**2 * gradY2 + (n - 1) * tt**2, axis=-1)
    return G, hess2


def gram_matrix(sm: SplitMap, q: BallQuadrature) -> np.ndarray:
    G, _ = _pointwise(sm, q)
    return q.average(G)


@dataclass
class SplitReport:
    center_r: float
    radius: float
    defect_grad: float
    defect_gram: float
    defect_hess: float
    sup_grad_sq: float
    cells: int

    @property
    def epsilon_achieved(self) -> float:
        """max(defect_grad, defect_gram, sqrt(defect_hess)); the Hessian term is squared in the definition."""
        return max(self.defect_grad, self.defect_gram, math.sqrt(self.defect_hess))

    def payload(self) -> dict:
        return {"center_r": self.center_r, "radius": self.radius, "defect_grad": self.defect_grad,
                "defect_gram": self.defect_gram, "defect_hess": self.defect_hess,
                "sup_grad_sq": self.sup_grad_sq, "epsilon_achieved": self.epsilon_achieved,
                "cells": self.cells}


def splitting_defect(sm: SplitMap, s: float, q: BallQuadrature | None = None, **kw) -> SplitReport:
    """Defects of F on B(x, s).

    defect_grad = max(sup |grad F|^2 - n, 0); defect_gram = max over
    alpha <= beta of the ball average of |<grad F_a, grad F_b> - delta_ab|;
    defect_hess = s^2 times the ball average of |Hess F|^2.
    """
    n = sm.n
    q = q or ball_quadrature(sm.m.profile, (sm.r_c, sm.theta_c), s, **kw)
    G, hess2 = _pointwise(sm, q)
    trace = np.trace(G, axis1=-2, axis2=-1)
    sup = float(np.max(trace))
    dev = q.average(np.abs(G - np.eye(n)))
    iu = np.triu_indices(n)
    return SplitReport(sm.r_c, float(s), max(sup - n, 0.0), float(np.max(dev[iu])),
                       float(s**2 * q.average(hess2)), sup, q.cells_inside)


# ---------------------------------------------------------------------------
# lower-triangular transforms

def transform_from_gram(G, tol: float = 1e-10) -> np.ndarray:
    """T = L^{-1} for G = L L^T; raises if G is not positive definite."""
    G = 0.5 * (np.asarray(G, dtype=float) + np.asarray(G, dtype=float).T)
    try:
        L = cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Gram matrix is not positive definite (degenerate splitting)") from exc
    T = solve_triangular(L, np.eye(G.shape[0]), lower=True)
    check = T @ G @ T.T
    if max_norm(check - np.eye(G.shape[0])) > tol:
        raise ArithmeticError("Gram identity not reproduced by the Cholesky transform")
    return T


def transform_at_scale(sm: SplitMap, s: float, **kw):
    """(T_s, G_s): T_s lower triangular, positive diagonal, T_s G_s T_s^T = I."""
    q = ball_quadrature(sm.m.profile, (sm.r_c, sm.theta_c), s, **kw)
    G = gram_matrix(sm, q)
    return transform_from_gram(G), G


@dataclass
class TransformChain:
    scales: np.ndarray
    transforms: list
    grams: list
    deviations: np.ndarray = field(default=None)
    growth: np.ndarray = field(default=None)
    envelope_exponent: float = float("nan")

    def payload(self) -> dict:
        return {"scales": self.scales.tolist(), "deviations": self.deviations.tolist(),
                "growth": self.growth.tolist(), "envelope_exponent": self.envelope_exponent,
                "transforms": [t.tolist() for t in self.transforms]}


def chain_scan(sm: SplitMap, r: float, depth: int, **kw) -> TransformChain:
    """T_{s_j} at s_j = r 2^-j for j = 0..depth and |T_{s_j} T_{s_{j+1}}^{-1} - I|.

    ``growth`` is max(|T_s^{-1} T_r|, |T_r T_s^{-1}|) against the top scale;
    ``envelope_exponent`` is the fitted slope of log(growth) against
    log(r/s) (constants are not asserted).
    """
    scales = r * 0.5 ** np.arange(depth + 1)
    Ts, Gs = [], []
    for s in scales:
        T, G = transform_at_scale(sm, float(s), **kw)
        Ts.append(T)
        Gs.append(G)
    dev = np.array([max_norm(Ts[j + 1] @ np.linalg.inv(Ts[j]) - np.eye(sm.n)) for j in range(depth)])
    top = Ts[0]
    growth = np.array([max(max_norm(np.linalg.inv(T) @ top), max_norm(top @ np.linalg.inv(T))) for T in Ts])
    expo = float("nan")
    if depth >= 2 and np.all(growth > 0):
        expo = float(np.polyfit(np.log(r / scales), np.log(growth), 1)[0])
    return TransformChain(scales, Ts, Gs, dev, growth, expo)


def matrix_inequality_check(trials: int = 100_000, n: int = 3, seed: int = 0, chunk: int = 20_000) -> dict:
    """|AB - I| <= |A - I| + |B - I| + n |A - I| |B - I| in the entrywise-max norm."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    I = np.eye(n)
    worst = math.inf
    violations = 0
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        A = rng.uniform(-2.0, 2.0, (k, n, n))
        B = rng.uniform(-2.0, 2.0, (k, n, n))
        lhs = np.max(np.abs(A @ B - I), axis=(1, 2))
        a = np.max(np.abs(A - I), axis=(1, 2))
        b = np.max(np.abs(B - I), axis=(1, 2))
        slack = a + b + n * a * b - lhs
        violations += int(np.count_nonzero(slack < 0.0))
        worst = min(worst, float(slack.min()))
        done += k
    return {"n": n, "trials": trials, "violations": violations, "worst_slack": worst,
            "passed": violations == 0}


# ---------------------------------------------------------------------------
# calibration and center lattices

def center_lattice(profile, count: int = 9):
    """Radii r_k = R k/(count-1), poles included."""
    return np.linspace(0.0, profile.R, count)


def default_direction(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def calibrate_cn(m: EigenMap, eps: float = 0.1, share: float = 0.25, lo: float = 0.5, hi: float = 10.0,
                 iters: int = 20, **kw) -> float:
    """Largest c with round-sphere epsilon_achieved at r = c eps at most share * eps.

    ``m`` should be the round-sphere map; the center is the equator point,
    which every center matches by homogeneity.
    """
    sm = rotate_to_pole(m, (0.5 * m.profile.R, default_direction(m.n)))

    def ok(c):
        return splitting_defect(sm, c * eps, **kw).epsilon_achieved <= share * eps

    if not ok(lo):
        raise ValueError("calibration bracket too large at its lower end")
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
