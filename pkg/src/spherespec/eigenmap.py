"""The eigenmap f = (A u0, B u1 theta) and its normalization f/|f|.

On a warped sphere the first n+1 eigenfunctions separate as
f_1 = A u0(r) and f_{1+j} = B u1(r) theta_j, where theta_j are the ambient
coordinates of S^{n-1}.  Writing w = (A u0, B u1) the normalized map is

    f~(r, theta) = (w0, w1 theta) / |w|,

so every pointwise quantity reduces to one radial variable.  In the
orthonormal frame {d_r, phi^{-1} d_theta} the differential of f~ has one
radial singular value and an (n-1)-fold tangential one:

    sigma_r = |w0 w1' - w1 w0'| / |w|^2,     sigma_t = |w1| / (phi |w|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import beta as beta_fn
from scipy.special import roots_jacobi

from .profiles import WarpProfile, make_football, _segments
from .radial import ClosedFormRadial
from .spectrum import SpectrumResult, football_alpha, football_lambda

__all__ = [
    "EigenMap",
    "MapDiagnostics",
    "MapUndefinedError",
    "build_map",
    "football_map",
    "eval_f",
    "eval_tilde",
    "norm_deviation",
    "singular_values",
    "gradient_sup",
    "radial_jacobian",
    "radial_jacobian_closed_form",
    "radial_jacobian_fd",
    "min_radial_jacobian",
    "phi_lemma_check",
    "inner_product_vs_distance",
    "map_diagnostics",
    "write_diagnostics",
]

MIN_NORM = 1e-6


class MapUndefinedError(ValueError):
    """|f| fell below the well-definedness threshold."""


@dataclass(frozen=True)
class EigenMap:
    """Separated form of the eigenmap on a warped profile."""

    n: int
    A: float
    B: float
    u0: object
    u1: object
    profile: WarpProfile
    lam0: float = float("nan")
    lam1: float = float("nan")

    def radial_parts(self, r):
        """w0, w1 and their first two derivatives at radii r."""
        a0, a1, a2 = self.u0.values(r)
        b0, b1, b2 = self.u1.values(r)
        A, B = self.A, self.B
        return (A * a0, A * a1, A * a2), (B * b0, B * b1, B * b2)

    def scan_radii(self, margin: int = 2, depth: int = 40) -> np.ndarray:
        """Interior sample radii: the profile grid plus geometric layers at the poles.

        The layers resolve the pole regions down to 1e-4 of the pole branch
        (or 1e-9 absolute), where radial Jacobians degenerate.
        """
        g = self.profile.grid
        inner = g[margin:-margin]
        h = inner[0]
        floor = max(1e-4 * self.profile.pole_branch[2], 1e-9)
        layers = h * 0.5 ** np.arange(1, depth + 1)
        layers = layers[layers >= floor]
        R = self.profile.R
        return np.unique(np.concatenate([layers, inner, R - layers]))


def _check_norm(m: EigenMap, r):
    (w0, _, _), (w1, _, _) = m.radial_parts(r)
    norm = np.hypot(w0, w1)
    if np.min(norm) < MIN_NORM:
        raise MapUndefinedError("|f| below threshold; normalized eigenmap undefined")
    return norm


def build_map(spectrum: SpectrumResult, profile: WarpProfile) -> EigenMap:
    """Assemble f from the k = 0 and k = 1 radial modes of a normalized spectrum."""
    if not spectrum.normalization:
        from .spectrum import normalize_eigenfunctions

        normalize_eigenfunctions(spectrum, profile)
    m0, m1 = spectrum.first_radial, spectrum.harmonic_radial
    u0 = m0.radial if m0.radial is not None else _spline_radial(m0, profile)
    u1 = m1.radial if m1.radial is not None else _spline_radial(m1, profile)
    em = EigenMap(spectrum.n, spectrum.normalization["A"], spectrum.normalization["B"],
                  u0, u1, profile, m0.lam, m1.lam)
    _check_norm(em, np.concatenate([[0.0], em.scan_radii(), [profile.R]]))
    return em


def _spline_radial(mode, profile):
    """Cubic interpolant of cell-centred samples, used when no shooting refinement exists."""
    from scipy.interpolate import CubicSpline

    x = np.concatenate([[0.0], mode.centers, [profile.R]])
    end0 = mode.u[0] if mode.k == 0 else 0.0
    end1 = mode.u[-1] if mode.k == 0 else 0.0
    cs = CubicSpline(x, np.concatenate([[end0], mode.u, [end1]]))

    def fn(r):
        return cs(r), cs(r, 1), cs(r, 2)

    return ClosedFormRadial(fn, mode.lam)


def football_map(n: int, c: float, grid_size: int = 2048) -> EigenMap:
    """Closed-form eigenmap of the football: u0 = cos r, u1 = sin^{1+alpha} r."""
    prof = make_football(n, c, grid_size)
    alpha = football_alpha(n, c)
    p = 1.0 + alpha

    def u0(r):
        return np.cos(r), -np.sin(r), -np.cos(r)

    def u1(r):
        s, co = np.sin(r), np.cos(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = p * s**alpha * co
            d2 = p * alpha * s ** (alpha - 1.0) * co**2 - p * s**p
        d2 = np.where(s > 0.0, d2, 0.0 if alpha == 0.0 else -np.inf)
        return s**p, d1, d2

    # volume averages through Beta integrals: int_0^pi sin^q = B((q+1)/2, 1/2)
    def sin_int(q):
        return beta_fn(0.5 * (q + 1.0), 0.5)

    A = 1.0
    B = math.sqrt(n * sin_int(n - 1) / ((n + 1) * sin_int(n + 1 + 2 * alpha)))
    return EigenMap(n, A, B, ClosedFormRadial(u0, float(n)),
                    ClosedFormRadial(u1, football_lambda(n, c), mu=n - 1.0), prof,
                    float(n), football_lambda(n, c))


def _theta(theta, n):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != n:
        raise ValueError(f"angular part must have {n} components")
    return theta


def eval_f(m: EigenMap, r, theta) -> np.ndarray:
    """f at points (r, theta); theta has shape (..., n) with unit rows."""
    theta = _theta(theta, m.n)
    r = np.asarray(r, dtype=float)
    (w0, _, _), (w1, _, _) = m.radial_parts(r.ravel())
    w0 = w0.reshape(r.shape)
    w1 = w1.reshape(r.shape)
    return np.concatenate([w0[..., None], w1[..., None] * theta], axis=-1)


def eval_tilde(m: EigenMap, r, theta) -> np.ndarray:
    """f / |f|: a unit vector in R^{n+1} for each point."""
    f = eval_f(m, r, theta)
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    if np.min(norm) < MIN_NORM:
        raise MapUndefinedError("|f| below threshold; normalized eigenmap undefined")
    return f / norm


def norm_deviation(m: EigenMap, radii=None) -> float:
    """sup | |f|^2 - 1 | over the scan radii (poles included)."""
    if radii is None:
        radii = np.concatenate([[0.0], m.scan_radii(), [m.profile.R]])
    (w0, _, _), (w1, _, _) = m.radial_parts(radii)
    return float(np.max(np.abs(w0**2 + w1**2 - 1.0)))


def singular_values(m: EigenMap, r):
    """(sigma_r, sigma_t) of df~ in the orthonormal frame at radii r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    (w0, d0, _), (w1, d1, _) = m.radial_parts(r)
    nsq = w0**2 + w1**2
    phi = m.profile.evaluate(r)[0]
    sigma_r = np.abs(w0 * d1 - w1 * d0) / nsq
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_t = np.abs(w1) / (phi * np.sqrt(nsq))
    return sigma_r, sigma_t


def gradient_sup(m: EigenMap, radii=None) -> float:
    """Largest singular value of df~ over interior radii."""
    if radii is None:
        radii = m.scan_radii()
    sr, st = singular_values(m, radii)
    return float(max(sr.max(), st.max()))


def radial_jacobian(m: EigenMap, r, theta=None):
    """|df~(d_r)| from the separated derivatives.

    When ``theta`` is given the full vector d/dr f~(r, theta) is formed and
    its norm returned; by symmetry it does not depend on theta.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if theta is None:
        return singular_values(m, r)[0]
    theta = _theta(theta, m.n)
    (w0, d0, _), (w1, d1, _) = m.radial_parts(r)
    norm = np.hypot(w0, w1)
    dot = w0 * d0 + w1 * d1
    v0 = d0 / norm - dot * w0 / norm**3
    v1 = d1 / norm - dot * w1 / norm**3
    vec = np.concatenate([v0[:, None], v1[:, None] * theta], axis=-1)
    return np.linalg.norm(vec, axis=-1)


def radial_jacobian_closed_form(n: int, c: float, A: float, B: float, r, theta=None):
    """Norm of the explicit football formula for d f~ (d_r)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if theta is None:
        theta = np.zeros(n)
        theta[0] = 1.0
    alpha = football_alpha(n, c)
    s, co = np.sin(r), np.cos(r)
    den = np.sqrt(A**2 * co**2 + B**2 * s ** (2 + 2 * alpha))
    first = np.concatenate([(-A * s)[:, None],
                            (B * (1 + alpha) * s**alpha * co)[:, None] * theta], axis=-1) / den[:, None]
    coef = s * co * (A**2 - B**2 * (1 + alpha) * s ** (2 * alpha)) / den**3
    second = coef[:, None] * np.concatenate([(A * co)[:, None],
                                             (B * s ** (1 + alpha))[:, None] * theta], axis=-1)
    return np.linalg.norm(first + second, axis=-1)


def radial_jacobian_fd(m: EigenMap, r, h: float = 1e-5, theta=None):
    """Centred difference of f~ along a meridian."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if theta is None:
        theta = np.zeros(m.n)
        theta[0] = 1.0
    th = np.broadcast_to(theta, r.shape + (m.n,))
    diff = eval_tilde(m, r + h, th) - eval_tilde(m, r - h, th)
    return np.linalg.norm(diff, axis=-1) / (2.0 * h)


def min_radial_jacobian(m: EigenMap, radii=None):
    """(min |df~(d_r)|, argmin r) over interior radii."""
    if radii is None:
        radii = m.scan_radii()
    sr = singular_values(m, radii)[0]
    i = int(np.argmin(sr))
    return float(sr[i]), float(radii[i])


def _angular_nodes(n, points):
    """Nodes/weights for t = cos(angle) on S^{n-1}, density ~ (1 - t^2)^{(n-3)/2}."""
    a = 0.5 * (n - 3)
    x, w = roots_jacobi(points, a, a)
    return x, w / w.sum()


def _radial_average(profile, fn, points=4097):
    num = den = 0.0
    for lo, hi in _segments(profile):
        r = np.linspace(lo, hi, points)
        wt = profile.evaluate(r)[0] ** (profile.n - 1)
        num += simpson(fn(r) * wt, x=r)
        den += simpson(wt, x=r)
    return num / den


def phi_lemma_check(m: EigenMap, trials: int = 32, p: float = 2.0, seed: int = 0,
                    tol: float = 0.05, radii=None) -> dict:
    """Sup and L^p mean of |phi^2 + |grad phi|^2 - 1| for random unit combinations.

    For phi = a1 w0 + w1 (b . theta) with |(a1, b)| = 1 and t = b . theta,
    Q = phi^2 + |grad phi|^2 = (a1 w0 + w1 t)^2 + (a1 w0' + w1' t)^2
    + (w1/phi)^2 (|b|^2 - t^2), a quadratic in t on [-|b|, |b|].
    """
    if trials < 1 or p < 1:
        raise ValueError("need trials >= 1 and p >= 1")
    rng = np.random.default_rng(seed)
    if radii is None:
        radii = m.scan_radii()
    prof = m.profile
    nodes, weights = _angular_nodes(m.n, 48)

    def q_of(r, a1, b, t):
        (w0, d0, _), (w1, d1, _) = m.radial_parts(r)
        phi = prof.evaluate(r)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tang = np.where(phi > 0, (w1 / phi) ** 2, 0.0)
        return ((a1 * w0[:, None] + w1[:, None] * t) ** 2
                + (a1 * d0[:, None] + d1[:, None] * t) ** 2
                + tang[:, None] * (b * b - t * t))

    sup_all = 0.0
    lp_all = 0.0
    for _ in range(trials):
        v = rng.normal(size=m.n + 1)
        v /= np.linalg.norm(v)
        a1, b = v[0], float(np.linalg.norm(v[1:]))
        (w0, d0, _), (w1, d1, _) = m.radial_parts(radii)
        phi = prof.evaluate(radii)[0]
        tang = (w1 / phi) ** 2
        # Q(t) = c2 t^2 + c1 t + c0
        c2 = w1**2 + d1**2 - tang
        c1 = 2.0 * a1 * (w0 * w1 + d0 * d1)
        c0 = a1**2 * (w0**2 + d0**2) + tang * b * b
        cand = [c2 * b * b + c1 * b + c0, c2 * b * b - c1 * b + c0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tv = np.where(c2 < 0, -c1 / (2 * c2), 0.0)
            inside = (c2 < 0) & (np.abs(tv) <= b)
            cand.append(np.where(inside, c0 - c1 * c1 / (4 * c2), -np.inf))
        sup_all = max(sup_all, float(np.max(cand)))
        t = b * nodes

        def integrand(r):
            return np.abs(q_of(r, a1, b, t) - 1.0) ** p @ weights

        lp_all = max(lp_all, float(_radial_average(prof, integrand, 1025) ** (1.0 / p)))
    return {"sup": sup_all, "lp_mean_dev": lp_all, "p": p, "trials": trials,
            "tol": tol, "passed": bool(sup_all <= 1.0 + tol)}


def inner_product_vs_distance(m: EigenMap, pairs, distances) -> dict:
    """max |f~(x).f~(y) - cos d(x,y)| over supplied pairs.

    ``pairs`` is a tuple (r1, theta1, r2, theta2) of arrays.
    """
    r1, t1, r2, t2 = pairs
    fx = eval_tilde(m, r1, t1)
    fy = eval_tilde(m, r2, t2)
    dev = np.abs(np.sum(fx * fy, axis=-1) - np.cos(np.asarray(distances)))
    i = int(np.argmax(dev))
    return {"max_dev": float(dev[i]), "argmax": i, "count": int(dev.size)}


@dataclass(frozen=True)
class MapDiagnostics:
    sup_norm_dev: float
    sup_grad: float
    min_radial_jac: float
    argmin_r: float
    phi_lemma_report: dict

    def payload(self) -> dict:
        return {"sup_norm_dev": self.sup_norm_dev, "sup_grad": self.sup_grad,
                "min_radial_jac": self.min_radial_jac, "argmin_r": self.argmin_r}


def map_diagnostics(m: EigenMap, trials: int = 16, seed: int = 0) -> MapDiagnostics:
    radii = m.scan_radii()
    jmin, where = min_radial_jacobian(m, radii)
    return MapDiagnostics(norm_deviation(m), gradient_sup(m, radii), jmin, where,
                          phi_lemma_check(m, trials=trials, seed=seed, radii=radii))


def write_diagnostics(m: EigenMap, diag: MapDiagnostics, json_path, csv_path) -> None:
    from .io import write_csv, write_json

    payload = diag.payload()
    payload["phi_lemma"] = diag.phi_lemma_report
    write_json(json_path, payload)
    r = m.scan_radii()
    write_csv(csv_path, ["r", "jac"], np.column_stack([r, radial_jacobian(m, r)]))
