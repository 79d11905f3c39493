"""Radial eigenfunctions by two-sided shooting.

The channel equation is integrated as a first-order system in
(u, v = phi^{n-1} u').  Near each pole every profile here has the form
phi = (s/w) sin(w d), d the distance to the pole, and on that branch the
regular solution is known exactly:

    u = sin^beta(w d) 2F1(A, B; beta + n/2; sin^2(w d / 2)),

with beta (beta + n - 2) = mu / s^2 and A, B fixed by lam / w^2.  Shooting
starts from this solution at the end of the pole branch (or the midpoint,
whichever comes first), so numerical integration never approaches the
singular endpoint; on the round sphere and the football no integration is
needed at all.  The eigenvalue is the
root of the normalized Wronskian of the two sides at the midpoint, bracketed
around the finite-volume estimate.  The converged solution is kept as a
dense interpolant plus the exact pole pieces.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import brentq
from scipy.special import hyp2f1

from .profiles import WarpProfile, _segments

__all__ = ["RadialFunction", "ClosedFormRadial", "pole_solution", "refine_mode", "shoot_eigenpair"]

RTOL = 1e-13


def pole_solution(n, mu, lam, slope, omega, d):
    """Regular solution on the pole branch phi = (slope/omega) sin(omega d).

    Returns (u, du/dd) at distances d from the pole.
    """
    d = np.asarray(d, dtype=float)
    m = mu / slope**2
    beta = 0.5 * (-(n - 2) + math.sqrt((n - 2) ** 2 + 4.0 * m))
    nu = lam / omega**2
    C = beta + 0.5 * n
    S = 2.0 * beta + n - 1.0
    P = beta * (beta + n - 1.0) - nu
    disc = math.sqrt(S * S - 4.0 * P)
    A, B = 0.5 * (S + disc), 0.5 * (S - disc)
    x = omega * d
    sx, cx = np.sin(x), np.cos(x)
    z = np.sin(0.5 * x) ** 2
    F = hyp2f1(A, B, C, z)
    dF = A * B / C * hyp2f1(A + 1.0, B + 1.0, C + 1.0, z) * 0.5 * sx
    if beta == 0.0:
        u = F
        du = dF
    else:
        u = sx**beta * F
        with np.errstate(divide="ignore", invalid="ignore"):
            du = beta * sx ** (beta - 1.0) * cx * F + sx**beta * dF
        if beta > 1.0:
            du = np.where(sx == 0.0, 0.0, du)
    return u, omega * du


class _Mirrored:
    """Dense solution in d = R - r viewed as a function of r (v changes sign)."""

    def __init__(self, sol, R):
        self._sol = sol
        self._R = R

    def __call__(self, r):
        y = self._sol(self._R - np.asarray(r, dtype=float))
        return np.array([y[0], -y[1]])


def is_mirror_symmetric(profile: WarpProfile, tol: float = 1e-12) -> bool:
    g = profile.grid
    return bool(np.max(np.abs(profile.evaluate(g)[0] - profile.evaluate(profile.R - g)[0])) <= tol)


class _Side:
    """Integration plan from one pole towards the midpoint.

    On mirror-symmetric profiles the right side is integrated in d = R - r,
    which keeps the small distances to the far pole exactly representable;
    in r itself they would lose most of their digits near r = R.
    """

    def __init__(self, profile: WarpProfile, mu: float, from_right: bool, mid: float,
                 symmetric: bool | None = None):
        self.profile = profile
        self.n = profile.n
        self.mu = mu
        self.slope, self.omega, extent = profile.pole_branch
        self.d0 = min(extent, 0.5 * profile.R)
        if symmetric is None:
            symmetric = is_mirror_symmetric(profile)
        self.mirrored = from_right and symmetric
        self.sign = -1.0 if (from_right and not self.mirrored) else 1.0
        if self.mirrored:
            mid = profile.R - mid
            self.start = self.d0
            from_right = False
        else:
            self.start = profile.R - self.d0 if from_right else self.d0
        inner = [b for b in profile.breakpoints if min(self.start, mid) < b < max(self.start, mid)]
        self.knots = [self.start, *sorted(inner, reverse=from_right), mid]

    def initial(self, lam):
        u, du = pole_solution(self.n, self.mu, lam, self.slope, self.omega, self.d0)
        phi0 = self.profile.phi_at(self.start)
        return np.array([float(u), phi0 ** (self.n - 1) * float(du) * self.sign])

    def rhs(self, lam):
        n, mu, phi_at = self.n, self.mu, self.profile.phi_at

        def f(r, y):
            phi = phi_at(r)
            p = phi ** (n - 1)
            return [y[1] / p, (mu * phi ** (n - 3) - lam * p) * y[0]]

        return f

    def run(self, lam, dense=False):
        """State (u, phi^{n-1} du/dr) at the midpoint, plus dense pieces in r."""
        f = self.rhs(lam)
        y = self.initial(lam)
        pieces = []
        R = self.profile.R
        for a, b in zip(self.knots[:-1], self.knots[1:]):
            if a == b:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                # the initial step heuristic divides by a zero derivative at u = 0 starts
                sol = solve_ivp(f, (a, b), y, method="DOP853", rtol=RTOL, atol=1e-300,
                                dense_output=dense)
            if not sol.success:
                raise RuntimeError(f"radial integration failed: {sol.message}")
            y = sol.y[:, -1]
            if dense:
                if self.mirrored:
                    pieces.append((R - max(a, b), R - min(a, b), _Mirrored(sol.sol, R)))
                else:
                    pieces.append((min(a, b), max(a, b), sol.sol))
        if self.mirrored:
            y = np.array([y[0], -y[1]])
        return y, pieces


def _wronskian(left, right):
    nl = math.hypot(left[0], left[1])
    nr = math.hypot(right[0], right[1])
    return (left[0] * right[1] - right[0] * left[1]) / (nl * nr)


def count_sign_changes(u):
    u = np.asarray(u)
    s = np.sign(u[np.abs(u) > 1e-8 * np.abs(u).max()])
    return int(np.count_nonzero(s[1:] != s[:-1]))


class RadialFunction:
    """Radial eigenfunction on [0, R] with values, u' and u''.

    Calling the object returns u(r); ``values`` returns (u, u', u''), the
    last from the ODE itself.  Normalized to unit volume-averaged square and
    positive near r = 0.
    """

    def __init__(self, profile, mu, lam, left, right, scale_right, d0, scale=1.0):
        self.profile = profile
        self.n = profile.n
        self.mu = mu
        self.lam = lam
        self._left = left
        self._right = right
        self._sr = scale_right
        self.d0 = d0
        self._scale = scale
        slope, omega, _ = profile.pole_branch
        self._pole = (slope, omega)
        # the integrated pieces start from the exact pole solutions with unit coefficient
        self._cl = scale
        self._cr = scale * scale_right

    def with_scale(self, scale):
        return RadialFunction(self.profile, self.mu, self.lam, self._left, self._right,
                              self._sr, self.d0, scale)

    def _interior(self, r):
        u = np.empty_like(r)
        v = np.empty_like(r)
        for pieces, fac in ((self._left, 1.0), (self._right, self._sr)):
            for lo, hi, sol in pieces:
                m = (r >= lo) & (r <= hi)
                if np.any(m):
                    y = sol(r[m])
                    u[m] = fac * y[0]
                    v[m] = fac * y[1]
        return u * self._scale, v * self._scale

    def values(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        R, d0, n = self.profile.R, self.d0, self.n
        u = np.empty_like(r)
        du = np.empty_like(r)
        phi, dphi, _ = self.profile.evaluate(r)
        core = (r > d0) & (r < R - d0)
        if np.any(core):
            uc, vc = self._interior(r[core])
            u[core] = uc
            du[core] = vc / phi[core] ** (n - 1)
        slope, omega = self._pole
        for mask, dist, coef, sgn in ((r <= d0, r, self._cl, 1.0),
                                      (r >= R - d0, R - r, self._cr, -1.0)):
            if np.any(mask):
                pu, pdu = pole_solution(n, self.mu, self.lam, slope, omega, dist[mask])
                u[mask] = coef * pu
                du[mask] = sgn * coef * pdu
        with np.errstate(divide="ignore", invalid="ignore"):
            ddu = -(n - 1) * dphi / phi * du + (self.mu / phi**2 - self.lam) * u
        at_pole = phi <= 0.0
        if np.any(at_pole):
            # pole limits: u'' = -lam u / n for mu = 0; the d^beta branch gives 0 for beta > 2
            ddu[at_pole] = -self.lam * u[at_pole] / n if self.mu == 0.0 else 0.0
        return u, du, ddu

    def __call__(self, r):
        return self.values(r)[0]

    def derivative(self, r):
        return self.values(r)[1]

    def second_derivative(self, r):
        return self.values(r)[2]


class ClosedFormRadial:
    """Radial function given in closed form, used for round and football oracles.

    ``fn(r)`` must return the triple (u, u', u'').
    """

    def __init__(self, fn, lam, mu=0.0):
        self._fn = fn
        self.lam = lam
        self.mu = mu

    def values(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self._fn(r)

    def __call__(self, r):
        return self.values(r)[0]

    def derivative(self, r):
        return self.values(r)[1]

    def second_derivative(self, r):
        return self.values(r)[2]


def radial_mass(profile, fn, points=8193):
    """int fn(r) phi^{n-1} dr by Simpson between branch joints."""
    total = 0.0
    for lo, hi in _segments(profile):
        r = np.linspace(lo, hi, points)
        total += simpson(fn(r) * profile.evaluate(r)[0] ** (profile.n - 1), x=r)
    return total


def shoot_eigenpair(profile: WarpProfile, mu: float, lam_guess: float, nodes: int,
                    rel_bracket: float = 1e-7) -> RadialFunction:
    """Polish an eigenpair of the channel with angular eigenvalue ``mu``.

    ``nodes`` is the expected number of interior sign changes; it guards
    against converging to a neighbouring eigenvalue.
    """
    mid = 0.5 * profile.R
    left = _Side(profile, mu, False, mid)
    right = _Side(profile, mu, True, mid)

    def w(lam):
        return _wronskian(left.run(lam)[0], right.run(lam)[0])

    delta = rel_bracket * max(abs(lam_guess), 1.0)
    lo, hi = lam_guess - delta, lam_guess + delta
    wlo, whi = w(lo), w(hi)
    tries = 0
    while wlo * whi > 0.0:
        tries += 1
        if tries > 20:
            raise RuntimeError("could not bracket the eigenvalue by shooting")
        delta *= 8.0
        lo, hi = lam_guess - delta, lam_guess + delta
        wlo, whi = w(lo), w(hi)
    lam = brentq(w, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    yl, pl = left.run(lam, dense=True)
    yr, pr = right.run(lam, dense=True)
    # match on whichever component is better conditioned at the midpoint
    pm = profile.phi_at(mid) ** (profile.n - 1)
    if abs(yr[0]) * pm >= abs(yr[1]):
        sr = yl[0] / yr[0]
    else:
        sr = yl[1] / yr[1]
    raw = RadialFunction(profile, mu, lam, pl, pr, sr, left.d0)
    if raw(np.array([min(1e-3, 0.5 * left.d0)]))[0] < 0.0:
        raw = raw.with_scale(-1.0)
    norm = math.sqrt(radial_mass(profile, lambda r: raw(r) ** 2) / radial_mass(profile, np.ones_like))
    fn = raw.with_scale(raw._scale / norm)
    probe = np.linspace(0.0, profile.R, 4001)[1:-1]
    got = count_sign_changes(fn(probe))
    if got != nodes:
        raise RuntimeError(f"shooting converged to a mode with {got} nodes, expected {nodes}")
    return fn


def refine_mode(profile: WarpProfile, mode) -> RadialFunction:
    """Shooting refinement of a finite-volume mode; node count from the grid vector."""
    from .spectrum import sphere_mode_eigenvalue

    mu = float(sphere_mode_eigenvalue(profile.n, mode.k))
    return shoot_eigenpair(profile, mu, mode.lam, count_sign_changes(mode.u))
