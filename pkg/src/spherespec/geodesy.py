"""Geodesic distance on a warped sphere through its 2-D reduction.

A pair of points (r1, theta1), (r2, theta2) only matters through
(r1, r2, Theta) with Theta the angle between theta1 and theta2; the distance
is then the distance on the surface dr^2 + phi(r)^2 dTheta^2, Theta in
[0, pi].  Fields are computed by first-order fast marching on a uniform
(r, Theta) lattice where each pole row is a single node.

Exact values are used where they are available:

* Theta = 0: meridians minimize, d = |r1 - r2|;
* football (including round): a lune of opening c*Theta unfolds into the
  round sphere, d = arccos(cos r1 cos r2 + sin r1 sin r2 cos(c Theta));
* both points inside the same smooth round cap of a smoothed profile: the
  cap is convex and any path leaving it is longer, so the cap's own
  spherical law of cosines applies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .profiles import WarpProfile

__all__ = [
    "ReducedPoint",
    "DistanceField",
    "DistanceEngine",
    "reduce_pair",
    "unit_angle",
    "fast_march",
    "closed_form_distance",
    "distance",
    "sphere_chordal_distance",
    "round_field_error",
    "round_oracle_report",
    "fitted_order",
    "write_field",
]


@dataclass(frozen=True)
class ReducedPoint:
    r: float
    Theta: float = 0.0


def unit_angle(u, v):
    """Angle between unit vectors along the last axis, stable near 0 and pi."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.linalg.norm(u - v, axis=-1)
    b = np.linalg.norm(u + v, axis=-1)
    return 2.0 * np.arctan2(a, b)


def _check_unit(x, tol, what):
    nrm = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError(f"{what} must be unit vectors")


def reduce_pair(x, y, tol: float = 1e-8):
    """(r1, r2, Theta) for points given as (r, theta) with theta on S^{n-1}."""
    (r1, t1), (r2, t2) = x, y
    _check_unit(t1, tol, "angular parts")
    _check_unit(t2, tol, "angular parts")
    return np.asarray(r1, dtype=float), np.asarray(r2, dtype=float), unit_angle(t1, t2)


def sphere_chordal_distance(u, v, tol: float = 1e-8):
    """Round-sphere (great-circle) distance between unit vectors in R^{n+1}."""
    _check_unit(u, tol, "inputs")
    _check_unit(v, tol, "inputs")
    return unit_angle(u, v)


# ---------------------------------------------------------------------------
# fast marching kernel

@numba.njit(cache=True)
def _heap_push(hv, hi, hj, size, v, i, j):
    k = size
    hv[k] = v
    hi[k] = i
    hj[k] = j
    while k > 0:
        p = (k - 1) // 2
        if hv[p] <= hv[k]:
            break
        hv[p], hv[k] = hv[k], hv[p]
        hi[p], hi[k] = hi[k], hi[p]
        hj[p], hj[k] = hj[k], hj[p]
        k = p
    return size + 1


@numba.njit(cache=True)
def _heap_pop(hv, hi, hj, size):
    v, i, j = hv[0], hi[0], hj[0]
    size -= 1
    hv[0], hi[0], hj[0] = hv[size], hi[size], hj[size]
    k = 0
    while True:
        left = 2 * k + 1
        if left >= size:
            break
        c = left
        if left + 1 < size and hv[left + 1] < hv[left]:
            c = left + 1
        if hv[k] <= hv[c]:
            break
        hv[c], hv[k] = hv[k], hv[c]
        hi[c], hi[k] = hi[k], hi[c]
        hj[c], hj[k] = hj[k], hj[c]
        k = c
    return v, i, j, size


@numba.njit(cache=True)
def _local_update(d, state, phi, i, j, hr, ht, nr, nt, pole_lo, pole_hi, wrap):
    INF = np.inf
    a = INF
    for ii in (i - 1, i + 1):
        if 0 <= ii <= nr:
            jj = 0 if ((ii == 0 and pole_lo) or (ii == nr and pole_hi)) else j
            if state[ii, jj] == 2 and d[ii, jj] < a:
                a = d[ii, jj]
    b = INF
    for jj in (j - 1, j + 1):
        if jj < 0:
            jj = 1
        elif jj > nt:
            if not wrap:
                continue
            jj = nt - 1
        if state[i, jj] == 2 and d[i, jj] < b:
            b = d[i, jj]
    hth = phi[i] * ht
    best = min(a + hr, b + hth)
    if a < INF and b < INF:
        h1, h2 = hr * hr, hth * hth
        disc = h1 + h2 - (a - b) * (a - b)
        if disc >= 0.0:
            cand = (a * h2 + b * h1 + hr * hth * math.sqrt(disc)) / (h1 + h2)
            if cand >= max(a, b) and cand < best:
                best = cand
    return best


@numba.njit(cache=True)
def _march(d, state, phi, hr, ht, order, pole_lo, pole_hi, wrap):
    """Fast marching from the accepted/trial nodes already marked in ``state``.

    When ``pole_lo`` (``pole_hi``) is set, row 0 (row nr) is a pole: only
    column 0 is live there and it neighbours every node of the adjacent
    row.  ``wrap`` reflects the last column (Theta = pi); otherwise that
    edge is an open window boundary.  ``order`` receives the acceptance
    sequence as flat indices.
    """
    nr = d.shape[0] - 1
    nt = d.shape[1] - 1
    cap = 8 * (nr + 1) * (nt + 1) + 16
    hv = np.empty(cap)
    hi = np.empty(cap, dtype=np.int64)
    hj = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(nr + 1):
        for j in range(nt + 1):
            if state[i, j] == 1:
                size = _heap_push(hv, hi, hj, size, d[i, j], i, j)
    count = 0
    while size > 0:
        v, i, j, size = _heap_pop(hv, hi, hj, size)
        if state[i, j] == 2 or v > d[i, j]:
            continue
        state[i, j] = 2
        order[count] = i * (nt + 1) + j
        count += 1
        if (i == 0 and pole_lo) or (i == nr and pole_hi):
            for jj in range(nt + 1):
                d[i, jj] = v
                state[i, jj] = 2
            ring = 1 if i == 0 else nr - 1
            for jj in range(nt + 1):
                if state[ring, jj] != 2:
                    cand = _local_update(d, state, phi, ring, jj, hr, ht, nr, nt, pole_lo, pole_hi, wrap)
                    if cand < d[ring, jj]:
                        d[ring, jj] = cand
                        state[ring, jj] = 1
                        size = _heap_push(hv, hi, hj, size, cand, ring, jj)
            continue
        for k in range(4):
            ii, jj = i, j
            if k == 0:
                ii = i - 1
            elif k == 1:
                ii = i + 1
            elif k == 2:
                jj = j - 1 if j > 0 else 1
            else:
                if j == nt and not wrap:
                    continue
                jj = j + 1 if j < nt else nt - 1
            if ii < 0 or ii > nr:
                continue
            if (ii == 0 and pole_lo) or (ii == nr and pole_hi):
                if state[ii, 0] != 2:
                    cand = v + hr
                    if cand < d[ii, 0]:
                        d[ii, 0] = cand
                        state[ii, 0] = 1
                        size = _heap_push(hv, hi, hj, size, cand, ii, 0)
                continue
            if state[ii, jj] == 2:
                continue
            cand = _local_update(d, state, phi, ii, jj, hr, ht, nr, nt, pole_lo, pole_hi, wrap)
            if cand < d[ii, jj]:
                d[ii, jj] = cand
                state[ii, jj] = 1
                size = _heap_push(hv, hi, hj, size, cand, ii, jj)
    return count


@dataclass(frozen=True)
class DistanceField:
    """Distance samples d[i, j] at (r_i, Theta_j) from a source on Theta = 0."""

    source: ReducedPoint
    r: np.ndarray
    Theta: np.ndarray
    d: np.ndarray
    order: np.ndarray = field(repr=False)

    @property
    def h(self):
        return float(self.r[1] - self.r[0]), float(self.Theta[1] - self.Theta[0])

    def __call__(self, r, Theta):
        """Bilinear interpolation of the field."""
        r = np.asarray(r, dtype=float)
        Theta = np.asarray(Theta, dtype=float)
        hr, ht = self.h
        nr, nt = self.r.size - 1, self.Theta.size - 1
        x = np.clip((r - self.r[0]) / hr, 0.0, nr)
        y = np.clip(Theta / ht, 0.0, nt)
        i = np.minimum(x.astype(np.int64), nr - 1)
        j = np.minimum(y.astype(np.int64), nt - 1)
        fx, fy = x - i, y - j
        d = self.d
        return ((1 - fx) * (1 - fy) * d[i, j] + fx * (1 - fy) * d[i + 1, j]
                + (1 - fx) * fy * d[i, j + 1] + fx * fy * d[i + 1, j + 1])


def _seed_value(profile, r_s, r, Theta):
    """Short-range distance used to initialize nodes around the source.

    Near a pole the cone unfolding (slope phi'(0)) is used; elsewhere the
    expansion d^2 = dr^2 + phi(r1) phi(r2) Theta^2, correct through third
    order in the separation.
    """
    slope = profile.pole_slope
    near0 = max(r_s, r) < 0.05
    nearR = min(r_s, r) > profile.R - 0.05
    if near0 or nearR:
        a, b = (r_s, r) if near0 else (profile.R - r_s, profile.R - r)
        ang = min(slope * Theta, math.pi)
        return math.sqrt(max(a * a + b * b - 2 * a * b * math.cos(ang), 0.0))
    pp = max(profile.phi_at(r_s) * profile.phi_at(r), 0.0)
    return math.sqrt((r - r_s) ** 2 + pp * Theta * Theta)


def fast_march(profile: WarpProfile, source, nr: int = 256, nt: int = 256,
               seed_cells: int = 2, seed_radius: float = 0.1, r_range=None,
               theta_max: float = math.pi) -> DistanceField:
    """First-order fast-marching distance field from a point on Theta = 0.

    ``source`` is a ReducedPoint or a radius.  Nodes within a fixed ball of
    radius max(seed_radius, seed_cells cells) are initialized directly:
    exactly where an analytic branch applies, otherwise from the local
    expansion of the metric.  A fixed physical seed ball removes the
    h log(1/h) point-source error of plain fast marching.

    ``r_range`` and ``theta_max`` restrict the lattice to a window; its
    edges are open except where they coincide with a pole or Theta = pi.
    Values are exact distances only for points whose minimizing geodesics
    stay inside the window (small geodesic balls around the source).
    """
    r_s = float(source.r if isinstance(source, ReducedPoint) else source)
    lo, hi = (0.0, profile.R) if r_range is None else (float(r_range[0]), float(r_range[1]))
    lo, hi = max(lo, 0.0), min(hi, profile.R)
    if not (lo <= r_s <= hi):
        raise ValueError("source radius outside the lattice window")
    theta_max = min(float(theta_max), math.pi)
    pole_lo, pole_hi, wrap = lo == 0.0, hi == profile.R, theta_max == math.pi
    r = np.linspace(lo, hi, nr + 1)
    th = np.linspace(0.0, theta_max, nt + 1)
    hr, ht = r[1] - r[0], th[1] - th[0]
    phi = profile.evaluate(r)[0].copy()
    if pole_lo:
        phi[0] = 0.0
    if pole_hi:
        phi[-1] = 0.0
    d = np.full((nr + 1, nt + 1), np.inf)
    state = np.zeros((nr + 1, nt + 1), dtype=np.int64)
    reach = max(seed_radius, seed_cells * max(hr, ht * float(np.max(phi))))
    rows = np.flatnonzero(np.abs(r - r_s) <= reach)
    R2, T2 = np.meshgrid(r[rows], th, indexing="ij")
    seed = closed_form_distance(profile, np.full_like(R2, r_s), R2, T2)
    todo = np.isnan(seed)
    if np.any(todo):
        seed[todo] = [_seed_value(profile, r_s, a, b) for a, b in zip(R2[todo], T2[todo])]
    for k, i in enumerate(rows):
        if (i == 0 and pole_lo) or (i == nr and pole_hi):
            d[i, :] = abs(r[i] - r_s)
            state[i, 0] = 1
            continue
        m = seed[k] <= reach
        d[i, m] = seed[k, m]
        state[i, m] = 1
    order = np.full((nr + 1) * (nt + 1), -1, dtype=np.int64)
    count = _march(d, state, phi, hr, ht, order, pole_lo, pole_hi, wrap)
    return DistanceField(ReducedPoint(r_s, 0.0), r, th, d, order[:count])


def write_field(fld: DistanceField, csv_path) -> None:
    from .io import write_csv

    R, T = np.meshgrid(fld.r, fld.Theta, indexing="ij")
    write_csv(csv_path, ["r", "Theta", "d"], np.column_stack([R.ravel(), T.ravel(), fld.d.ravel()]))


# ---------------------------------------------------------------------------
# exact branches

def _cosine_law(r1, r2, ang):
    c = np.cos(r1) * np.cos(r2) + np.sin(r1) * np.sin(r2) * np.cos(ang)
    # stable form through the chord: 2 asin(|p - q| / 2) on the unit sphere
    s = np.sqrt(np.maximum(0.5 * (1.0 - c), 0.0))
    return np.where(c > -0.5, 2.0 * np.arcsin(np.minimum(s, 1.0)), np.arccos(np.clip(c, -1.0, 1.0)))


def _chord_angle(r1, r2, ang):
    """Great-circle angle between (r1, 0) and (r2, ang) on the unit S^2."""
    p = np.stack([np.cos(r1), np.sin(r1), np.zeros_like(r1 + ang)], axis=-1)
    q = np.stack([np.cos(r2), np.sin(r2) * np.cos(ang), np.sin(r2) * np.sin(ang)], axis=-1)
    return unit_angle(p, q)


def closed_form_distance(profile: WarpProfile, r1, r2, Theta):
    """Exact distance where one of the analytic branches applies, else NaN."""
    r1, r2, Theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, Theta)))
    out = np.full(r1.shape, np.nan)
    meridian = Theta <= 1e-15
    out[meridian] = np.abs(r1[meridian] - r2[meridian])
    slope, omega, extent = profile.pole_branch
    if profile.kind in ("round", "football"):
        scale = profile.R / math.pi  # rescaled spheres keep the same shape
        rest = ~meridian
        out[rest] = scale * _chord_angle(r1[rest] / scale, r2[rest] / scale, slope * Theta[rest])
        return out
    if slope == 1.0:
        R = profile.R
        for near in (lambda r: r, lambda r: R - r):
            a1, a2 = near(r1), near(r2)
            cap = (~meridian) & (a1 <= extent) & (a2 <= extent)
            if np.any(cap):
                out[cap] = _chord_angle(omega * a1[cap], omega * a2[cap], Theta[cap]) / omega
    return out


class DistanceEngine:
    """Distances on one profile, caching fast-marching fields per source node.

    A source radius between lattice nodes i and i+1 is handled by linear
    interpolation between the two node-sourced fields.  On mirror-symmetric
    profiles sources are folded into [0, R/2].
    """

    def __init__(self, profile: WarpProfile, nr: int = 256, nt: int = 256):
        from .radial import is_mirror_symmetric

        self.profile = profile
        self.nr = int(nr)
        self.nt = int(nt)
        self.hr = profile.R / self.nr
        self.symmetric = is_mirror_symmetric(profile)
        self._fields = {}

    @property
    def h(self) -> float:
        """Largest lattice spacing in length units."""
        phimax = float(np.max(self.profile.evaluate(self.profile.grid)[0]))
        return max(self.hr, phimax * math.pi / self.nt)

    def field(self, i: int) -> DistanceField:
        i = int(i)
        if i not in self._fields:
            self._fields[i] = fast_march(self.profile, i * self.hr, self.nr, self.nt)
        return self._fields[i]

    def fmm_distance(self, r1, r2, Theta):
        r1, r2, Theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, Theta)))
        out = np.empty(r1.shape)
        if self.symmetric:
            R = self.profile.R
            flip = r1 > 0.5 * R
            r1 = np.where(flip, R - r1, r1)
            r2 = np.where(flip, R - r2, r2)
        x = np.clip(r1 / self.hr, 0.0, self.nr)
        lo = np.minimum(np.floor(x).astype(np.int64), self.nr - 1)
        t = x - lo
        for i in np.unique(lo):
            m = lo == i
            f0 = self.field(i)(r2[m], Theta[m])
            f1 = self.field(i + 1)(r2[m], Theta[m])
            out[m] = (1.0 - t[m]) * f0 + t[m] * f1
        return out

    def distance(self, r1, r2, Theta, method: str = "auto"):
        """Distance for reduced pairs; ``method`` is 'auto', 'exact' or 'fmm'."""
        r1, r2, Theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, Theta)))
        if method == "fmm":
            return self.fmm_distance(r1, r2, Theta)
        out = closed_form_distance(self.profile, r1, r2, Theta)
        same = (r1 == r2) & (Theta == 0.0)
        out[same] = 0.0
        if method == "exact":
            return out
        todo = np.isnan(out)
        if np.any(todo):
            out[todo] = self.fmm_distance(r1[todo], r2[todo], Theta[todo])
        return out


def distance(profile: WarpProfile, x, y, engine: DistanceEngine | None = None, method: str = "auto"):
    """d(x, y) for points given as (r, theta) pairs (arrays allowed)."""
    r1, r2, Theta = reduce_pair(x, y)
    engine = engine or DistanceEngine(profile)
    return engine.distance(r1, r2, Theta, method)


def round_field_error(nr: int, source_r: float, nt: int | None = None,
                      cut_margin: float = 0.0) -> float:
    """Max error of a fast-marching field on the round S^2 reduction against the cosine law.

    Nodes within ``cut_margin`` of the cut locus (the antipode of the
    source, where the exact distance is not differentiable) are skipped.
    """
    from .profiles import make_round

    prof = make_round(2, 64)
    fld = fast_march(prof, source_r, nr, nt or nr)
    R, T = np.meshgrid(fld.r, fld.Theta, indexing="ij")
    exact = _chord_angle(np.full_like(R, source_r), R, T)
    keep = exact <= math.pi - cut_margin
    return float(np.max(np.abs(fld.d - exact)[keep]))


def fitted_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h, err = np.log(np.asarray(h, dtype=float)), np.log(np.asarray(err, dtype=float))
    return float(np.polyfit(h, err, 1)[0])


def round_oracle_report(source_r: float = 1.0, sizes=(64, 128, 256, 512),
                        cut_margin: float = 0.0) -> dict:
    """Grid-doubling study of fast marching on the round sphere.

    A pole source is reproduced exactly (d = r), so its order is reported
    as infinite when every error is at roundoff level.
    """
    errs = [round_field_error(m, source_r, cut_margin=cut_margin) for m in sizes]
    h = [math.pi / m for m in sizes]
    if max(errs) < 1e-12:
        order = float("inf")
    else:
        order = fitted_order(h, errs)
    return {"source_r": float(source_r), "sizes": list(sizes), "h": h, "max_err": errs,
            "order": order, "cut_margin": float(cut_margin)}
