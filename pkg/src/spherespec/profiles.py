"""Warp profiles for rotationally symmetric metrics dr^2 + phi(r)^2 dtheta^2 on S^n.

Three families are provided: the round sphere, the football (a round sphere
with both poles turned into cone points, ``phi = c sin r``) and a smoothed
football whose cone tips are replaced by small round caps.  The smoothed
profile is glued from four branches on the first half of the meridian and
mirrored about the midpoint:

1. a round cap ``sin(a r)/a`` on ``[0, rho]``,
2. a kernel-driven transition on ``[rho, rho + zeta]``,
3. a bump-blended transition on ``[rho + zeta, rho + zeta + kappa]``,
4. the shifted football ``c sin(r - rho - zeta + xi)`` up to the midpoint.

Each profile carries samples of phi, phi' and phi'' and an exact evaluator,
so downstream solvers can query the profile off the sample grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, gamma

__all__ = [
    "WarpProfile",
    "GluingSpec",
    "bump",
    "bump_derivatives",
    "make_round",
    "make_football",
    "derive_gluing_constants",
    "make_smoothed",
    "check_smooth_joints",
    "ricci_min",
    "ricci_components",
    "check_claim_inequalities",
    "rescale",
    "volume",
    "round_volume",
    "sphere_area",
    "admissible_zeta",
    "write_profile",
]

KINDS = ("round", "football", "smoothed")


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n, i.e. n * omega_n."""
    return n * math.pi ** (n / 2) / gamma(n / 2 + 1)


def round_volume(n: int) -> float:
    """Volume of the unit round S^n."""
    return sphere_area(n + 1)


def bump(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, C-infinity in between."""
    return bump_derivatives(x)[0]


def bump_derivatives(x):
    """Return (psi, psi', psi'') of the smooth step, evaluated elementwise.

    Uses psi = e(x)/(e(x)+e(1-x)), e(x) = exp(-1/x), written as a logistic of
    z = 1/(1-x) - 1/x so that no intermediate overflows.
    """
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    z = 1.0 / (1.0 - xi) - 1.0 / xi
    dz = 1.0 / (1.0 - xi) ** 2 + 1.0 / xi**2
    ddz = 2.0 / (1.0 - xi) ** 3 - 2.0 / xi**3
    s = expit(z)
    s1 = s * expit(-z)
    p0 = np.where(inside, s, (x >= 1.0).astype(float))
    p1 = np.where(inside, s1 * dz, 0.0)
    p2 = np.where(inside, s1 * (1.0 - 2.0 * s) * dz**2 + s1 * ddz, 0.0)
    return p0, p1, p2


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WarpProfile:
    """A warped metric dr^2 + phi^2 dtheta^2 on S^n, sampled and evaluable.

    ``evaluate(r)`` returns exact (phi, phi', phi'') at arbitrary radii; the
    arrays ``phi``, ``dphi`` and ``ddphi`` are the same quantities on ``grid``.
    ``breakpoints`` lists the interior radii where the construction switches
    branch; ODE integrators should step across them rather than through.
    """

    n: int
    kind: str
    R: float
    grid: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    params: dict
    singular_poles: bool
    breakpoints: tuple = ()
    pole_branch: tuple = (1.0, 1.0, math.pi / 2)
    _shape: Callable = field(default=None, repr=False, compare=False)
    _scalar: Callable = field(default=None, repr=False, compare=False)
    _glue: object = field(default=None, repr=False, compare=False)

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        return self._shape(r)

    def phi_at(self, r: float) -> float:
        """phi at a single radius; fast path for ODE right-hand sides."""
        if self._scalar is not None:
            return self._scalar(r)
        return float(self._shape(np.array([r]))[0][0])

    @property
    def pole_slope(self) -> float:
        """|phi'| at the poles (1 for smooth poles, c for cone points)."""
        return float(self.pole_branch[0])

    @property
    def grid_size(self) -> int:
        """Number of samples (interval count plus one, plus any gluing sub-nodes)."""
        return int(self.grid.size)

    @property
    def profile_id(self) -> str:
        p = self.params
        if self.kind == "round":
            return f"round-n{self.n}"
        if self.kind == "football":
            return f"football-n{self.n}-c{p['c']:.6g}"
        tag = f"smoothed-n{self.n}-c{p['c']:.6g}-xi{p['xi']:.6g}-zeta{p['zeta']:.6g}-kappa{p['kappa']:.6g}"
        if p.get("scale", 1.0) != 1.0:
            tag += f"-scaled{p['scale']:.12g}"
        return tag

    def interior(self, margin: int = 2) -> slice:
        return slice(margin, self.grid.size - margin)


def _build(n, kind, R, grid, shape, params, singular, breakpoints=(), pole_branch=None, scalar=None):
    phi, dphi, ddphi = shape(grid)
    return WarpProfile(
        n=n,
        kind=kind,
        R=float(R),
        grid=_readonly(grid),
        phi=_readonly(phi),
        dphi=_readonly(dphi),
        ddphi=_readonly(ddphi),
        params=dict(params),
        singular_poles=singular,
        breakpoints=tuple(float(b) for b in breakpoints),
        pole_branch=pole_branch or (1.0, 1.0, math.pi / 2),
        _shape=shape,
        _scalar=scalar,
    )


def _check_dim(n, grid_size):
    if int(n) != n or n < 2:
        raise ValueError("dimension n must be an integer >= 2")
    if int(grid_size) != grid_size or grid_size < 16:
        raise ValueError("grid_size must be an integer >= 16")


def _sine_shape(c):
    def shape(r):
        s, co = np.sin(r), np.cos(r)
        return c * s, c * co, -c * s

    return shape


def make_round(n: int, grid_size: int = 1024) -> WarpProfile:
    """Unit round sphere S^n: phi = sin r on [0, pi]."""
    _check_dim(n, grid_size)
    grid = np.linspace(0.0, math.pi, int(grid_size) + 1)
    params = {"c": 1.0, "xi": 0.0, "zeta": 0.0, "kappa": 0.0, "a": 1.0, "rho": 0.0}
    return _build(int(n), "round", math.pi, grid, _sine_shape(1.0), params, False,
                  scalar=math.sin)


def make_football(n: int, c: float, grid_size: int = 1024) -> WarpProfile:
    """Football metric phi = c sin r; cone points at both poles when c < 1."""
    _check_dim(n, grid_size)
    if not (0.0 < c <= 1.0):
        raise ValueError("c must lie in (0,1]")
    grid = np.linspace(0.0, math.pi, int(grid_size) + 1)
    params = {"c": float(c), "xi": 0.0, "zeta": 0.0, "kappa": 0.0, "a": 1.0, "rho": 0.0}
    c = float(c)
    return _build(int(n), "football", math.pi, grid, _sine_shape(c), params, c < 1.0,
                  pole_branch=(c, 1.0, math.pi / 2), scalar=lambda r: c * math.sin(r))


def derive_gluing_constants(c: float, xi: float) -> tuple[float, float]:
    """Cap curvature scale a and cap radius rho matching c sin(r + xi) to C^1.

    The pair solves sin(a rho)/a = c sin xi and cos(a rho) = c cos xi.
    """
    if not (0.0 < c < 1.0):
        raise ValueError("c must lie in (0,1) for the smoothed construction")
    if not (0.0 < xi < math.pi / 2):
        raise ValueError("xi must lie in (0, pi/2)")
    cc = c * math.cos(xi)
    a = math.sqrt((1.0 - cc) * (1.0 + cc)) / (c * math.sin(xi))
    rho = math.acos(cc) / a
    return a, rho


@dataclass(frozen=True)
class GluingSpec:
    """Parameters of the cap-to-football transition and its kernel l(t)."""

    c: float
    xi: float
    zeta: float
    kappa: float
    a: float
    rho: float

    @classmethod
    def from_params(cls, c, xi, zeta, kappa):
        a, rho = derive_gluing_constants(c, xi)
        return cls(float(c), float(xi), float(zeta), float(kappa), a, rho)

    @property
    def b(self):
        return self.rho + self.zeta

    @property
    def e(self):
        return self.rho + self.zeta + self.kappa

    @property
    def half(self):
        return math.pi / 2 + self.rho + self.zeta - self.xi

    def bump(self, x):
        return bump(x)

    def kernel(self, t):
        """l(t): psi-blend of the cap's and the football's second derivatives."""
        t = np.asarray(t, dtype=float)
        w = bump((t - self.rho) / self.zeta)
        cap = self.a * np.sin(self.a * t)
        foot = self.c * np.sin(t - self.b + self.xi)
        return -((1.0 - w) * cap + w * foot)


class _CumulativeIntegral:
    """F(t) = int_{t0}^t f for t in [nodes[0], nodes[-1]].

    Composite Simpson on panels of two equal intervals gives F at even nodes;
    the remainder inside a panel is completed by Gauss-Legendre on [node, t].
    """

    _gl_x, _gl_w = np.polynomial.legendre.leggauss(12)

    def __init__(self, f, nodes):
        self.f = f
        self.nodes = np.asarray(nodes, dtype=float)
        if (self.nodes.size - 1) % 2:
            raise ValueError("Simpson needs an even number of intervals")
        t0, t1, t2 = self.nodes[0:-1:2], self.nodes[1::2], self.nodes[2::2]
        h = t2 - t0
        panels = h / 6.0 * (f(t0) + 4.0 * f(t1) + f(t2))
        self.starts = t0
        self.values = np.concatenate([[0.0], np.cumsum(panels)])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, self.starts.size - 1)
        lo = self.starts[k]
        half = 0.5 * (t - lo)
        pts = lo[..., None] + half[..., None] * (self._gl_x + 1.0)
        tail = half * (self.f(pts) @ self._gl_w)
        return self.values[k] + tail


def admissible_zeta(c: float, xi: float, kappa: float, safety: float = 0.25) -> float:
    """A zeta small enough for the curvature inequalities in the blend region.

    In the blend region phi'' picks up psi''(x) D / kappa^2 and 2 psi'(x) D' / kappa
    with D ~ -c zeta cos xi and D' ~ -zeta (a sin(a rho) + c sin xi) / 2.  The
    available margin is about xi c sin xi, so zeta must scale like xi^2 kappa^2.
    """
    a, rho = derive_gluing_constants(c, xi)
    p1, p2 = 2.0, 9.85  # sup|psi'|, sup|psi''| of the bump
    slope = 0.5 * (a * math.sin(a * rho) + c * math.sin(xi))
    per_zeta = p2 * c * math.cos(xi) / kappa**2 + 2.0 * p1 * slope / kappa
    return safety * xi * c * math.sin(xi) / per_zeta


def _segment_nodes(t0, t1, m):
    return t0 + (t1 - t0) * np.arange(m + 1) / m


class _SmoothedHalf:
    """Evaluator for the glued profile on [0, half] and its mirror on [half, R]."""

    def __init__(self, spec: GluingSpec, samples: int):
        self.s = spec
        rho, b, e = spec.rho, spec.b, spec.e
        nodes_j = np.concatenate([_segment_nodes(rho, b, samples), _segment_nodes(b, e, samples)[1:]])
        nodes_k = _segment_nodes(b, e, samples)
        l = spec.kernel
        # work in offsets from the piece start to keep the moment weights exact
        self.L1 = _CumulativeIntegral(l, nodes_j)
        self.L2 = _CumulativeIntegral(lambda t: (t - rho) * l(t), nodes_j)
        self.K1 = _CumulativeIntegral(l, nodes_k)
        self.K2 = _CumulativeIntegral(lambda t: (t - b) * l(t), nodes_k)
        self.R = 2.0 * spec.half

    # individual branches, each valid on an extended range for the joint test
    def cap(self, r):
        a = self.s.a
        return np.sin(a * r) / a, np.cos(a * r), -a * np.sin(a * r)

    def _J(self, r):
        L1 = self.L1(r)
        return (r - self.s.rho) * L1 - self.L2(r), L1

    def _K(self, r):
        K1 = self.K1(r)
        return (r - self.s.b) * K1 - self.K2(r), K1

    def transition(self, r):
        s = self.s
        J, L1 = self._J(r)
        a = s.a
        phi = math.sin(a * s.rho) / a + (r - s.rho) * math.cos(a * s.rho) + J
        return phi, math.cos(a * s.rho) + L1, s.kernel(r)

    def blend(self, r):
        s = self.s
        J, L1 = self._J(r)
        K, K1 = self._K(r)
        shift = s.c * s.zeta * math.cos(s.xi)
        P, P1, P2 = bump_derivatives((r - s.b) / s.kappa)
        P1, P2 = P1 / s.kappa, P2 / s.kappa**2
        D = K - J - shift
        D1 = K1 - L1
        lr = s.kernel(r)
        base = s.c * math.sin(s.xi) + s.c * (r - s.b) * math.cos(s.xi)
        phi = base + J + shift + P * D
        dphi = s.c * math.cos(s.xi) + L1 + P1 * D + P * D1
        ddphi = lr + P2 * D + 2.0 * P1 * D1
        return phi, dphi, ddphi

    def football(self, r):
        s = self.s
        arg = r - s.b + s.xi
        return s.c * np.sin(arg), s.c * np.cos(arg), -s.c * np.sin(arg)

    def half(self, r):
        s = self.s
        out = [np.empty_like(r) for _ in range(3)]
        pieces = (
            (r <= s.rho, self.cap),
            ((r > s.rho) & (r <= s.b), self.transition),
            ((r > s.b) & (r < s.e), self.blend),
            (r >= s.e, self.football),
        )
        for mask, branch in pieces:
            if np.any(mask):
                vals = branch(r[mask])
                for o, v in zip(out, vals):
                    o[mask] = v
        return out

    def scalar(self, r):
        s = self.s
        q = self.R - r if r > 0.5 * self.R else r
        if q <= s.rho:
            return math.sin(s.a * q) / s.a
        if q >= s.e:
            return s.c * math.sin(q - s.b + s.xi)
        return float(self.half(np.array([q]))[0][0])

    def __call__(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        mirror = r > 0.5 * self.R
        q = np.where(mirror, self.R - r, r)
        phi, dphi, ddphi = self.half(q)
        dphi = np.where(mirror, -dphi, dphi)
        return phi, dphi, ddphi


def make_smoothed(
    n: int,
    c: float,
    xi: float,
    zeta: float,
    kappa: float,
    grid_size: int = 2048,
    zeta_samples: int = 256,
    enforce_wedge: bool = True,
) -> WarpProfile:
    """Football with both cone tips replaced by smooth round caps.

    ``grid_size`` is the number of base samples on [0, R]; each gluing piece
    additionally receives ``zeta_samples`` uniform sub-intervals, which also
    set the resolution of the cumulative Simpson quadrature.
    """
    _check_dim(n, grid_size)
    if not (0.0 < c < 1.0):
        raise ValueError("c must lie in (0,1) for the smoothed construction")
    if not (0.0 < zeta < kappa < xi < 1.0):
        raise ValueError("parameters must satisfy 0 < zeta < kappa < xi < 1")
    if enforce_wedge and (zeta > kappa / 20.0 or kappa > xi / 10.0):
        raise ValueError("parameters violate the wedge zeta <= kappa/20, kappa <= xi/10")
    if zeta_samples < 64 or zeta_samples % 2:
        raise ValueError("grid too coarse for the zeta-region (need an even count >= 64)")
    spec = GluingSpec.from_params(c, xi, zeta, kappa)
    if spec.e >= spec.half:
        raise ValueError("gluing region does not fit inside the half meridian")
    shape = _SmoothedHalf(spec, int(zeta_samples))
    R = shape.R
    half = 0.5 * R
    m = int(grid_size) // 2
    base = half * np.arange(m + 1) / m
    sub = np.concatenate(
        [_segment_nodes(spec.rho, spec.b, zeta_samples), _segment_nodes(spec.b, spec.e, zeta_samples)]
    )
    left = np.unique(np.concatenate([base, sub]))
    left = left[np.concatenate([[True], np.diff(left) > 1e-15 * half])]
    left[-1] = half
    grid = np.concatenate([left, R - left[-2::-1]])
    vals_left = shape(left)
    phi = np.concatenate([vals_left[0], vals_left[0][-2::-1]])
    dphi = np.concatenate([vals_left[1], -vals_left[1][-2::-1]])
    ddphi = np.concatenate([vals_left[2], vals_left[2][-2::-1]])
    params = {
        "c": float(c),
        "xi": float(xi),
        "zeta": float(zeta),
        "kappa": float(kappa),
        "a": spec.a,
        "rho": spec.rho,
        "zeta_samples": int(zeta_samples),
        "scale": 1.0,
    }
    breaks = (spec.rho, spec.b, spec.e, R - spec.e, R - spec.b, R - spec.rho)
    prof = WarpProfile(
        n=int(n),
        kind="smoothed",
        R=R,
        grid=_readonly(grid),
        phi=_readonly(phi),
        dphi=_readonly(dphi),
        ddphi=_readonly(ddphi),
        params=params,
        singular_poles=False,
        breakpoints=breaks,
        pole_branch=(1.0, spec.a, spec.rho),
        _shape=shape,
        _scalar=shape.scalar,
        _glue=shape,
    )
    return prof


def check_smooth_joints(profile: WarpProfile, tol: float = 1e-6) -> dict:
    """Compare adjacent branches at each joint and its mirror image."""
    if profile.kind != "smoothed":
        raise ValueError("joint check applies to smoothed profiles only")
    glue = profile._glue
    if glue is None:
        raise ValueError("profile carries no gluing evaluator (was it rescaled?)")
    s = glue.s
    pairs = (("rho", s.rho, glue.cap, glue.transition),
             ("rho+zeta", s.b, glue.transition, glue.blend),
             ("rho+zeta+kappa", s.e, glue.blend, glue.football))
    joints = []
    worst = 0.0
    for name, r0, left, right in pairs:
        r = np.array([r0])
        lv = np.array([v[0] for v in left(r)])
        rv = np.array([v[0] for v in right(r)])
        mism = np.abs(lv - rv)
        worst = max(worst, float(mism.max()))
        for mirror in (False, True):
            joints.append({
                "joint": name if not mirror else f"R-({name})",
                "r": float(profile.R - r0 if mirror else r0),
                "left": lv.tolist() if not mirror else rv.tolist(),
                "right": rv.tolist() if not mirror else lv.tolist(),
                "mismatch": mism.tolist(),
            })
    # the sampled arrays must agree with the evaluator on the grid and be mirror-symmetric
    mirror_err = float(np.max(np.abs(profile.phi - profile.phi[::-1])))
    return {"passed": bool(worst < tol and mirror_err < tol), "max_mismatch": worst,
            "mirror_error": mirror_err, "tol": tol, "joints": joints}


def ricci_components(profile: WarpProfile, r=None):
    """Tangential and radial Ricci curvatures in unit directions."""
    if r is None:
        phi, dphi, ddphi = profile.phi, profile.dphi, profile.ddphi
    else:
        phi, dphi, ddphi = profile.evaluate(r)
    n = profile.n
    # phi vanishes at the poles; callers skip those samples
    with np.errstate(divide="ignore", invalid="ignore"):
        tangential = (n - 2) * (1.0 - dphi**2) / phi**2 - ddphi / phi
        radial = -(n - 1) * ddphi / phi
    return tangential, radial


def ricci_min(profile: WarpProfile, margin: int = 2) -> float:
    """Lower Ricci bound over the sample grid, skipping ``margin`` cells per pole."""
    inner = profile.interior(margin)
    if np.any(profile.phi[inner] <= 0.0):
        raise ValueError("profile has non-positive phi in the interior")
    t, rad = ricci_components(profile)
    return float(min(t[inner].min(), rad[inner].min()))


def check_claim_inequalities(profile: WarpProfile, xi: float, tol: float = 1e-12) -> dict:
    """Check phi'' <= -(1-xi) phi and phi'^2 + (1-xi) phi^2 <= 1 on the grid."""
    inner = profile.interior(1)
    phi, dphi, ddphi = profile.phi[inner], profile.dphi[inner], profile.ddphi[inner]
    m1 = -ddphi - (1.0 - xi) * phi
    m2 = 1.0 - dphi**2 - (1.0 - xi) * phi**2
    r = profile.grid[inner]
    i1, i2 = int(np.argmin(m1)), int(np.argmin(m2))
    return {
        "passed": bool(m1[i1] >= -tol and m2[i2] >= -tol),
        "concavity_margin": float(m1[i1]),
        "concavity_argmin_r": float(r[i1]),
        "gradient_margin": float(m2[i2]),
        "gradient_argmin_r": float(r[i2]),
        "xi": float(xi),
    }


def rescale(profile: WarpProfile, xi: float) -> WarpProfile:
    """Shrink the metric to (1 - xi) g.

    This is the scaling that turns Rc >= (n-1)(1-xi) into Rc >= n-1:
    radial length becomes R sqrt(1-xi) and phi_hat(r) = sqrt(1-xi) phi(r / sqrt(1-xi)).
    """
    if not (0.0 <= xi < 1.0):
        raise ValueError("xi must lie in [0,1)")
    if xi == 0.0:
        return profile
    s = math.sqrt(1.0 - xi)
    inner = profile._shape
    inner_scalar = profile.phi_at

    def shape(r):
        phi, dphi, ddphi = inner(np.asarray(r, dtype=float) / s)
        return s * phi, dphi, ddphi / s

    def scalar(r):
        return s * inner_scalar(r / s)

    slope, omega, extent = profile.pole_branch

    params = dict(profile.params)
    params["scale"] = params.get("scale", 1.0) * s
    params["rescale_xi"] = float(xi)
    return WarpProfile(
        n=profile.n,
        kind=profile.kind,
        R=profile.R * s,
        grid=_readonly(profile.grid * s),
        phi=_readonly(profile.phi * s),
        dphi=profile.dphi,
        ddphi=_readonly(profile.ddphi / s),
        params=params,
        singular_poles=profile.singular_poles,
        breakpoints=tuple(b * s for b in profile.breakpoints),
        pole_branch=(slope, omega / s, extent * s),
        _shape=shape,
        _scalar=scalar,
    )


def _segments(profile: WarpProfile):
    edges = [0.0, *sorted(profile.breakpoints), profile.R]
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def volume(profile: WarpProfile, points: int = 4097) -> float:
    """n omega_n int_0^R phi^{n-1} dr by composite Simpson between branch joints."""
    from scipy.integrate import simpson

    total = 0.0
    for lo, hi in _segments(profile):
        r = np.linspace(lo, hi, points)
        total += simpson(profile.evaluate(r)[0] ** (profile.n - 1), x=r)
    return float(sphere_area(profile.n) * total)


def profile_metadata(profile: WarpProfile) -> dict:
    p = profile.params
    return {
        "n": profile.n,
        "kind": profile.kind,
        "c": p.get("c"),
        "xi": p.get("xi"),
        "zeta": p.get("zeta"),
        "kappa": p.get("kappa"),
        "a": p.get("a"),
        "rho": p.get("rho"),
        "R": profile.R,
        "grid_size": profile.grid_size,
    }


def write_profile(profile: WarpProfile, csv_path, json_path) -> None:
    """Export samples as CSV ``r,phi,dphi,ddphi`` plus a JSON sidecar."""
    from .io import write_csv, write_json

    write_csv(csv_path, ["r", "phi", "dphi", "ddphi"],
              np.column_stack([profile.grid, profile.phi, profile.dphi, profile.ddphi]))
    write_json(json_path, profile_metadata(profile))
