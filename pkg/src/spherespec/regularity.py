"""Bi-Hölder distortion, injectivity and the sharpness sweep of the eigenmap."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .eigenmap import (
    EigenMap,
    build_map,
    eval_tilde,
    gradient_sup,
    min_radial_jacobian,
)
from .geodesy import DistanceEngine, reduce_pair, sphere_chordal_distance
from .profiles import (
    WarpProfile,
    check_claim_inequalities,
    make_round,
    make_smoothed,
    rescale,
    round_volume,
    volume,
)
from .spectrum import first_eigs, football_alpha

__all__ = [
    "SamplerSpec",
    "PairSet",
    "DistortionResult",
    "SweepRow",
    "sample_pairs",
    "fit_epsilon",
    "distortion_scan",
    "lipschitz_lower",
    "image_angle",
    "pole_witness",
    "injectivity_scan",
    "xi_from_rule",
    "sweep_row",
    "sharpness_sweep",
    "gh_proxy_report",
    "write_sweep",
    "write_samples",
]


@dataclass(frozen=True)
class SamplerSpec:
    """Stratified pair sampler.

    ``fractions`` splits ``count`` into meridian, equatorial and random
    pairs.  A quarter of the meridian pairs sit within a few pole-branch
    lengths of a pole.  Pairs whose distance needs fast marching must have
    d >= ``fmm_min_cells`` lattice spacings so the O(h) distance error stays
    a small fraction of d.
    """

    count: int = 2000
    fractions: tuple = (0.4, 0.2, 0.4)
    max_d: float = 1.0
    fmm_min_cells: float = 20.0
    fmm_grid: int = 256


@dataclass
class PairSet:
    r1: np.ndarray
    r2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    kind: np.ndarray
    d: np.ndarray

    def __len__(self):
        return int(self.d.size)

    def subset(self, mask):
        return PairSet(self.r1[mask], self.r2[mask], self.theta1[mask], self.theta2[mask],
                       self.kind[mask], self.d[mask])


def _random_dirs(rng, k, n):
    v = rng.standard_normal((k, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _rotate_by(rng, theta1, Theta):
    """Unit vectors at angle Theta from the rows of theta1."""
    n = theta1.shape[1]
    if n == 1:
        return np.where(Theta[:, None] > 0.5 * math.pi, -theta1, theta1)
    w = rng.standard_normal(theta1.shape)
    w -= np.sum(w * theta1, axis=1, keepdims=True) * theta1
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return np.cos(Theta)[:, None] * theta1 + np.sin(Theta)[:, None] * w


def _candidates(profile: WarpProfile, rng, kind: str, k: int):
    n, R = profile.n, profile.R
    extent = profile.pole_branch[2]
    t1 = _random_dirs(rng, k, n)
    if kind == "meridian":
        r1 = rng.uniform(0.0, R, k)
        r2 = np.clip(r1 + rng.uniform(-1.0, 1.0, k), 0.0, R)
        near = rng.random(k) < 0.25
        top = min(0.7, math.log10(0.5 * R / extent))
        s1 = extent * 10.0 ** rng.uniform(-3.0, top, k)
        s2 = extent * 10.0 ** rng.uniform(-3.0, top, k)
        south = rng.random(k) < 0.5
        r1 = np.where(near, np.where(south, R - s1, s1), r1)
        r2 = np.where(near, np.where(south, R - s2, s2), r2)
        across = rng.random(k) < 0.5
        Theta = np.where(across, math.pi, 0.0)
        t2 = np.where(across[:, None], -t1, t1)
        return r1, r2, t1, t2, Theta
    if kind == "equatorial":
        r1 = 0.5 * R + rng.uniform(-0.05, 0.05, k)
        r2 = 0.5 * R + rng.uniform(-0.05, 0.05, k)
        pm = profile.phi_at(0.5 * R)
        Theta = rng.uniform(0.0, min(math.pi, 1.0 / pm), k)
    else:
        r1 = rng.uniform(0.0, R, k)
        r2 = np.clip(r1 + rng.uniform(-1.0, 1.0, k), 0.0, R)
        phim = np.maximum(np.maximum(profile.evaluate(r1)[0], profile.evaluate(r2)[0]), 0.1)
        Theta = rng.uniform(0.0, 1.0, k) * np.minimum(math.pi, 1.2 / phim)
    t2 = _rotate_by(rng, t1, Theta)
    return r1, r2, t1, t2, Theta


def sample_pairs(profile: WarpProfile, spec: SamplerSpec = SamplerSpec(), seed: int = 0,
                 engine: DistanceEngine | None = None) -> PairSet:
    """Deterministic stratified pairs with 0 < d <= spec.max_d."""
    rng = np.random.default_rng(seed)
    engine = engine or DistanceEngine(profile, spec.fmm_grid, spec.fmm_grid)
    fmm_floor = spec.fmm_min_cells * engine.h
    parts = []
    kinds = ("meridian", "equatorial", "random")
    quotas = np.floor(np.asarray(spec.fractions, dtype=float) / sum(spec.fractions) * spec.count).astype(int)
    quotas[-1] += spec.count - quotas.sum()
    for kind, quota in zip(kinds, quotas):
        got, tries = 0, 0
        while got < quota and tries < 8:
            tries += 1
            k = int(2 * (quota - got) + 16)
            r1, r2, t1, t2, _ = _candidates(profile, rng, kind, k)
            a, b, Theta = reduce_pair((r1, t1), (r2, t2))
            exact = engine.distance(a, b, Theta, method="exact")
            need = np.isnan(exact)
            d = exact.copy()
            if np.any(need):
                d[need] = engine.fmm_distance(a[need], b[need], Theta[need])
            ok = (d > 0.0) & (d <= spec.max_d) & (~need | (d >= fmm_floor))
            idx = np.flatnonzero(ok)[: quota - got]
            if idx.size:
                parts.append((r1[idx], r2[idx], t1[idx], t2[idx], np.full(idx.size, kind), d[idx]))
                got += idx.size
    if not parts:
        raise ValueError("sampler produced no valid pairs")
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return PairSet(*cols)


def fit_epsilon(d, dt, tol: float = 1e-13) -> float:
    """Smallest eps >= 0 with (1 - eps) d^(1 + eps) <= dt <= (1 + eps) d for all samples (d <= 1)."""
    d = np.asarray(d, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if d.size == 0:
        return 0.0
    upper = max(float(np.max(dt / d)) - 1.0, 0.0)

    def lower_ok(eps):
        return bool(np.all((1.0 - eps) * d ** (1.0 + eps) <= dt))

    if lower_ok(upper):
        return upper
    lo, hi = upper, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lower_ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class DistortionResult:
    pairs: PairSet
    dt: np.ndarray
    epsilon: float
    inf_ratio: float
    max_ratio: float

    @property
    def ratio(self):
        return self.dt / self.pairs.d

    def payload(self) -> dict:
        out = {"count": len(self.pairs), "epsilon": self.epsilon, "inf_ratio": self.inf_ratio,
               "max_ratio": self.max_ratio}
        for kind in ("meridian", "equatorial", "random"):
            m = self.pairs.kind == kind
            out[f"count_{kind}"] = int(np.count_nonzero(m))
            if np.any(m):
                out[f"inf_ratio_{kind}"] = float(np.min(self.ratio[m]))
        return out


def image_distances(m: EigenMap, pairs: PairSet) -> np.ndarray:
    """Round-sphere distance between f~ images of the pair endpoints."""
    u = eval_tilde(m, pairs.r1, pairs.theta1)
    v = eval_tilde(m, pairs.r2, pairs.theta2)
    return sphere_chordal_distance(u, v)


def distortion_scan(profile: WarpProfile, m: EigenMap, spec: SamplerSpec = SamplerSpec(),
                    seed: int = 0, engine: DistanceEngine | None = None) -> DistortionResult:
    pairs = sample_pairs(profile, spec, seed, engine)
    dt = image_distances(m, pairs)
    ratio = dt / pairs.d
    return DistortionResult(pairs, dt, fit_epsilon(pairs.d, dt), float(ratio.min()), float(ratio.max()))


def lipschitz_lower(result: DistortionResult) -> float:
    """inf dt/d over the scanned samples."""
    return float(np.min(result.ratio))


def image_angle(m: EigenMap, r):
    """psi(r): polar angle of f~(r, theta) measured from the image pole (1, 0, ..., 0)."""
    (w0, _, _), (w1, _, _) = m.radial_parts(np.atleast_1d(np.asarray(r, dtype=float)))
    return np.arctan2(np.abs(w1), w0)


def pole_witness(m: EigenMap, fractions=(1.0, 0.5, 0.25, 0.1, 0.01)) -> dict:
    """Short meridian pairs straddling the r = 0 pole at scales below the pole branch.

    The pair (s, theta), (s, -theta) is at distance 2s while the images sit
    at 2 psi(s); the ratio tends to |df~(d_r)| at the pole.
    """
    extent = m.profile.pole_branch[2]
    s = extent * np.asarray(fractions, dtype=float)
    theta = np.zeros((s.size, m.n))
    theta[:, 0] = 1.0
    u = eval_tilde(m, s, theta)
    v = eval_tilde(m, s, -theta)
    dt = sphere_chordal_distance(u, v)
    d = 2.0 * s
    return {"s": s.tolist(), "d": d.tolist(), "dt": dt.tolist(), "ratio": (dt / d).tolist(),
            "max_ratio": float(np.max(dt / d))}


def _adaptive_angles(m: EigenMap, bins: int, base: int = 4097, max_rounds: int = 40):
    """Radii whose image angles step by less than half a band width."""
    R = m.profile.R
    r = np.unique(np.concatenate([np.linspace(0.0, R, base), m.scan_radii()]))
    psi = image_angle(m, r)
    width = math.pi / bins
    for _ in range(max_rounds):
        gaps = np.flatnonzero(np.abs(np.diff(psi)) > 0.5 * width)
        if gaps.size == 0:
            break
        mids = 0.5 * (r[gaps] + r[gaps + 1])
        r = np.sort(np.concatenate([r, mids]))
        psi = image_angle(m, r)
    return r, psi


def injectivity_scan(m: EigenMap, resolution: int = 512, grid: int = 4096) -> dict:
    """Empirical injectivity/coverage report.

    f~(r, theta) = (cos psi(r), sin psi(r) theta), so two points can only
    share an image if psi takes a value twice or hits 0 or pi away from the
    matching pole.  The scan therefore works on psi over a dense radial grid:
    the minimum image separation over meridian pairs more than 10 lattice
    spacings apart, and the fraction of ``resolution`` polar bands of S^n
    that the images reach.  The direction theta is carried over unchanged,
    so every band is covered in all directions once it is reached.
    """
    R = m.profile.R
    h = R / grid
    r = np.linspace(0.0, R, grid + 1)
    psi = image_angle(m, r)
    best = math.inf
    chunk = 512
    for start in range(0, r.size, chunk):
        ri = r[start:start + chunk, None]
        pi = psi[start:start + chunk, None]
        far = np.abs(ri - r[None, :]) > 10.0 * h
        if np.any(far):
            best = min(best, float(np.min(np.where(far, np.abs(pi - psi[None, :]), np.inf))))
    # a pole image reached away from its pole collides with that pole's image
    off0 = r > 10.0 * h
    offR = r < R - 10.0 * h
    best = min(best, float(np.min(psi[off0])), float(np.min(math.pi - psi[offR])))
    _, dense = _adaptive_angles(m, resolution)
    bands = np.clip((dense / math.pi * resolution).astype(int), 0, resolution - 1)
    coverage = np.unique(bands).size / resolution
    monotone = bool(np.all(np.diff(psi) > 0.0))
    return {"min_image_separation": best, "coverage": float(coverage), "bands": resolution,
            "psi_monotone": monotone, "lattice_h": h,
            "passed": bool(best > 1e-12 and coverage == 1.0)}


# ---------------------------------------------------------------------------
# sharpness sweep

XI_RULES = ("pole", "square")


def xi_from_rule(eta: float, n: int, rule="pole") -> float:
    """Smoothing parameter for c = 1 - eta.

    'square' is xi = eta^2.  'pole' is xi = eta^(1/alpha) with alpha the
    football exponent at c = 1 - eta, so that the pole-scale Jacobian,
    which behaves like xi^alpha, is of order eta.  A callable is used as is.
    """
    if callable(rule):
        return float(rule(eta))
    if rule == "square":
        return float(eta) ** 2
    if rule == "pole":
        alpha = football_alpha(n, 1.0 - eta)
        return float(eta) ** (1.0 / alpha)
    raise ValueError(f"unknown xi rule {rule!r}; expected one of {XI_RULES}")


@dataclass
class SweepRow:
    eta: float
    c: float
    xi: float
    volume_ratio: float = float("nan")
    lambda_gap: float = float("nan")
    min_radial_jac: float = float("nan")
    inf_ratio: float = float("nan")
    min_jac_r: float = float("nan")
    gradient_sup: float = float("nan")
    claim_margin: float = float("nan")
    pole_ratio: float = float("nan")
    seconds: float = 0.0
    error: str = ""
    extras: dict = field(default_factory=dict, repr=False)

    CSV_COLUMNS = ("eta", "c", "xi", "volume_ratio", "lambda_gap", "min_radial_jac", "inf_ratio")

    @property
    def ok(self) -> bool:
        return not self.error

    def csv_values(self):
        return [getattr(self, k) for k in self.CSV_COLUMNS]

    def payload(self) -> dict:
        out = asdict(self)
        out.pop("extras")
        return out


def sweep_profile(n: int, eta: float, xi: float, grid_size: int = 2048):
    """(unscaled, rescaled) smoothed profiles for c = 1 - eta.

    The wedge is kappa = xi/10, zeta = kappa/20; eta = 0 gives the round
    sphere twice.
    """
    if eta == 0.0:
        prof = make_round(n, grid_size)
        return prof, prof
    kappa = xi / 10.0
    zeta = kappa / 20.0
    base = make_smoothed(n, 1.0 - eta, xi, zeta, kappa, grid_size=grid_size)
    return base, rescale(base, xi)


def sweep_row(n: int, eta: float, xi_rule="pole", sampler: SamplerSpec = SamplerSpec(),
              seed: int = 0, cells: int = 4096, grid_size: int = 2048) -> SweepRow:
    t0 = time.perf_counter()
    xi = 0.0 if eta == 0.0 else xi_from_rule(eta, n, xi_rule)
    row = SweepRow(float(eta), 1.0 - eta, xi)
    try:
        base, prof = sweep_profile(n, eta, xi, grid_size)
        row.volume_ratio = volume(prof) / round_volume(n)
        if eta > 0.0:
            claim = check_claim_inequalities(base, xi)
            row.claim_margin = min(claim["concavity_margin"], claim["gradient_margin"])
        spec = first_eigs(prof, n, cells=cells)
        row.lambda_gap = float(spec.lambda_sorted[n] - n)
        m = build_map(spec, prof)
        row.min_radial_jac, row.min_jac_r = min_radial_jacobian(m)
        row.gradient_sup = gradient_sup(m)
        row.pole_ratio = pole_witness(m)["max_ratio"]
        dist = distortion_scan(prof, m, sampler, seed)
        row.inf_ratio = dist.inf_ratio
        row.extras = {"distortion": dist.payload(), "profile": prof, "map": m}
    except Exception as exc:  # a failed row is reported, the sweep goes on
        row.error = f"{type(exc).__name__}: {exc}"
    row.seconds = time.perf_counter() - t0
    return row


def sharpness_sweep(n: int, etas, xi_rule="pole", sampler: SamplerSpec = SamplerSpec(),
                    seed: int = 0, cells: int = 4096) -> dict:
    """Rows for each eta plus the monotone-trend verdicts over the successful rows."""
    etas = [float(e) for e in etas]
    if not etas:
        raise ValueError("eta list is empty")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta list must be strictly decreasing")
    rows = [sweep_row(n, e, xi_rule, sampler, seed, cells) for e in etas]
    good = [r for r in rows if r.ok]

    def strictly(vals, up):
        return all((b > a) if up else (b < a) for a, b in zip(vals, vals[1:]))

    trends = {
        "volume_ratio_increasing": strictly([r.volume_ratio for r in good], True),
        "lambda_gap_decreasing": strictly([r.lambda_gap for r in good], False),
        "min_radial_jac_decreasing": strictly([r.min_radial_jac for r in good], False),
        "inf_ratio_decreasing": strictly([r.inf_ratio for r in good], False),
    }
    return {"rows": rows, "trends": trends, "failed": len(rows) - len(good),
            "passed": bool(good) and trends["volume_ratio_increasing"]
            and trends["min_radial_jac_decreasing"]}


def write_sweep(rows, csv_path) -> None:
    from .io import write_csv

    write_csv(csv_path, list(SweepRow.CSV_COLUMNS), [r.csv_values() for r in rows])


def write_samples(result: DistortionResult, csv_path) -> None:
    from .io import write_csv

    write_csv(csv_path, ["d", "dt", "ratio"], np.column_stack([result.pairs.d, result.dt, result.ratio]))


# ---------------------------------------------------------------------------
# Gromov-Hausdorff proxies

def eccentricities(profile: WarpProfile, engine: DistanceEngine | None = None, nodes: int = 64):
    """max_q d(p, q) for p on a radial lattice of ``nodes`` + 1 points."""
    engine = engine or DistanceEngine(profile)
    rp = np.linspace(0.0, profile.R, nodes + 1)
    rq = np.linspace(0.0, profile.R, engine.nr + 1)
    tq = np.linspace(0.0, math.pi, engine.nt + 1)
    RQ, TQ = np.meshgrid(rq, tq, indexing="ij")
    ecc = np.empty(rp.size)
    for k, r in enumerate(rp):
        ecc[k] = float(np.max(engine.distance(np.full(RQ.shape, r), RQ, TQ)))
    return rp, ecc


def gh_proxy_report(profile: WarpProfile, spectrum=None, engine: DistanceEngine | None = None,
                    nodes: int = 64) -> dict:
    """rad(M) = min_p max_q d(p, q), the volume ratio, and lambda_{n+1} - n."""
    rp, ecc = eccentricities(profile, engine, nodes)
    i = int(np.argmin(ecc))
    out = {"rad": float(ecc[i]), "rad_center_r": float(rp[i]),
           "volume_ratio": volume(profile) / round_volume(profile.n)}
    if spectrum is not None:
        out["lambda_gap"] = float(spectrum.lambda_sorted[profile.n] - profile.n)
    return out
