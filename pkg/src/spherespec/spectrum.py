"""Low Laplace spectrum of a warped sphere by separation of variables.

An eigenfunction u(r) Y_k(theta) with Y_k a degree-k spherical harmonic on
S^{n-1} reduces -Delta to the radial Sturm-Liouville problem

    (phi^{n-1} u')' - mu phi^{n-3} u = -lam phi^{n-1} u,   mu = k (k + n - 2).

Each channel is discretized by a cell-centred finite-volume scheme (flux
phi^{n-1} at faces, no-flux closure at both poles) giving a symmetric
tridiagonal pencil, solved by Sturm bisection plus inverse iteration.  Two
grids are combined by Richardson extrapolation.  Optionally each eigenpair is
polished by shooting the radial ODE from both poles (see ``radial.py``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .profiles import WarpProfile

__all__ = [
    "RadialProblem",
    "TridiagonalSystem",
    "Mode",
    "SpectrumResult",
    "ChannelCoverageError",
    "SolverError",
    "sphere_mode_eigenvalue",
    "harmonic_multiplicity",
    "assemble_radial",
    "solve_lowest",
    "solve_channel",
    "richardson",
    "first_eigs",
    "normalize_eigenfunctions",
    "lichnerowicz_gap_report",
    "football_alpha",
    "football_lambda",
    "write_spectrum",
]


class SolverError(RuntimeError):
    """Eigen-solver failure (non-convergence or degenerate output)."""


class ChannelCoverageError(SolverError):
    """A channel outside k <= 2 could hold one of the first n+2 eigenvalues."""


def sphere_mode_eigenvalue(n: int, k: int) -> int:
    """Eigenvalue k(k+n-2) of -Delta on degree-k harmonics of S^{n-1}."""
    if n < 2 or k < 0:
        raise ValueError("need n >= 2 and k >= 0")
    return k * (k + n - 2)


def harmonic_multiplicity(n: int, k: int) -> int:
    """Dimension of degree-k spherical harmonics on S^{n-1} (in R^n)."""
    if n < 2 or k < 0:
        raise ValueError("need n >= 2 and k >= 0")
    if k == 0:
        return 1
    if k == 1:
        return n
    return math.comb(n + k - 1, k) - math.comb(n + k - 3, k - 2)


def football_alpha(n: int, c: float) -> float:
    """Exponent alpha with u1 = sin^{1+alpha} r on the football."""
    return 0.5 * (-n + math.sqrt(n * n - 4.0 * (n - 1) * (1.0 - 1.0 / c**2)))


def football_lambda(n: int, c: float, k: int = 1) -> float:
    """Lowest eigenvalue of the degree-k channel on the football.

    Near a cone point the solution behaves like sin^beta r with
    beta (beta + n - 2) = mu / c^2, and sin^beta r is then exact with
    eigenvalue beta (beta + n - 1).  For k = 1 this equals alpha + 1 + (n-1)/c^2.
    """
    mu = sphere_mode_eigenvalue(n, k)
    beta = 0.5 * (-(n - 2) + math.sqrt((n - 2) ** 2 + 4.0 * mu / c**2))
    return beta * (beta + n - 1)


@dataclass(frozen=True)
class RadialProblem:
    """One angular channel of the Laplacian on a warped profile."""

    profile: WarpProfile
    mu: float
    edges: np.ndarray

    @classmethod
    def uniform(cls, profile: WarpProfile, k: int, cells: int):
        mu = sphere_mode_eigenvalue(profile.n, k)
        return cls(profile, float(mu), np.linspace(0.0, profile.R, int(cells) + 1))

    @property
    def n(self):
        return self.profile.n

    @property
    def grid(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


@dataclass(frozen=True)
class TridiagonalSystem:
    """Stiffness K (diag, off) and lumped mass M of the discrete channel."""

    centers: np.ndarray
    widths: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    mass: np.ndarray

    def standard_form(self):
        """Diagonal and off-diagonal of M^{-1/2} K M^{-1/2}."""
        s = 1.0 / np.sqrt(self.mass)
        return self.diag * s * s, self.off * s[:-1] * s[1:]


def assemble_radial(problem: RadialProblem) -> TridiagonalSystem:
    """Finite-volume discretization of the self-adjoint radial operator."""
    edges = np.asarray(problem.edges, dtype=float)
    if edges.size - 1 < 64:
        raise ValueError("grid too coarse: need at least 64 cells")
    n = problem.n
    x = 0.5 * (edges[1:] + edges[:-1])
    w = np.diff(edges)
    phi_c = problem.profile.evaluate(x)[0]
    phi_f = problem.profile.evaluate(edges[1:-1])[0]
    if np.any(phi_c <= 0.0) or np.any(phi_f <= 0.0):
        raise ValueError("phi must be positive at all cells and faces")
    flux = phi_f ** (n - 1) / np.diff(x)
    mass = phi_c ** (n - 1) * w
    diag = problem.mu * phi_c ** (n - 3) * w
    diag[:-1] += flux
    diag[1:] += flux
    return TridiagonalSystem(x, w, diag, -flux, mass)


def solve_lowest(system: TridiagonalSystem, count: int, tol: float = 1e-13):
    """The ``count`` smallest eigenpairs of K u = lam M u.

    Bisection on Sturm sequences locates eigenvalues to absolute tolerance
    ``tol`` (well below relative 1e-12 for the O(1) values of interest);
    inverse iteration supplies eigenvectors.  Vectors are returned in the
    original variables, normalized to unit mass-weighted mean square and
    signed positive at the first cell.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    d, e = system.standard_form()
    try:
        lam, y = eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1),
                                  lapack_driver="stebz", tol=tol)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"tridiagonal eigensolver did not converge: {exc}") from exc
    u = y / np.sqrt(system.mass)[:, None]
    total = system.mass.sum()
    for j in range(u.shape[1]):
        norm = math.sqrt(np.dot(system.mass, u[:, j] ** 2) / total)
        if not np.isfinite(norm) or norm == 0.0:
            raise SolverError("zero-norm eigenvector")
        u[:, j] /= norm
        if u[0, j] < 0.0:
            u[:, j] = -u[:, j]
    return lam, u


def richardson(coarse, fine, order: int = 2):
    """Extrapolate values with error ~ h^order from grids h and h/2."""
    f = 2.0**order
    return (f * np.asarray(fine) - np.asarray(coarse)) / (f - 1.0)


def solve_channel(profile: WarpProfile, k: int, count: int, cells: int, extrapolate: bool = True):
    """Lowest ``count`` eigenvalues of channel k (Richardson over cells, 2*cells)."""
    sys_n = assemble_radial(RadialProblem.uniform(profile, k, cells))
    lam_n, u_n = solve_lowest(sys_n, count)
    if not extrapolate:
        return lam_n, sys_n, u_n
    sys_2n = assemble_radial(RadialProblem.uniform(profile, k, 2 * cells))
    lam_2n, _ = solve_lowest(sys_2n, count)
    return richardson(lam_n, lam_2n), sys_n, u_n


@dataclass
class Mode:
    """One radial eigenpair in channel k; ``index`` counts from 0 within the channel."""

    k: int
    index: int
    lam: float
    multiplicity: int
    centers: np.ndarray
    u: np.ndarray
    lam_grid: float = float("nan")
    radial: object = None

    @property
    def label(self):
        return (self.k, self.index)


@dataclass
class SpectrumResult:
    n: int
    profile_id: str
    modes: list
    lambda_sorted: np.ndarray
    labels: list
    normalization: dict = field(default_factory=dict)
    cells: int = 0

    def mode(self, k: int, index: int) -> Mode:
        for m in self.modes:
            if m.k == k and m.index == index:
                return m
        raise KeyError((k, index))

    @property
    def first_radial(self) -> Mode:
        """Radial part of f_1 (first non-constant mode of the k = 0 channel)."""
        return self.mode(0, 1)

    @property
    def harmonic_radial(self) -> Mode:
        """Shared radial part of f_2 ... f_{n+1} (ground state of k = 1)."""
        return self.mode(1, 0)


# eigenpairs computed per channel: k = 0 includes the constant mode
_CHANNEL_COUNTS = {0: 3, 1: 2, 2: 1}


def first_eigs(profile: WarpProfile, n: int | None = None, cells: int = 4096,
               extrapolate: bool = True, refine=True) -> SpectrumResult:
    """First n+2 nonzero eigenvalues of -Delta with channel labels.

    Channels k = 0, 1, 2 are solved; the k = 2 channel certifies that no
    higher channel intrudes below lambda_{n+2}.  With ``refine`` the two
    eigenpairs entering the eigenmap (first non-constant k = 0 mode and the
    k = 1 ground state) are polished by ODE shooting and carry callable
    radial functions; ``refine="all"`` polishes every mode.  Other values
    are the Richardson-extrapolated grid eigenvalues.
    """
    n = profile.n if n is None else int(n)
    if n != profile.n:
        raise ValueError("dimension mismatch between argument and profile")
    modes = []
    for k, count in _CHANNEL_COUNTS.items():
        lam, system, u = solve_channel(profile, k, count, cells, extrapolate)
        for j in range(count):
            if k == 0 and j == 0:
                continue  # constants
            modes.append(Mode(k=k, index=j, lam=float(lam[j]),
                              multiplicity=harmonic_multiplicity(n, k),
                              centers=system.centers, u=u[:, j], lam_grid=float(lam[j])))
    if refine:
        from .radial import refine_mode

        for m in modes:
            if refine == "all" or m.label in ((0, 1), (1, 0)):
                m.radial = refine_mode(profile, m)
                m.lam = m.radial.lam
    expanded = []
    for m in modes:
        expanded.extend([(m.lam, m.k, m.index)] * m.multiplicity)
    expanded.sort(key=lambda t: (t[0], t[1], t[2]))
    lam_sorted = np.array([t[0] for t in expanded[: n + 2]])
    labels = [(t[1], t[2]) for t in expanded[: n + 2]]
    head = sorted(labels[: n + 1])
    if head != [(0, 1)] + [(1, 0)] * n:
        raise ChannelCoverageError(f"unexpected channel content among the first n+1 eigenvalues: {head}")
    # the k = 3 ground state must stay above lambda_{n+2}; it dominates the k = 2 ground state
    if not lam_sorted[n + 1] - lam_sorted[n] > 0.0:
        raise ChannelCoverageError("no spectral gap between lambda_{n+1} and lambda_{n+2}")
    if not lam_sorted[0] > 0.0:
        raise SolverError("first eigenvalue is not positive")
    res = SpectrumResult(n=n, profile_id=profile.profile_id, modes=modes,
                         lambda_sorted=lam_sorted, labels=labels, cells=cells)
    return res


def _weighted_mean(profile, values_fn, points=8193):
    """Volume average of a radial function, by Simpson between branch joints."""
    from scipy.integrate import simpson

    from .profiles import _segments

    num = den = 0.0
    for lo, hi in _segments(profile):
        r = np.linspace(lo, hi, points)
        w = profile.evaluate(r)[0] ** (profile.n - 1)
        num += simpson(values_fn(r) * w, x=r)
        den += simpson(w, x=r)
    return num / den


def normalize_eigenfunctions(result: SpectrumResult, profile: WarpProfile) -> SpectrumResult:
    """Record the constants A, B giving each f_i a volume-average square of 1/(n+1).

    f_1 = A u0(r) and f_{1+j} = B u1(r) theta_j, with theta_j the ambient
    coordinates of S^{n-1}; the angular average of theta_j^2 is 1/n.
    """
    n = result.n
    m0, m1 = result.first_radial, result.harmonic_radial
    if m0.radial is not None:
        s0 = _weighted_mean(profile, lambda r: m0.radial(r) ** 2)
        s1 = _weighted_mean(profile, lambda r: m1.radial(r) ** 2)
    else:
        w = profile.evaluate(m0.centers)[0] ** (n - 1)
        s0 = np.dot(w, m0.u**2) / w.sum()
        s1 = np.dot(w, m1.u**2) / w.sum()
    if s0 <= 0.0 or s1 <= 0.0:
        raise SolverError("zero-norm eigenfunction")
    A = math.sqrt(1.0 / ((n + 1) * s0))
    B = math.sqrt(n / ((n + 1) * s1))
    result.normalization = {
        "A": A,
        "B": B,
        "mean_f1_sq": A * A * s0,
        "mean_fj_sq": B * B * s1 / n,
    }
    return result


def lichnerowicz_gap_report(result: SpectrumResult, profile: WarpProfile, tol: float = 1e-6) -> dict:
    from .profiles import ricci_min

    n = result.n
    lam = result.lambda_sorted
    if lam.size < n + 2:
        raise ValueError("need at least n+2 eigenvalues")
    rmin = ricci_min(profile)
    gap1 = float(lam[0] - n)
    return {
        "lambda1_gap": gap1,
        "lambda_n1_gap": float(lam[n] - n),
        "ricci_min": rmin,
        "violation": bool(rmin >= n - 1 - tol and gap1 < -tol),
    }


def spectrum_payload(result: SpectrumResult) -> dict:
    return {
        "profile_id": result.profile_id,
        "modes": [{"k": m.k, "lambda": m.lam, "multiplicity": m.multiplicity} for m in result.modes],
        "lambda_sorted": [float(v) for v in result.lambda_sorted],
    }


def write_spectrum(result: SpectrumResult, json_path, csv_path) -> None:
    """JSON summary plus radial eigenfunctions u0, u1 sampled at cell centres."""
    from .io import write_csv, write_json

    write_json(json_path, spectrum_payload(result))
    m0, m1 = result.first_radial, result.harmonic_radial
    r = m0.centers
    if m0.radial is not None:
        u0, u1 = m0.radial(r), m1.radial(r)
    else:
        u0, u1 = m0.u, m1.u
    write_csv(csv_path, ["r", "u0", "u1"], np.column_stack([r, u0, u1]))
