"""Radial drift-diffusion dynamics of the oscillator's Glauber P function.

For a phase-symmetric P(r) the mode state obeys
dP/dt = (1/r) d/dr [ (r^2/2) Gamma_c(r) P + (r/4) d/dr (gammaN(r) P) ],
with the displacement-resolved rates supplied by a :class:`RateCurve`.  The
equilibrium distribution follows from a quadrature of the zero-flux condition;
transients are integrated with a conservative finite-volume scheme on
Q = r P (zero-flux boundaries, implicit time stepping, one tridiagonal solve
per step).  The step-rate toy model and its closed-form final excitation live
here as well.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError
from .rates import CSV_FLOAT, RateCurve

NEGATIVITY_TOL = -1e-9


@dataclass(frozen=True)
class RadialDistribution:
    """Radial P function on uniform cell centers, normalised so that
    sum(r * P * dr) = 1."""

    r: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if r.ndim != 1 or len(r) < 4 or r.shape != p.shape:
            raise ValueError("need matching 1-d grids with at least 4 cells")
        dr = np.diff(r)
        if np.any(dr <= 0) or abs(dr.max() - dr.min()) > 1e-9 * dr.mean():
            raise ValueError("cell centers must be uniformly spaced")
        if np.any(p < NEGATIVITY_TOL):
            raise ValueError(f"negative distribution values below {NEGATIVITY_TOL}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)

    @property
    def dr(self):
        return float(self.r[1] - self.r[0])

    @property
    def r_max(self):
        return float(self.r[-1] + 0.5 * self.dr)

    def norm(self):
        return float(np.sum(self.r * self.p) * self.dr)

    @classmethod
    def normalized(cls, r, p):
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        scale = np.sum(r * p) * (r[1] - r[0])
        if not np.isfinite(scale) or scale <= 0:
            raise SolverError("distribution has no positive mass to normalise")
        return cls(r, p / scale)

    def to_csv(self, path, manifest=None):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            fh.write("r,P\n")
            for r, p in zip(self.r, self.p):
                fh.write(f"{CSV_FLOAT.format(r)},{CSV_FLOAT.format(p)}\n")


def uniform_grid(r_max, cells):
    """Cell centers of a uniform radial grid on [0, r_max]."""
    if cells < 4 or r_max <= 0:
        raise ValueError("need r_max > 0 and at least 4 cells")
    dr = r_max / cells
    return (np.arange(cells) + 0.5) * dr


def default_r_max(n_th, eta, curve=None):
    """Domain large enough for the thermal tail, the drive-suppression knee,
    and (when present) the self-oscillation peak."""
    r_max = max(6.0 * math.sqrt(max(n_th, 1.0)), 8.0 / eta if eta > 0 else 0.0)
    if curve is not None:
        r_lase = curve.lasing_radius()
        if r_lase is not None:
            r_max = max(r_max, 1.5 * r_lase)
    return r_max


def moment(dist: RadialDistribution, k: int):
    """k-th radial moment sum(r^k P dr); k = 1 is the norm, k = 3 the mean
    excitation."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return float(np.sum(dist.r**k * dist.p) * dist.dr)


def thermal_dist(n: float, grid) -> RadialDistribution:
    """Thermal P function of mean occupation n on the given cell centers."""
    if n <= 0:
        raise ValueError("mean occupation must be positive")
    grid = np.asarray(grid, dtype=float)
    if grid[-1] < 6.0 * math.sqrt(n):
        raise ValueError(
            f"grid too short for n = {n}: need r_max >= {6.0 * math.sqrt(n):.3g}"
        )
    return RadialDistribution.normalized(grid, np.exp(-(grid**2) / n))


def _exponent_on_grid(curve: RateCurve, grid):
    """Cumulative integral of 2 r Gamma_c / gammaN from 0 to each cell center.

    Trapezoid over the union of the curve's native samples and the target
    points, with the rate ratio interpolated monotone-cubically; accumulated
    before exponentiation so only the shifted exponent is ever exponentiated.
    """
    knots = np.unique(np.concatenate(([0.0], curve.r[curve.r < grid[-1]], grid)))
    integrand = 2.0 * knots * curve.cooling_over_heating_at(knots)
    if not np.all(np.isfinite(integrand)):
        bad = knots[~np.isfinite(integrand)][0]
        raise SolverError(f"rate ratio not finite at r = {bad:.6g}")
    cumulative = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(knots)))
    )
    return np.interp(grid, knots, cumulative)


def steady_p(curve: RateCurve, grid) -> RadialDistribution:
    """Equilibrium radial P function on the given cell centers.

    Zero-flux stationary solution (A / gammaN) * exp(-Int 2 r' Gamma_c/gammaN dr'),
    normalised to unit radial mass.  The curve must cover the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if not curve.covers(grid):
        raise ValueError(
            f"rate curve ends at r = {curve.r_max:.6g} but grid extends to "
            f"{grid[-1]:.6g}"
        )
    heating = curve.heating_at(grid)
    if np.any(heating <= 0) or np.any(curve.heating <= 0):
        raise SolverError("heating rate must be positive everywhere")
    exponent = _exponent_on_grid(curve, grid)
    log_p = -exponent - np.log(heating)
    if not np.all(np.isfinite(log_p)):
        bad = grid[~np.isfinite(log_p)][0]
        raise SolverError(f"equilibrium exponent not finite at r = {bad:.6g}")
    return RadialDistribution.normalized(grid, np.exp(log_p - log_p.max()))


def find_radial_peaks(dist: RadialDistribution, prominence_cells=3):
    """Indices of local maxima exceeding their neighbours within the given
    cell window (boundary cells count as candidates)."""
    p = dist.p
    n = len(p)
    peaks = []
    for i in range(n):
        lo, hi = max(0, i - prominence_cells), min(n, i + prominence_cells + 1)
        window = np.concatenate([p[lo:i], p[i + 1 : hi]])
        if window.size and p[i] > window.max():
            peaks.append(i)
    return peaks


@dataclass(frozen=True)
class TransientResult:
    """Mean-excitation history of a transient run, with optional snapshots."""

    times: np.ndarray
    mean_excitation: np.ndarray
    snapshots: tuple = ()
    t_min: float = 0.0
    n_min: float = 0.0

    def final_excitation(self):
        return float(self.mean_excitation[-1])

    def to_csv(self, path, manifest=None):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            fh.write("t,n\n")
            for t, n in zip(self.times, self.mean_excitation):
                fh.write(f"{CSV_FLOAT.format(t)},{CSV_FLOAT.format(n)}\n")


def _flux_operator(curve: RateCurve, grid):
    """Tridiagonal generator L with dQ/dt = L Q for Q = r P.

    Face fluxes combine arithmetic-mean advection (r^2/2) Gamma_c P and a
    centered difference of (r/4) d(gammaN P)/dr; boundary fluxes vanish, so
    sum(Q) dr is conserved exactly.
    """
    r = grid
    n = len(r)
    dr = r[1] - r[0]
    faces = np.arange(1, n) * dr
    cool = curve.cooling_at(r)
    heat = curve.heating_at(r)
    cool_face = 0.5 * (cool[1:] + cool[:-1])
    # F_j = a_j Q_{j-1} + b_j Q_j at interior face j between cells j-1 and j
    a = (faces**2 / 2 * cool_face / 2 - faces / (4 * dr) * heat[:-1]) / r[:-1]
    b = (faces**2 / 2 * cool_face / 2 + faces / (4 * dr) * heat[1:]) / r[1:]
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    # dQ_i/dt = (F_{i+1} - F_i) / dr with F_0 = F_n = 0
    diag[:-1] += a / dr
    sup[:-1] += b / dr  # coefficient of Q_{i+1} in row i
    diag[1:] -= b / dr
    sub[1:] -= a / dr  # coefficient of Q_{i-1} in row i
    return sub, diag, sup


def evolve_p(
    curve: RateCurve,
    init: RadialDistribution,
    dt: float,
    t_end: float,
    snapshot_every=None,
) -> TransientResult:
    """Integrate the radial drift-diffusion equation from ``init``.

    Implicit first-order stepping on the conserved variable Q = r P; records
    the mean excitation at every step and distribution snapshots on the
    requested cadence.  Raises when P develops negativity beyond the scheme
    tolerance or mass conservation degrades.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    if not curve.covers(init.r):
        raise ValueError("rate curve does not cover the initial grid")
    r = init.r
    dr = init.dr
    sub, diag, sup = _flux_operator(curve, r)
    n = len(r)
    # banded form of (I - dt L)
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * sup[:-1]
    ab[1, :] = 1.0 - dt * diag
    ab[2, :-1] = -dt * sub[1:]

    q = r * init.p
    steps = int(math.ceil(t_end / dt))
    times = np.empty(steps + 1)
    means = np.empty(steps + 1)
    times[0] = 0.0
    means[0] = np.sum(r**3 * init.p) * dr
    mass0 = np.sum(q) * dr
    snapshots = []
    next_snap = snapshot_every if snapshot_every else math.inf
    for k in range(1, steps + 1):
        try:
            q = solve_banded((1, 1), ab, q)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"implicit step failed at t = {k * dt:.6g}: {exc}") from exc
        t = k * dt
        p = q / r
        pmin = p.min()
        if pmin < NEGATIVITY_TOL:
            raise SolverError(
                f"distribution went negative ({pmin:.3e}) at t = {t:.6g}; "
                "refine the grid or reduce dt"
            )
        mass = np.sum(q) * dr
        if abs(mass - mass0) > 1e-6 * mass0:
            raise SolverError(f"mass conservation lost at t = {t:.6g}: {mass:.9f}")
        times[k] = t
        means[k] = np.sum(r**2 * q) * dr
        if t >= next_snap - 1e-12:
            snapshots.append((t, RadialDistribution(r, np.maximum(p, 0.0))))
            next_snap += snapshot_every
    i_min = int(np.argmin(means))
    return TransientResult(
        times, means, tuple(snapshots), float(times[i_min]), float(means[i_min])
    )


def toy_nf(n_ld: float, n_plus: float, r_c: float) -> float:
    """Final excitation of the step-rate model: cooling at the weak-coupling
    rate inside r_c, at the suppressed rate outside, constant heating.

    Closed form of the equilibrium quadrature; the exponential weight
    exp(-r_c^2 / n_ld) underflows to exactly 0 for large r_c, so the result
    saturates at n_ld.
    """
    if n_ld <= 0 or n_plus <= 0 or r_c <= 0:
        raise ValueError("n_ld, n_plus and r_c must be positive")
    x = r_c**2 / n_ld
    w = math.exp(-x) if x < 745.0 else 0.0
    numerator = n_ld**2 + w * (n_plus * (n_plus + r_c**2) - n_ld * (n_ld + r_c**2))
    denominator = n_ld + w * (n_plus - n_ld)
    return numerator / denominator


def toy_transition_scan(n_plus: float, r_c: float, n_ld_grid):
    """Sweep the step-rate final excitation across weak-coupling baselines.

    Shows the crossover from n_f ~ n_ld (suppression negligible,
    n_ld << r_c^2) to n_f ~ n_plus (suppression dominant, n_ld >~ r_c^2).
    """
    return [(float(n_ld), toy_nf(n_ld, n_plus, r_c)) for n_ld in n_ld_grid]


def toy_rate_curve(n_ld, n_plus, r_c, heating=1.0, r_max=None, bracket=1e-9):
    """Step-rate curve realising the toy model for the equilibrium quadrature.

    Cooling jumps from heating/n_ld to heating/n_plus at r_c (sampled with a
    tight bracket so the monotone-cubic interpolation reproduces the step);
    the heating rate is constant.
    """
    if r_max is None:
        r_max = max(8.0 * math.sqrt(n_plus), 2.0 * r_c)
    eps = bracket * r_c
    left = np.linspace(1e-6, r_c - eps, 24)
    right = np.linspace(r_c + eps, r_max, 24)
    r = np.concatenate([left, right])
    cooling = np.where(r < r_c, heating / n_ld, heating / n_plus)
    return RateCurve(r, cooling, np.full_like(r, heating), {"model": "step"})
