"""Cooling and heating rates of the oscillator.

Weak-coupling (Lamb-Dicke) rates follow from the static correlation spectrum
of the qudit; beyond that regime the displacement-resolved collective rates
are assembled from the limit-cycle harmonics V_{-1}(r) and the spectral
harmonics S_0(-nu, r), S_{-2}(-nu, r).  The r -> 0 forms are 0/0 and are
replaced below ``r_floor`` by the analytic linear response plus Richardson
extrapolation.  Also provides the drive-suppression diagnostics (jump radius,
Bessel sideband amplitudes) and the weak-coupling validity criterion.
"""

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import jv

from .errors import ResonanceError, SolverError
from .harmonics import (
    DriveContext,
    N_CEILING_DEFAULT,
    HARMONIC_TOL_DEFAULT,
    solve_harmonics,
    solve_spectral_harmonics,
    spectral_pick,
    v_harmonics,
)
from .levels import OscillatorSpec, QuditSpec, build_reduced, solve_static_steady

CSV_FLOAT = "{:.17g}"
COND_MAX = 1e12


@dataclass(frozen=True)
class LDRates:
    """Weak-coupling spectral values and rate coefficients.

    ``n_ld`` is the predicted final excitation heating/cooling balance; it is
    NaN with ``stable = False`` when the net cooling rate is not positive.
    """

    s_plus: complex
    s_minus: complex
    cooling_rate: float
    heating_rate: float
    n_ld: float
    stable: bool
    convention: str = "lindblad"


def ld_spectral(reduced, sign, nu=1.0) -> complex:
    """Static correlation spectrum S(sign * nu) in the frequency domain.

    Solves the shifted-generator linear system against the static correlation
    source; equals the Laplace transform of the quantum-regression
    correlation function evaluated at -sign * i * nu.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    full_ss = solve_static_steady(reduced)
    bloch = reduced.bloch
    v0 = bloch.Vleft @ full_ss - (bloch.v_row @ full_ss) * full_ss
    src = (reduced.T @ v0)[1:]
    mat = sign * 1j * nu * np.eye(reduced.dim) + reduced.Mt
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise ResonanceError(
            f"shifted generator at {sign:+d} nu is resonant (cond {cond:.3e})"
        )
    return -(spectral_pick(reduced) @ np.linalg.solve(mat, src))


def ld_rates(qudit: QuditSpec, osc: OscillatorSpec, convention="lindblad") -> LDRates:
    """Weak-coupling cooling/heating rates and final excitation.

    The default "lindblad" convention uses the dissipator coefficients
    2 lambda^2 Re S(+-nu); the "text" convention drops the factor 2 and is
    kept for sensitivity studies only.
    """
    if convention not in ("lindblad", "text"):
        raise ValueError("convention must be 'lindblad' or 'text'")
    _, _, reduced = build_reduced(qudit, osc)
    s_plus = ld_spectral(reduced, +1, osc.nu)
    s_minus = ld_spectral(reduced, -1, osc.nu)
    for sign, val in ((+1, s_plus), (-1, s_minus)):
        if val.real < -1e-10:
            warnings.warn(
                f"spectral positivity violated at {sign:+d} nu: Re S = {val.real:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
    factor = 2.0 if convention == "lindblad" else 1.0
    lam2 = osc.coupling**2
    cooling = factor * lam2 * (s_plus.real - s_minus.real) + osc.gamma
    heating = factor * lam2 * s_minus.real + osc.heating_background
    stable = cooling > 0
    n_ld = heating / cooling if stable else math.nan
    return LDRates(s_plus, s_minus, cooling, heating, n_ld, stable, convention)


def default_r_floor(osc: OscillatorSpec):
    """Radius below which the collective-rate quotients switch to the
    linear-response limit (1e-3 in units of the inverse coupling ratio)."""
    if osc.coupling == 0:
        return 0.0
    return 1e-3 / osc.eta


def _small_r_limits(ctx, r_floor, tol, n_ceiling):
    """Analytic V_{-1}/r plus Richardson-extrapolated S_{-2}/r^2 at r -> 0."""
    red = ctx.reduced
    lam, nu = ctx.coupling, ctx.nu
    sig_ss = red.to_reduced(solve_static_steady(red))
    resolvent = np.linalg.solve(
        -1j * nu * np.eye(red.dim) - red.Mt, red.Vt @ sig_ss
    )
    vm1_over_r = -1j * lam * (spectral_pick(red) @ resolvent)

    def s_m2_over_r2(r):
        ctx_r = replace(ctx, r=r)
        bh = solve_harmonics(ctx_r, tol=tol, n_ceiling=n_ceiling)
        sp = solve_spectral_harmonics(ctx_r, bh, -1, tol=tol, n_ceiling=n_ceiling)
        return sp.coefficient(-2) / r**2

    f1 = s_m2_over_r2(r_floor)
    f2 = s_m2_over_r2(2 * r_floor)
    return vm1_over_r, (4.0 * f1 - f2) / 3.0


def collective_rate_parts(
    ctx: DriveContext,
    r,
    r_floor,
    tol=HARMONIC_TOL_DEFAULT,
    n_ceiling=N_CEILING_DEFAULT,
):
    """Qudit contributions to the collective rates at motional amplitude r.

    Returns (cooling_part, heating_part); the full rates add the bare damping
    gamma and the background heating gamma * N_th respectively.
    """
    lam, nu = ctx.coupling, ctx.nu
    if lam == 0.0:
        return 0.0, 0.0
    if r >= r_floor and r > 0.0:
        ctx_r = replace(ctx, r=r)
        bh = solve_harmonics(ctx_r, tol=tol, n_ceiling=n_ceiling)
        sp = solve_spectral_harmonics(ctx_r, bh, -1, tol=tol, n_ceiling=n_ceiling)
        v_m1 = v_harmonics(bh, ctx.reduced).coefficient(-1)
        s_0 = sp.coefficient(0)
        s_m2 = sp.coefficient(-2)
        cooling = (2j * lam * v_m1 / r - 2 * lam**2 * s_m2 / r**2).real
        heating = 2 * lam**2 * (s_0 - s_m2).real
        if not (np.isfinite(cooling) and np.isfinite(heating)):
            raise SolverError(f"non-finite collective rates at r = {r}")
        return cooling, heating
    # linear-response limit of the 0/0 quotients
    vm1_over_r, s_m2_over_r2 = _small_r_limits(ctx, r_floor, tol, n_ceiling)
    ctx_r = replace(ctx, r=r)
    bh = solve_harmonics(ctx_r, tol=tol, n_ceiling=n_ceiling)
    sp = solve_spectral_harmonics(ctx_r, bh, -1, tol=tol, n_ceiling=n_ceiling)
    s_0 = sp.coefficient(0)
    s_m2 = s_m2_over_r2 * r**2
    cooling = (2j * lam * vm1_over_r - 2 * lam**2 * s_m2_over_r2).real
    heating = 2 * lam**2 * (s_0 - s_m2).real
    return cooling, heating


def collective_rates(
    ctx: DriveContext,
    osc: OscillatorSpec,
    r,
    r_floor=None,
    tol=HARMONIC_TOL_DEFAULT,
    n_ceiling=N_CEILING_DEFAULT,
):
    """Collective cooling and heating rates (Gamma_c(r), gammaN(r))."""
    if r < 0:
        raise ValueError("r must be >= 0")
    if r_floor is None:
        r_floor = default_r_floor(osc)
    cooling, heating = collective_rate_parts(ctx, r, r_floor, tol, n_ceiling)
    return osc.gamma + cooling, osc.heating_background + heating


@dataclass(frozen=True)
class RateCurve:
    """Collective rates sampled on an ascending radial grid.

    Carries monotone-cubic interpolants for evaluation between samples (a
    shape-preserving choice: no spurious sign flips of the cooling rate) and
    the provenance of the computation.
    """

    r: np.ndarray
    cooling: np.ndarray
    heating: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        cooling = np.asarray(self.cooling, dtype=float)
        heating = np.asarray(self.heating, dtype=float)
        if r.ndim != 1 or len(r) < 2:
            raise ValueError("need at least two grid points")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radial grid must be strictly increasing")
        if not (np.all(np.isfinite(cooling)) and np.all(np.isfinite(heating))):
            raise ValueError("rates must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "cooling", cooling)
        object.__setattr__(self, "heating", heating)
        object.__setattr__(self, "_cool_i", PchipInterpolator(r, cooling, extrapolate=True))
        object.__setattr__(self, "_heat_i", PchipInterpolator(r, heating, extrapolate=True))
        object.__setattr__(
            self, "_ratio_i", PchipInterpolator(r, cooling / heating, extrapolate=True)
        )

    @property
    def r_max(self):
        return float(self.r[-1])

    def covers(self, r):
        return np.all(np.asarray(r) <= self.r_max * (1 + 1e-12))

    def cooling_at(self, r):
        return self._cool_i(r)

    def heating_at(self, r):
        return self._heat_i(r)

    def cooling_over_heating_at(self, r):
        return self._ratio_i(r)

    def lasing_radius(self):
        """Largest zero crossing of the cooling rate, or None if none exists."""
        sign = np.sign(self.cooling)
        idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        if idx.size == 0:
            return None
        i = idx[-1]
        c0, c1 = self.cooling[i], self.cooling[i + 1]
        return float(self.r[i] + (self.r[i + 1] - self.r[i]) * c0 / (c0 - c1))

    def rows(self):
        return zip(self.r, self.cooling, self.heating)

    def to_csv(self, path, manifest=None):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            fh.write("r,Gamma_c,gammaN\n")
            for r, c, h in self.rows():
                fh.write(",".join(CSV_FLOAT.format(x) for x in (r, c, h)) + "\n")

    def to_json(self, path, manifest=None):
        payload = {
            "columns": ["r", "Gamma_c", "gammaN"],
            "r": list(self.r),
            "Gamma_c": list(self.cooling),
            "gammaN": list(self.heating),
            "provenance": self.provenance,
        }
        if manifest is not None:
            payload["manifest"] = manifest
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("r,"):
                    continue
                rows.append([float(tok) for tok in line.split(",")])
        data = np.array(rows)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def default_r_grid(osc: OscillatorSpec, points=60, r_min=1e-2, r_max=None):
    """Log-spaced radial grid resolving the weak-coupling plateau and the
    drive-suppression knee near 1/(2 eta)."""
    if r_max is None:
        if osc.eta <= 0:
            raise ValueError("need coupling > 0 for the default grid")
        r_max = 6.0 / osc.eta
    return np.geomspace(r_min, r_max, points)


def rate_curve(
    qudit: QuditSpec,
    osc: OscillatorSpec,
    r_grid=None,
    r_floor=None,
    tol=HARMONIC_TOL_DEFAULT,
    n_ceiling=N_CEILING_DEFAULT,
    max_failure_fraction=0.01,
) -> RateCurve:
    """Sample the collective rates over a radial grid.

    Individual point failures are recorded in the provenance; the curve is
    rejected outright when more than ``max_failure_fraction`` of the points
    fail.
    """
    if r_grid is None:
        r_grid = default_r_grid(osc)
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or len(r_grid) < 2:
        raise ValueError("r_grid must hold at least two points")
    if np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be strictly increasing")
    if r_grid[0] < 0:
        raise ValueError("r_grid must be non-negative")
    if r_floor is None:
        r_floor = default_r_floor(osc)

    _, alpha_ss, reduced = build_reduced(qudit, osc)
    ctx = DriveContext(reduced, 0.0, osc.coupling, osc.nu)
    kept_r, cooling, heating, failures = [], [], [], []
    for r in r_grid:
        try:
            cool_q, heat_q = collective_rate_parts(ctx, r, r_floor, tol, n_ceiling)
        except SolverError as exc:
            failures.append({"r": float(r), "error": str(exc)})
            continue
        kept_r.append(r)
        cooling.append(osc.gamma + cool_q)
        heating.append(osc.heating_background + heat_q)
    if len(failures) > max(max_failure_fraction * len(r_grid), 0):
        raise SolverError(
            f"{len(failures)} of {len(r_grid)} rate points failed: "
            + "; ".join(f"r={f['r']}: {f['error']}" for f in failures[:3])
        )
    provenance = {
        "qudit": {
            "layout": qudit.layout,
            "delta1": qudit.delta1,
            "delta2": qudit.delta2,
            "omega1": qudit.omega1,
            "omega2": qudit.omega2,
            "gamma1": qudit.gamma1,
            "gamma2": qudit.gamma2,
        },
        "oscillator": {
            "nu": osc.nu,
            "gamma": osc.gamma,
            "n_th": osc.n_th,
            "coupling": osc.coupling,
        },
        "alpha_ss": [alpha_ss.real, alpha_ss.imag],
        "solver": {"tol": tol, "n_ceiling": n_ceiling, "r_floor": r_floor},
        "failures": failures,
    }
    return RateCurve(np.array(kept_r), np.array(cooling), np.array(heating), provenance)


def jump_radius(eta):
    """Motional amplitude 1/(2 eta) where the drives are Bessel-suppressed
    and weak-excitation cooling breaks down."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return 1.0 / (2.0 * eta)


def sideband_amplitudes(eta, r, n_max):
    """First-kind Bessel amplitudes J_n(2 eta r) of the motional sidebands,
    n = 0..n_max."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if r < 0 or n_max < 0:
        raise ValueError("r and n_max must be >= 0")
    return jv(np.arange(n_max + 1), 2.0 * eta * r)


def mld_criterion(eta, n_ld, threshold=0.3):
    """Weak-coupling validity measure eta * sqrt(n_LD) and whether it is
    below the configured efficiency threshold."""
    if eta < 0 or n_ld < 0:
        raise ValueError("inputs must be >= 0")
    value = eta * math.sqrt(n_ld)
    return value, value < threshold
