"""Dynamic steady state of the harmonically driven qudit.

The classical motion of the oscillator imprints a periodic drive
-2i*coupling*r*cos(nu t) (through the coupling commutator) on the reduced
Bloch dynamics.  This module solves for the Fourier coefficients of the
resulting limit cycle, for the harmonics of the coupling expectation
<V(t)>, and for the harmonics of the two-sided correlation spectrum, using a
matrix continued-fraction recursion over the block-tridiagonal harmonic
hierarchy.  Independent time-domain oracles (ODE integration plus Fourier
projection) are provided for every continued-fraction solve.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, ResonanceError, SolverError
from .levels import ReducedBloch, solve_static_steady

N_CEILING_DEFAULT = 256
HARMONIC_TOL_DEFAULT = 1e-10


@dataclass(frozen=True)
class HarmonicSeries:
    """Fourier coefficients c_n of a nu-periodic quantity, n in [-n_max, n_max].

    ``coeffs[k]`` holds the coefficient of exp(i (k - n_max) nu t); entries
    are scalars or fixed-length complex vectors.
    """

    nu: float
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) % 2 != 1:
            raise ValueError("coefficient array must span -n_max..n_max")

    @property
    def n_max(self):
        return (len(self.coeffs) - 1) // 2

    @property
    def is_scalar(self):
        return self.coeffs.ndim == 1

    def coefficient(self, n):
        """c_n, zero outside the stored span."""
        if abs(n) > self.n_max:
            shape = self.coeffs.shape[1:]
            return np.zeros(shape, dtype=complex) if shape else 0.0 + 0.0j
        return self.coeffs[n + self.n_max]

    def evaluate(self, t):
        """Sum_n c_n exp(i n nu t) at scalar or array times."""
        t = np.asarray(t, dtype=float)
        n = np.arange(-self.n_max, self.n_max + 1)
        phases = np.exp(1j * self.nu * np.outer(t, n))
        out = phases @ self.coeffs
        return out if t.ndim else out[0] if out.ndim else complex(out)


def _trim_zero_tails(coeffs):
    n_max = (len(coeffs) - 1) // 2
    flat = coeffs.reshape(len(coeffs), -1)
    while n_max > 0:
        if np.any(flat[0] != 0) or np.any(flat[-1] != 0):
            break
        coeffs, flat = coeffs[1:-1], flat[1:-1]
        n_max -= 1
    return coeffs


def series_product(a: HarmonicSeries, b: HarmonicSeries) -> HarmonicSeries:
    """Pointwise product of two nu-periodic series as a coefficient convolution.

    The result spans every index sum n = i + j of the factors; exact-zero
    boundary coefficients are trimmed.  One factor may be vector valued.
    """
    if a.nu != b.nu:
        raise ValueError("fundamental frequencies differ")
    if not a.is_scalar and not b.is_scalar:
        raise ValueError("at most one factor may be vector valued")
    if not a.is_scalar:
        a, b = b, a
    n_out = a.n_max + b.n_max
    shape = (2 * n_out + 1,) + b.coeffs.shape[1:]
    out = np.zeros(shape, dtype=complex)
    for i, ca in enumerate(a.coeffs):
        if ca == 0:
            continue
        out[i : i + len(b.coeffs)] += ca * b.coeffs
    return HarmonicSeries(a.nu, _trim_zero_tails(out))


@dataclass(frozen=True)
class DriveContext:
    """Reduced qudit dynamics under harmonic classical motion of amplitude r."""

    reduced: ReducedBloch
    r: float
    coupling: float
    nu: float = 1.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("motional amplitude r must be >= 0")
        if self.nu <= 0:
            raise ValueError("drive frequency must be positive")

    @property
    def drive_amplitude(self):
        return self.coupling * self.r


def _solve_checked(mat, rhs, harmonic):
    try:
        out = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise ResonanceError(f"singular system at harmonic {harmonic}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ResonanceError(f"resonance at harmonic {harmonic}")
    return out


def _continued_fraction_solve(a_mat, b_mat, sources, n_max, nu):
    """Solve (i n nu - A) x_n + B (x_{n+1} + x_{n-1}) = s_n with x_n = 0
    beyond |n| = n_max.

    Transfer matrices and particular vectors are built from the outermost
    harmonic inward; the n = 0 block is solved directly and the wings are
    propagated back outward.  Returns {n: x_n}.
    """
    dim = a_mat.shape[0]
    eye = np.eye(dim, dtype=complex)
    zero = np.zeros(dim, dtype=complex)

    k_up, g_up = {}, {}
    k_dn, g_dn = {}, {}
    k_next = np.zeros((dim, dim), dtype=complex)
    g_next = zero
    for n in range(n_max, 0, -1):
        d_mat = 1j * n * nu * eye - a_mat + b_mat @ k_next
        k_up[n] = _solve_checked(d_mat, -b_mat, n)
        g_up[n] = _solve_checked(d_mat, sources.get(n, zero) - b_mat @ g_next, n)
        k_next, g_next = k_up[n], g_up[n]
    k_up_1, g_up_1 = k_next, g_next

    k_next = np.zeros((dim, dim), dtype=complex)
    g_next = zero
    for n in range(n_max, 0, -1):
        d_mat = -1j * n * nu * eye - a_mat + b_mat @ k_next
        k_dn[n] = _solve_checked(d_mat, -b_mat, -n)
        g_dn[n] = _solve_checked(d_mat, sources.get(-n, zero) - b_mat @ g_next, -n)
        k_next, g_next = k_dn[n], g_dn[n]
    k_dn_1, g_dn_1 = k_next, g_next

    if n_max == 0:
        x0 = _solve_checked(-a_mat, sources.get(0, zero), 0)
        return {0: x0}

    d0 = -a_mat + b_mat @ (k_up_1 + k_dn_1)
    x0 = _solve_checked(d0, sources.get(0, zero) - b_mat @ (g_up_1 + g_dn_1), 0)

    out = {0: x0}
    prev = x0
    for n in range(1, n_max + 1):
        prev = k_up[n] @ prev + g_up[n]
        out[n] = prev
    prev = x0
    for n in range(1, n_max + 1):
        prev = k_dn[n] @ prev + g_dn[n]
        out[-n] = prev
    return out


def _pack(solution, nu, n_max, trim=False):
    dim = len(solution[0])
    coeffs = np.zeros((2 * n_max + 1, dim), dtype=complex)
    for n, vec in solution.items():
        coeffs[n + n_max] = vec
    if trim:
        # drop numerically irrelevant wings so downstream spans stay tight
        norms = np.linalg.norm(coeffs, axis=1)
        cut = norms.max() * 1e-20
        keep = n_max
        while keep > 0 and norms[n_max - keep] < cut and norms[n_max + keep] < cut:
            keep -= 1
        lo, hi = n_max - keep, n_max + keep
        coeffs = coeffs[lo : hi + 1]
    return HarmonicSeries(nu, coeffs)


def _initial_span(drive_over_nu):
    # Bessel content of the drive extends to ~ argument + soft tail
    x = abs(drive_over_nu)
    return max(8, int(np.ceil(2 * x + 8 * (1 + x) ** (1.0 / 3.0))))


def _adaptive_cf(a_mat, b_mat, sources, nu, extract, tol, n_ceiling, start):
    """Double the harmonic span until the extracted quantities settle."""
    n = min(start, n_ceiling)
    prev = None
    trace = []
    while True:
        sol = _continued_fraction_solve(a_mat, b_mat, sources, n, nu)
        cur = extract(sol)
        if prev is not None:
            scale = np.linalg.norm(cur)
            change = np.linalg.norm(cur - prev) / (scale if scale > 0 else 1.0)
            trace.append((n, change))
            if change < tol:
                return sol, n, trace
        prev = cur
        if n >= n_ceiling:
            raise ConvergenceError(
                f"harmonic span ceiling {n_ceiling} reached without convergence",
                trace=trace or [(n, float("nan"))],
            )
        n = min(2 * n, n_ceiling)


def solve_harmonics(
    ctx: DriveContext,
    n_max=None,
    tol=HARMONIC_TOL_DEFAULT,
    n_ceiling=N_CEILING_DEFAULT,
) -> HarmonicSeries:
    """Fourier coefficients of the driven qudit's limit cycle (reduced
    coordinates).

    With ``n_max`` given the block hierarchy is truncated there and solved
    once; otherwise the span doubles until the n = 0 and n = -1 coefficients
    change by less than ``tol`` in relative norm, up to ``n_ceiling``.
    """
    red = ctx.reduced
    amp = 1j * ctx.drive_amplitude * red.Vt
    sources = {0: red.u}
    if n_max is not None:
        sol = _continued_fraction_solve(red.Mt, amp, sources, n_max, ctx.nu)
        return _pack(sol, ctx.nu, n_max)
    if ctx.drive_amplitude == 0.0:
        sol = _continued_fraction_solve(red.Mt, amp, sources, 0, ctx.nu)
        return _pack(sol, ctx.nu, 0)

    def extract(sol):
        return np.concatenate([sol[0], sol[-1]])

    start = _initial_span(2 * ctx.drive_amplitude / ctx.nu)
    sol, n, _ = _adaptive_cf(red.Mt, amp, sources, ctx.nu, extract, tol, n_ceiling, start)
    return _pack(sol, ctx.nu, n, trim=True)


def full_harmonics(series: HarmonicSeries, reduced: ReducedBloch) -> HarmonicSeries:
    """Map reduced-coordinate harmonics back to the full operator basis.

    The trace component is 1 for the static harmonic and 0 otherwise.
    """
    n_max = series.n_max
    dim_full = reduced.Tinv.shape[0]
    coeffs = np.zeros((2 * n_max + 1, dim_full), dtype=complex)
    for k in range(2 * n_max + 1):
        trace = 1.0 if k == n_max else 0.0
        coeffs[k] = reduced.to_full(series.coeffs[k], trace=trace)
    return HarmonicSeries(series.nu, coeffs)


def v_harmonics(series: HarmonicSeries, reduced: ReducedBloch) -> HarmonicSeries:
    """Harmonics V_n of the coupling expectation <V(t)> along the limit cycle."""
    full = full_harmonics(series, reduced)
    return HarmonicSeries(series.nu, full.coeffs @ reduced.bloch.v_row)


def _spectral_sources(bloch_series: HarmonicSeries, reduced: ReducedBloch):
    """Harmonics of the correlation source <sigma (V - <V(t)>) rho(t)> in
    reduced coordinates.

    The product <V(t)> rho(t) of two periodic series is formed by
    coefficient convolution; the trace component of the result vanishes
    identically and is dropped by the reduction.
    """
    full = full_harmonics(bloch_series, reduced)
    v_ser = HarmonicSeries(full.nu, full.coeffs @ reduced.bloch.v_row)
    left = HarmonicSeries(full.nu, full.coeffs @ reduced.bloch.Vleft.T)
    cross = series_product(v_ser, full)
    n_out = max(left.n_max, cross.n_max)
    dim_full = full.coeffs.shape[1]
    vals = np.zeros((2 * n_out + 1, dim_full), dtype=complex)
    vals[n_out - left.n_max : n_out + left.n_max + 1] += left.coeffs
    vals[n_out - cross.n_max : n_out + cross.n_max + 1] -= cross.coeffs
    reduced_vals = vals @ reduced.T.T
    return {n - n_out: reduced_vals[n, 1:] for n in range(2 * n_out + 1)}


def spectral_pick(reduced):
    # scalar spectrum = coupling functional applied to the reconstructed
    # (zero-trace) spectral vector
    return (reduced.bloch.v_row @ reduced.Tinv)[1:]


def solve_spectral_harmonics(
    ctx: DriveContext,
    bloch_series: HarmonicSeries,
    sign: int,
    n_max=None,
    tol=HARMONIC_TOL_DEFAULT,
    n_ceiling=N_CEILING_DEFAULT,
) -> HarmonicSeries:
    """Harmonics S_n(sign * nu) of the displaced-frame correlation spectrum.

    Solves the harmonic hierarchy of the quantum-regression spectral vector,
    sourced at every harmonic by the correlation source built from the limit
    cycle (the source term is what keeps the static limit finite and must not
    be dropped).  Returns the scalar series extracted with the layout's
    component-picking functional.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    red = ctx.reduced
    dim = red.dim
    a_mat = sign * 1j * ctx.nu * np.eye(dim) + red.Mt
    b_mat = 1j * ctx.drive_amplitude * red.Vt
    sources = _spectral_sources(bloch_series, red)
    pick = spectral_pick(red)

    def scalars(sol, span):
        n = min(span, max(abs(k) for k in sol))
        return np.array([pick @ sol.get(k, np.zeros(dim)) for k in range(-n, n + 1)])

    if n_max is not None:
        sol = _continued_fraction_solve(a_mat, b_mat, sources, n_max, ctx.nu)
        return HarmonicSeries(ctx.nu, scalars(sol, n_max))
    if ctx.drive_amplitude == 0.0:
        sol = _continued_fraction_solve(a_mat, b_mat, sources, 0, ctx.nu)
        return HarmonicSeries(ctx.nu, scalars(sol, 0))

    start = max(_initial_span(2 * ctx.drive_amplitude / ctx.nu), bloch_series.n_max)
    if start >= n_ceiling:
        start = max(8, n_ceiling // 2)  # keep doubling headroom
    sol, n, _ = _adaptive_cf(
        a_mat,
        b_mat,
        sources,
        ctx.nu,
        lambda sol: scalars(sol, 2),
        tol,
        n_ceiling,
        start,
    )
    return HarmonicSeries(ctx.nu, scalars(sol, n))


# ---------------------------------------------------------------------------
# time-domain oracles


def slowest_relaxation_rate(reduced: ReducedBloch):
    """Smallest nonzero decay rate of the reduced generator."""
    rates = -np.real(np.linalg.eigvals(reduced.Mt))
    rates = rates[rates > 1e-12]
    if rates.size == 0:
        raise SolverError("no relaxation: dissipation absent")
    return float(rates.min())


def default_settle_periods(ctx: DriveContext):
    """Settle for 50 relaxation times of the slowest mode, at least 500 periods."""
    period = 2 * np.pi / ctx.nu
    t_relax = 50.0 / slowest_relaxation_rate(ctx.reduced)
    return max(500, int(np.ceil(t_relax / period)))


def _project(times, values, nu, n_max):
    # values: (n_times, dim) or (n_times,)
    n = np.arange(-n_max, n_max + 1)
    phases = np.exp(-1j * nu * np.outer(n, times))
    return phases @ values / len(times)


def _integrate(rhs, t_span, y0, rtol, atol, t_eval=None):
    sol = solve_ivp(
        rhs, t_span, y0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval
    )
    if not sol.success:
        raise SolverError(f"time-domain integration failed: {sol.message}")
    return sol


def _bloch_rhs_matrix(ctx, t):
    red = ctx.reduced
    return red.Mt - 2j * ctx.drive_amplitude * np.cos(ctx.nu * t) * red.Vt


def _bloch_period_map(ctx, rtol, atol):
    """One-period affine propagator (Phi, b) of the reduced Bloch dynamics."""
    red = ctx.reduced
    dim = red.dim
    period = 2 * np.pi / ctx.nu

    def rhs(t, y):
        z = y.reshape(dim, dim + 1)
        out = _bloch_rhs_matrix(ctx, t) @ z
        out[:, dim] += red.u
        return out.ravel()

    y0 = np.hstack([np.eye(dim, dtype=complex), np.zeros((dim, 1), complex)])
    sol = _integrate(rhs, (0.0, period), y0.ravel(), rtol, atol)
    z = sol.y[:, -1].reshape(dim, dim + 1)
    return z[:, :dim], z[:, dim]


def _settled_state(ctx, settle_periods, rtol, atol):
    red = ctx.reduced
    x = red.to_reduced(solve_static_steady(red))
    phi, b = _bloch_period_map(ctx, rtol, atol)
    for _ in range(settle_periods):
        x = phi @ x + b
    return x


def _sample_times(ctx, sample_periods, points_per_period):
    period = 2 * np.pi / ctx.nu
    count = sample_periods * points_per_period
    return np.arange(count) * (period / points_per_period), count


def oracle_harmonics(
    ctx: DriveContext,
    settle_periods=None,
    sample_periods=64,
    points_per_period=64,
    n_max=12,
    rtol=1e-11,
    atol=1e-13,
) -> HarmonicSeries:
    """Limit-cycle harmonics from time-domain integration, independent of the
    continued-fraction solver.

    Starts from the static steady state, advances through ``settle_periods``
    drive periods (via the one-period propagator of the same equation of
    motion), then integrates continuously over ``sample_periods`` and
    Fourier-projects onto integer harmonics.
    """
    red = ctx.reduced
    if settle_periods is None:
        settle_periods = default_settle_periods(ctx)
    x = _settled_state(ctx, settle_periods, rtol, atol)
    times, _ = _sample_times(ctx, sample_periods, points_per_period)

    def rhs(t, y):
        return _bloch_rhs_matrix(ctx, t) @ y + red.u

    sol = _integrate(rhs, (0.0, times[-1]), x, rtol, atol, t_eval=times)
    return HarmonicSeries(ctx.nu, _project(times, sol.y.T, ctx.nu, n_max))


def oracle_spectral_harmonics(
    ctx: DriveContext,
    sign: int,
    settle_periods=None,
    sample_periods=64,
    points_per_period=64,
    n_max=12,
    rtol=1e-11,
    atol=1e-13,
) -> HarmonicSeries:
    """Spectral harmonics S_n(sign * nu) from time-domain integration.

    The spectral vector is integrated jointly with the limit cycle, its
    source evaluated pointwise from the concurrent qudit trajectory, so the
    result shares nothing with the continued-fraction path or the series
    convolution of the sources.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    red = ctx.reduced
    dim = red.dim
    if settle_periods is None:
        settle_periods = default_settle_periods(ctx)
    x = _settled_state(ctx, settle_periods, rtol, atol)
    period = 2 * np.pi / ctx.nu
    v_row, v_left = red.bloch.v_row, red.bloch.Vleft
    t_mat, t_inv = red.T, red.Tinv
    shift = sign * 1j * ctx.nu * np.eye(dim)

    def source(sig_reduced):
        full = t_inv @ np.concatenate(([1.0], sig_reduced))
        vec = v_left @ full - (v_row @ full) * full
        return (t_mat @ vec)[1:]

    def rhs_map(t, y):
        mat = _bloch_rhs_matrix(ctx, t)
        sig = y[:dim]
        z = y[dim:].reshape(dim, dim + 1)
        out_sig = mat @ sig + red.u
        out_z = (mat + shift) @ z
        out_z[:, dim] += source(sig)
        return np.concatenate([out_sig, out_z.ravel()])

    y0 = np.concatenate(
        [x, np.hstack([np.eye(dim, dtype=complex), np.zeros((dim, 1), complex)]).ravel()]
    )
    sol = _integrate(rhs_map, (0.0, period), y0, rtol, atol)
    z = sol.y[dim:, -1].reshape(dim, dim + 1)
    phi_s, b_s = z[:, :dim], z[:, dim]
    s_vec = np.zeros(dim, dtype=complex)
    for _ in range(settle_periods):
        s_vec = phi_s @ s_vec + b_s

    times, _ = _sample_times(ctx, sample_periods, points_per_period)

    def rhs_joint(t, y):
        mat = _bloch_rhs_matrix(ctx, t)
        sig, svec = y[:dim], y[dim:]
        return np.concatenate(
            [mat @ sig + red.u, (mat + shift) @ svec + source(sig)]
        )

    sol = _integrate(
        rhs_joint, (0.0, times[-1]), np.concatenate([x, s_vec]), rtol, atol, t_eval=times
    )
    vec_harmonics = _project(times, sol.y[dim:].T, ctx.nu, n_max)
    return HarmonicSeries(ctx.nu, vec_harmonics @ spectral_pick(red))
