"""Few-level systems and their Bloch-space representation.

Builds the Hamiltonian, the mode-coupling operator and the jump operators of
the standard three-level cooling configurations (and generic d-level systems),
converts the Lindblad dynamics into a linear equation of motion for the vector
of elementary-operator expectation values, removes the conserved-trace
direction that makes that generator singular, and solves for the static
steady state together with the self-consistent steady displacement of the
oscillator.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import ConvergenceError, SingularSystemError, SolverError

HERMITICITY_TOL = 1e-12
COND_MAX = 1e12

LAYOUTS = ("two_level", "ladder", "lambda", "generic")


def _as_matrix(a, d, name):
    m = np.asarray(a, dtype=complex)
    if m.shape != (d, d):
        raise ValueError(f"{name} must be a {d}x{d} matrix, got shape {m.shape}")
    return m


def _check_hermitian(m, name):
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > HERMITICITY_TOL:
        raise ValueError(f"{name} is not Hermitian (max deviation {dev:.3e})")


@dataclass(frozen=True)
class QuditSpec:
    """Parameters of the internal d-level system.

    Frequencies are in units of the oscillator frequency.  For the built-in
    three-level layouts the levels are ordered (g, e, d); ``hamiltonian``,
    ``coupling_op`` and ``jumps`` are only used by the generic layout.
    """

    layout: str
    d: int
    delta1: float = 0.0
    delta2: float = 0.0
    omega1: float = 0.0
    omega2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    hamiltonian: np.ndarray | None = None
    coupling_op: np.ndarray | None = None
    jumps: tuple = ()

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.d < 2:
            raise ValueError("need at least two levels")
        for name in ("gamma1", "gamma2"):
            if getattr(self, name) < 0:
                raise ValueError(f"decay rate {name} must be >= 0")
        if self.layout == "generic":
            if self.hamiltonian is None or self.coupling_op is None:
                raise ValueError("generic layout requires hamiltonian and coupling_op")
            h = _as_matrix(self.hamiltonian, self.d, "hamiltonian")
            v = _as_matrix(self.coupling_op, self.d, "coupling_op")
            _check_hermitian(h, "hamiltonian")
            _check_hermitian(v, "coupling_op")
            for rate, op in self.jumps:
                if rate < 0:
                    raise ValueError("jump rate must be >= 0")
                _as_matrix(op, self.d, "jump operator")
        elif self.layout == "two_level":
            if self.d != 2:
                raise ValueError("two_level layout requires d = 2")
        else:
            if self.d != 3:
                raise ValueError(f"{self.layout} layout requires d = 3")

    @classmethod
    def ladder(cls, delta1, delta2, omega1, omega2, gamma1, gamma2):
        """Ladder configuration g -- e -- d with decay out of the top level."""
        return cls("ladder", 3, delta1, delta2, omega1, omega2, gamma1, gamma2)

    @classmethod
    def lambda_system(cls, delta1, delta2, omega1, omega2, gamma1, gamma2):
        """Two metastable states g, e Raman-coupled through a lossy level d."""
        return cls("lambda", 3, delta1, delta2, omega1, omega2, gamma1, gamma2)

    @classmethod
    def two_level(cls, delta, omega, gamma):
        """Driven two-level system with spontaneous decay e -> g."""
        return cls("two_level", 2, delta1=delta, omega1=omega, gamma1=gamma)

    @classmethod
    def generic(cls, hamiltonian, coupling_op, jumps):
        """Arbitrary d-level system from explicit operators.

        ``jumps`` is an iterable of ``(rate, operator)`` pairs entering the
        dissipator as ``rate * D[operator]``.
        """
        h = np.asarray(hamiltonian, dtype=complex)
        return cls(
            "generic",
            h.shape[0],
            hamiltonian=h,
            coupling_op=np.asarray(coupling_op, dtype=complex),
            jumps=tuple((float(r), np.asarray(op, dtype=complex)) for r, op in jumps),
        )


@dataclass(frozen=True)
class OscillatorSpec:
    """Oscillator mode: frequency, bare damping, bath occupation, coupling.

    All rates are expressed in the same frequency unit as ``nu`` (the scenario
    configuration normalises that unit to 1).
    """

    nu: float = 1.0
    gamma: float = 0.0
    n_th: float = 0.0
    coupling: float = 0.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("oscillator frequency must be positive")
        if self.gamma < 0 or self.n_th < 0 or self.coupling < 0:
            raise ValueError("gamma, n_th and coupling must be >= 0")

    @classmethod
    def from_quality(cls, q, n_th, coupling, nu=1.0):
        """Build from a Q factor, with gamma = nu / Q."""
        if q <= 0:
            raise ValueError("Q factor must be positive")
        return cls(nu=nu, gamma=nu / q, n_th=n_th, coupling=coupling)

    @property
    def eta(self):
        """Coupling-to-frequency ratio lambda / nu."""
        return self.coupling / self.nu

    @property
    def heating_background(self):
        """Background heating rate gamma * N_th."""
        return self.gamma * self.n_th


@dataclass(frozen=True)
class LevelSystem:
    """Concrete operators of a level system: H, the mode-coupling operator V,
    and the Lindblad jump list as (rate, operator) pairs."""

    hamiltonian: np.ndarray
    coupling_op: np.ndarray
    jumps: tuple
    d: int


def _sigma(d, m, n):
    op = np.zeros((d, d), dtype=complex)
    op[m, n] = 1.0
    return op


def build_level_system(spec: QuditSpec) -> LevelSystem:
    """Construct H, V and the jump operators for a qudit specification.

    Level order for the three-level layouts is (g, e, d) = (0, 1, 2); the
    drives enter as Omega/2 off-diagonal elements and both three-level
    layouts dissipate through gamma1 * D[|g><d|] + gamma2 * D[|e><d|].
    """
    d = spec.d
    if spec.layout == "generic":
        h = _as_matrix(spec.hamiltonian, d, "hamiltonian")
        v = _as_matrix(spec.coupling_op, d, "coupling_op")
        _check_hermitian(h, "hamiltonian")
        _check_hermitian(v, "coupling_op")
        jumps = tuple((r, _as_matrix(op, d, "jump operator")) for r, op in spec.jumps)
        for rate, _ in jumps:
            if rate < 0:
                raise ValueError("jump rate must be >= 0")
        return LevelSystem(h, v, jumps, d)

    if spec.layout == "two_level":
        h = np.zeros((2, 2), dtype=complex)
        h[1, 1] = spec.delta1
        h[0, 1] = h[1, 0] = spec.omega1 / 2.0
        v = _sigma(2, 1, 1)
        jumps = ((spec.gamma1, _sigma(2, 0, 1)),)
        return LevelSystem(h, v, jumps, 2)

    h = np.zeros((3, 3), dtype=complex)
    if spec.layout == "ladder":
        h[1, 1] = spec.delta1
        h[2, 2] = spec.delta1 + spec.delta2
        h[1, 0] = h[0, 1] = spec.omega1 / 2.0
        h[1, 2] = h[2, 1] = spec.omega2 / 2.0
        v = _sigma(3, 1, 1)
    else:  # lambda
        h[0, 0] = -spec.delta1
        h[1, 1] = -spec.delta2
        h[0, 2] = h[2, 0] = spec.omega1 / 2.0
        h[1, 2] = h[2, 1] = spec.omega2 / 2.0
        v = -_sigma(3, 0, 0) + _sigma(3, 1, 1)
    jumps = ((spec.gamma1, _sigma(3, 0, 2)), (spec.gamma2, _sigma(3, 1, 2)))
    return LevelSystem(h, v, jumps, 3)


def effective_two_level(spec: QuditSpec) -> QuditSpec:
    """Two-level system approximating a Ladder system at weak excitation.

    Adiabatic elimination of the fast-decaying top level maps the Ladder onto
    a driven two-level system with the same detuning and drive and an
    effective linewidth omega2**2 / gamma1.  This mapping is an approximation,
    not an identity; use it for cross-checks, or supply explicit effective
    parameters instead.
    """
    if spec.layout != "ladder":
        raise ValueError("effective_two_level expects a ladder spec")
    if spec.gamma1 <= 0:
        raise ValueError("ladder spec needs gamma1 > 0 for adiabatic elimination")
    return QuditSpec.two_level(spec.delta1, spec.omega1, spec.omega2**2 / spec.gamma1)


def basis_order(d):
    """Index pairs (m, n) of the elementary operators |m><n| in basis order.

    The order grows level by level: each new level k contributes its
    population |k><k| followed by the coherence pairs |j><k|, |k><j| for all
    previous levels j.  For d = 3 this yields
    (gg, ee, ge, eg, dd, gd, dg, ed, de).
    """
    order = []
    for k in range(d):
        order.append((k, k))
        for j in range(k):
            order.append((j, k))
            order.append((k, j))
    return order


def _lindblad_apply(rho, h, jumps):
    out = -1j * (h @ rho - rho @ h)
    for rate, op in jumps:
        if rate == 0.0:
            continue
        opd = op.conj().T
        anti = opd @ op
        out += rate * (op @ rho @ opd - 0.5 * (anti @ rho + rho @ anti))
    return out


@dataclass(frozen=True)
class BlochSystem:
    """Expectation-value dynamics of a level system.

    ``M`` generates d<sigma>/dt for the vector of elementary-operator
    expectation values, ``Vmat`` is the commutator action of the coupling
    operator, ``Vleft`` its left-multiplication action (needed for
    correlation sources), ``v_row`` the functional giving <V>, and ``tau``
    the trace functional.  Trace conservation makes ``M`` singular; see
    :func:`reduce_trace`.
    """

    basis: tuple
    M: np.ndarray
    Vmat: np.ndarray
    Vleft: np.ndarray
    v_row: np.ndarray
    tau: np.ndarray
    d: int
    system: LevelSystem = field(repr=False)


def build_bloch_matrices(system: LevelSystem) -> BlochSystem:
    """Assemble the expectation-value matrices of a level system.

    Columns are generated by applying the Lindblad generator and the coupling
    commutator to each basis operator's adjoint, which realises
    Tr{sigma_i L rho} = sum_j M_ij <sigma_j> for every density matrix.
    """
    d = system.d
    order = basis_order(d)
    n = d * d
    ops = [_sigma(d, m, k) for m, k in order]
    m_mat = np.zeros((n, n), dtype=complex)
    v_comm = np.zeros((n, n), dtype=complex)
    v_left = np.zeros((n, n), dtype=complex)
    v = system.coupling_op
    for j, (m, k) in enumerate(order):
        rho_j = _sigma(d, k, m)  # adjoint of basis op j; <sigma_i> of it is delta_ij
        lrho = _lindblad_apply(rho_j, system.hamiltonian, system.jumps)
        vrho = v @ rho_j
        comm_rho = vrho - rho_j @ v
        for i, op in enumerate(ops):
            m_mat[i, j] = np.trace(op @ lrho)
            v_comm[i, j] = np.trace(op @ comm_rho)
            v_left[i, j] = np.trace(op @ vrho)
    v_row = np.array([v[m, k] for m, k in order], dtype=complex)
    tau = np.array([1.0 if m == k else 0.0 for m, k in order], dtype=complex)
    return BlochSystem(tuple(order), m_mat, v_comm, v_left, v_row, tau, d, system)


def transform_matrices(d):
    """Trace-first change of basis on the expectation-value vector.

    The first transformed component is the trace; for d = 3 the remaining
    population combinations are (-gg + ee) and (ee - dd), for other d the
    population at slot k (k >= 1) maps to sigma_kk - sigma_00.  Coherences
    are untouched.  Returns (T, T^-1).
    """
    order = basis_order(d)
    n = d * d
    idx = {pair: i for i, pair in enumerate(order)}
    t = np.eye(n, dtype=complex)
    pop = [idx[(k, k)] for k in range(d)]
    t[pop[0], :] = 0.0
    for k in range(d):
        t[pop[0], pop[k]] = 1.0
    if d == 3:
        t[pop[1], :] = 0.0
        t[pop[1], pop[0]] = -1.0
        t[pop[1], pop[1]] = 1.0
        t[pop[2], :] = 0.0
        t[pop[2], pop[1]] = 1.0
        t[pop[2], pop[2]] = -1.0
    else:
        for k in range(1, d):
            t[pop[k], :] = 0.0
            t[pop[k], pop[0]] = -1.0
            t[pop[k], pop[k]] = 1.0
    if abs(np.linalg.det(t)) < 1e-12:
        raise SingularSystemError("trace transform is singular")
    return t, np.linalg.inv(t)


@dataclass(frozen=True)
class ReducedBloch:
    """Trace-reduced dynamics around a fixed steady displacement.

    ``Mt`` is the reduced generator including the static displacement shift
    -2i * coupling * Re(alpha_ss) * Vmat, ``Vt`` the reduced commutator
    action and ``u`` the constant drive restoring the unit trace.  ``T`` and
    its inverse map between full and reduced coordinates (the first
    transformed component is the trace and is dropped).
    """

    Mt: np.ndarray
    Vt: np.ndarray
    u: np.ndarray
    T: np.ndarray
    Tinv: np.ndarray
    alpha_ss: complex
    coupling: float
    bloch: BlochSystem = field(repr=False)

    @property
    def dim(self):
        return self.Mt.shape[0]

    def to_full(self, reduced_vec, trace=1.0):
        """Map a reduced vector back to full expectation-value coordinates."""
        ext = np.concatenate(([trace], reduced_vec))
        return self.Tinv @ ext

    def to_reduced(self, full_vec):
        return (self.T @ full_vec)[1:]


def reduce_trace(bloch: BlochSystem, alpha_ss=0.0, coupling=0.0) -> ReducedBloch:
    """Remove the conserved-trace direction from the Bloch dynamics.

    The generator is shifted by the static part of the displacement drive,
    -2i * coupling * Re(alpha_ss) * Vmat, before the change of basis.  The
    drive vector ``u`` comes from the bare generator only; the coupling
    commutator annihilates the trace direction, so no drive term is lost.
    """
    if not np.isfinite(alpha_ss):
        raise ValueError("alpha_ss must be finite")
    t, tinv = transform_matrices(bloch.d)
    shifted = bloch.M - 2j * coupling * np.real(alpha_ss) * bloch.Vmat
    mt = (t @ shifted @ tinv)[1:, 1:]
    vt = (t @ bloch.Vmat @ tinv)[1:, 1:]
    u = (t @ bloch.M @ tinv)[1:, 0]
    return ReducedBloch(mt, vt, u, t, tinv, complex(alpha_ss), float(coupling), bloch)


def bloch_to_density(full_vec, d):
    """Density matrix from a full expectation-value vector (<|m><n|> = rho_nm)."""
    rho = np.zeros((d, d), dtype=complex)
    for i, (m, n) in enumerate(basis_order(d)):
        rho[n, m] = full_vec[i]
    return rho


def solve_static_steady(reduced: ReducedBloch) -> np.ndarray:
    """Static steady state as a full expectation-value vector.

    Solves the reduced fixed-point equation and reconstructs the unit-trace
    vector.  Rejects ill-conditioned generators (dark-state degeneracy or
    vanishing dissipation) and unphysical reconstructions.
    """
    cond = np.linalg.cond(reduced.Mt)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularSystemError(
            "steady-state generator is singular or near-singular", condition=cond
        )
    sig = np.linalg.solve(reduced.Mt, -reduced.u)
    unorm = np.linalg.norm(reduced.u)
    residual = np.linalg.norm(reduced.Mt @ sig + reduced.u)
    if residual > 1e-12 * max(unorm, 1e-300):
        raise SolverError(f"steady-state residual {residual:.3e} exceeds tolerance")
    full = reduced.to_full(sig, trace=1.0)
    d = reduced.bloch.d
    pops = np.array([full[i] for i, (m, n) in enumerate(basis_order(d)) if m == n])
    if np.max(np.abs(pops.imag)) > 1e-10:
        raise SolverError("steady-state populations are not real")
    if np.any(pops.real < -1e-10) or np.any(pops.real > 1 + 1e-10):
        raise SolverError("steady-state populations outside [0, 1]")
    if abs(np.sum(pops.real) - 1.0) > 1e-10:
        raise SolverError("steady-state populations do not sum to 1")
    return full


def solve_steady_displacement(
    bloch: BlochSystem,
    osc: OscillatorSpec,
    tol=1e-12,
    max_iter=200,
) -> complex:
    """Self-consistent steady displacement of the oscillator.

    Fixed point of alpha -> -i * coupling * <V>_ss(alpha) / (i nu + gamma/2),
    iterated from alpha = 0 with 0.5 damping once the plain iteration starts
    to oscillate.  The returned value satisfies the steady balance
    (i nu + gamma/2) alpha + i coupling <V>_ss = 0 to 1e-10.
    """
    denom = 1j * osc.nu + osc.gamma / 2.0
    lam = osc.coupling
    if lam == 0.0:
        return 0.0 + 0.0j

    def v_expect(alpha):
        reduced = reduce_trace(bloch, alpha, lam)
        full = solve_static_steady(reduced)
        return bloch.v_row @ full

    alpha = 0.0 + 0.0j
    prev_step = None
    for _ in range(max_iter):
        target = -1j * lam * v_expect(alpha) / denom
        step = target - alpha
        if abs(step) < tol * max(1.0, abs(target)):
            residual = abs(denom * target + 1j * lam * v_expect(target))
            if residual > 1e-10:
                raise ConvergenceError(
                    f"steady displacement balance residual {residual:.3e}",
                    trace=[(abs(target), residual)],
                )
            return target
        # halve the step when the iteration overshoots back and forth
        if prev_step is not None and abs(step) > abs(prev_step):
            alpha = alpha + 0.5 * step
        else:
            alpha = target
        prev_step = step
    raise ConvergenceError(
        f"steady displacement did not converge in {max_iter} iterations "
        f"(last iterate {alpha}, last step {abs(step):.3e})",
        trace=[(max_iter, abs(step))],
    )


def build_reduced(qudit: QuditSpec, osc: OscillatorSpec):
    """Convenience pipeline: level system -> Bloch matrices -> steady
    displacement -> trace-reduced dynamics.  Returns (bloch, alpha_ss,
    reduced)."""
    bloch = build_bloch_matrices(build_level_system(qudit))
    alpha_ss = solve_steady_displacement(bloch, osc)
    reduced = reduce_trace(bloch, alpha_ss, osc.coupling)
    return bloch, alpha_ss, reduced
