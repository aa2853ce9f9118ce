"""Level-system construction, Bloch matrices, trace reduction, steady states."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from phonon_chill.levels import (
    OscillatorSpec,
    QuditSpec,
    basis_order,
    bloch_to_density,
    build_bloch_matrices,
    build_level_system,
    build_reduced,
    effective_two_level,
    reduce_trace,
    solve_static_steady,
    solve_steady_displacement,
    transform_matrices,
)
from phonon_chill.errors import SingularSystemError


def fig3_ladder(gamma1=2.0, omega2=np.sqrt(0.4)):
    return QuditSpec.ladder(0.8, 0.0, 0.6, omega2, gamma1, 0.0)


def fig4_lambda():
    return QuditSpec.lambda_system(-50.0, -50.0, 1.0, 1.0, 10.0, 10.0)


def random_spec(rng):
    layout = rng.choice(["ladder", "lambda", "two_level"])
    rates = rng.uniform(0.1, 20.0, size=2)
    deltas = rng.uniform(-5.0, 5.0, size=2)
    drives = rng.uniform(0.1, 2.0, size=2)
    if layout == "two_level":
        return QuditSpec.two_level(deltas[0], drives[0], rates[0])
    if layout == "ladder":
        return QuditSpec.ladder(deltas[0], deltas[1], drives[0], drives[1], *rates)
    return QuditSpec.lambda_system(deltas[0], deltas[1], drives[0], drives[1], *rates)


def lindblad_superoperator(system):
    """Independent column-stacking superoperator, element by element."""
    d = system.d
    eye = np.eye(d)
    h = system.hamiltonian
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, op in system.jumps:
        anti = op.conj().T @ op
        sup += rate * (
            np.kron(op.conj(), op)
            - 0.5 * np.kron(eye, anti)
            - 0.5 * np.kron(anti.T, eye)
        )
    return sup


def bloch_matrix_from_superoperator(system):
    """Map the vec-space superoperator into expectation-value coordinates."""
    d = system.d
    order = basis_order(d)
    sup = lindblad_superoperator(system)
    # <sigma_(m,n)> = rho[n, m] = vec(rho)[m*d + n] in column-stacking order
    perm = np.zeros((d * d, d * d))
    for i, (m, n) in enumerate(order):
        perm[i, m * d + n] = 1.0
    return perm @ sup @ np.linalg.inv(perm)


class TestBuildLevelSystem:
    def test_ladder_fig3_entries(self):
        sys_ = build_level_system(fig3_ladder())
        h = sys_.hamiltonian
        assert h[1, 1] == pytest.approx(0.8)
        assert h[2, 2] == pytest.approx(0.8)
        assert h[1, 0] == pytest.approx(0.3)
        assert h[0, 1] == pytest.approx(0.3)
        assert h[1, 2] == pytest.approx(np.sqrt(0.4) / 2)
        assert h[2, 1] == pytest.approx(np.sqrt(0.4) / 2)
        v = np.zeros((3, 3))
        v[1, 1] = 1.0
        assert np.allclose(sys_.coupling_op, v)

    def test_lambda_drive_free_diagonal(self):
        spec = QuditSpec.lambda_system(0.7, -0.3, 0.0, 0.0, 1.0, 0.5)
        sys_ = build_level_system(spec)
        assert np.allclose(sys_.hamiltonian, np.diag([-0.7, 0.3, 0.0]))
        assert np.allclose(sys_.coupling_op, np.diag([-1.0, 1.0, 0.0]))

    def test_generic_two_level_accepted(self):
        delta, omega, gamma = 0.5, 0.4, 1.2
        h = np.array([[0, omega / 2], [omega / 2, delta]], dtype=complex)
        v = np.diag([0.0, 1.0])
        jump = np.array([[0, 1], [0, 0]], dtype=complex)
        spec = QuditSpec.generic(h, v, [(gamma, jump)])
        sys_ = build_level_system(spec)
        assert sys_.d == 2
        assert np.allclose(sys_.hamiltonian, h)

    def test_non_hermitian_generic_rejected(self):
        h = np.array([[0, 1.0], [0, 0]], dtype=complex)
        with pytest.raises(ValueError, match="Hermitian"):
            QuditSpec.generic(h, np.eye(2), [])

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            QuditSpec.ladder(0.8, 0.0, 0.6, 0.5, -1.0, 0.0)
        with pytest.raises(ValueError, match=">= 0"):
            QuditSpec.generic(np.eye(2), np.eye(2), [(-0.1, np.eye(2))])


class TestBlochMatrices:
    @pytest.mark.parametrize("seed", range(4))
    def test_trace_row_annihilated(self, seed):
        spec = random_spec(np.random.default_rng(seed))
        bloch = build_bloch_matrices(build_level_system(spec))
        assert np.linalg.norm(bloch.tau @ bloch.M) < 1e-10

    def test_lambda_coherence_commutator_row(self):
        # [|g><e|, V] = 2 |g><e| for V = -|g><g| + |e><e|
        bloch = build_bloch_matrices(build_level_system(fig4_lambda()))
        i_ge = bloch.basis.index((0, 1))
        row = bloch.Vmat[i_ge]
        expected = np.zeros_like(row)
        expected[i_ge] = 2.0
        assert np.allclose(row, expected, atol=1e-14)

    def test_two_level_optical_bloch_rates(self):
        gamma = 1.3
        spec = QuditSpec.two_level(0.0, 0.0, gamma)
        bloch = build_bloch_matrices(build_level_system(spec))
        i_ee = bloch.basis.index((1, 1))
        i_ge = bloch.basis.index((0, 1))
        assert bloch.M[i_ee, i_ee] == pytest.approx(-gamma)
        assert bloch.M[i_ge, i_ge] == pytest.approx(-gamma / 2)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_independent_superoperator(self, seed):
        spec = random_spec(np.random.default_rng(100 + seed))
        sys_ = build_level_system(spec)
        bloch = build_bloch_matrices(sys_)
        oracle = bloch_matrix_from_superoperator(sys_)
        assert np.allclose(bloch.M, oracle, atol=1e-12)

    def test_v_row_values(self):
        bloch = build_bloch_matrices(build_level_system(fig4_lambda()))
        i_gg = bloch.basis.index((0, 0))
        i_ee = bloch.basis.index((1, 1))
        expected = np.zeros(9, dtype=complex)
        expected[i_gg] = -1.0
        expected[i_ee] = 1.0
        assert np.allclose(bloch.v_row, expected)


class TestReduceTrace:
    def test_paper_transform_rows_d3(self):
        t, tinv = transform_matrices(3)
        order = basis_order(3)
        i_gg, i_ee, i_dd = order.index((0, 0)), order.index((1, 1)), order.index((2, 2))
        trace_row = np.zeros(9)
        trace_row[[i_gg, i_ee, i_dd]] = 1.0
        assert np.allclose(t[i_gg], trace_row)
        row2 = np.zeros(9)
        row2[i_gg], row2[i_ee] = -1.0, 1.0
        assert np.allclose(t[i_ee], row2)
        row5 = np.zeros(9)
        row5[i_ee], row5[i_dd] = 1.0, -1.0
        assert np.allclose(t[i_dd], row5)
        assert np.allclose(t @ tinv, np.eye(9), atol=1e-14)

    @pytest.mark.parametrize("seed", range(4))
    def test_round_trip_preserves_trace(self, seed):
        rng = np.random.default_rng(200 + seed)
        spec = random_spec(rng)
        bloch = build_bloch_matrices(build_level_system(spec))
        d = bloch.d
        # random density matrix
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        full = np.array([rho[n, m] for m, n in basis_order(d)])
        reduced = reduce_trace(bloch, 0.0, 0.0)
        back = reduced.to_full(reduced.to_reduced(full), trace=1.0)
        assert np.allclose(back, full, atol=1e-12)
        assert np.isclose(np.trace(bloch_to_density(back, d)), 1.0, atol=1e-14)

    def test_alpha_independent_when_alpha_zero(self):
        bloch = build_bloch_matrices(build_level_system(fig3_ladder()))
        r0 = reduce_trace(bloch, 0.0, 0.0)
        r1 = reduce_trace(bloch, 0.0, 0.3)
        assert np.allclose(r0.Mt, r1.Mt)

    def test_reduced_steady_matches_nullspace_of_m(self):
        bloch = build_bloch_matrices(build_level_system(fig3_ladder()))
        reduced = reduce_trace(bloch, 0.0, 0.0)
        full = solve_static_steady(reduced)
        # oracle: null space of the singular full generator, trace-normalised
        _, _, vh = np.linalg.svd(bloch.M)
        null = vh[-1].conj()
        null /= bloch.tau @ null
        assert np.allclose(full, null, atol=1e-10)


class TestStaticSteady:
    def test_ladder_lower_drive_off_decays_to_ground(self):
        # upper transition still drains e through d, so everything pools in g
        spec = QuditSpec.ladder(0.8, 0.0, 0.0, 0.7, 2.0, 0.0)
        bloch = build_bloch_matrices(build_level_system(spec))
        full = solve_static_steady(reduce_trace(bloch))
        rho = bloch_to_density(full, 3)
        assert rho[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rho - np.diag([1.0, 0.0, 0.0]), 0.0, atol=1e-12)

    def test_fully_undriven_ladder_is_degenerate(self):
        # with both drives off the e population is conserved; the steady
        # state is not unique and the solver must refuse
        spec = QuditSpec.ladder(0.8, 0.0, 0.0, 0.0, 2.0, 0.0)
        bloch = build_bloch_matrices(build_level_system(spec))
        with pytest.raises(SingularSystemError):
            solve_static_steady(reduce_trace(bloch))

    @pytest.mark.parametrize(
        "delta,omega,gamma", [(0.0, 0.5, 1.0), (0.8, 0.6, 0.2), (-1.2, 2.0, 3.0)]
    )
    def test_driven_two_level_closed_form(self, delta, omega, gamma):
        spec = QuditSpec.two_level(delta, omega, gamma)
        bloch = build_bloch_matrices(build_level_system(spec))
        full = solve_static_steady(reduce_trace(bloch))
        rho = bloch_to_density(full, 2)
        expected = (omega**2 / 4) / (delta**2 + gamma**2 / 4 + omega**2 / 2)
        assert rho[1, 1].real == pytest.approx(expected, rel=1e-10)

    def test_lambda_two_photon_resonance_dark_state(self):
        spec = QuditSpec.lambda_system(-5.0, -5.0, 0.8, 1.1, 4.0, 4.0)
        sys_ = build_level_system(spec)
        bloch = build_bloch_matrices(sys_)
        reduced = reduce_trace(bloch)
        full = solve_static_steady(reduced)
        residual = np.linalg.norm(
            reduced.Mt @ reduced.to_reduced(full) + reduced.u
        )
        assert residual < 1e-12 * np.linalg.norm(reduced.u)
        # oracle: long-time integration of the density matrix
        def rhs(t, y):
            rho = y.reshape(3, 3)
            h = sys_.hamiltonian
            out = -1j * (h @ rho - rho @ h)
            for rate, op in sys_.jumps:
                opd = op.conj().T
                anti = opd @ op
                out += rate * (op @ rho @ opd - 0.5 * (anti @ rho + rho @ anti))
            return out.ravel()

        rho0 = np.diag([0.4, 0.6, 0.0]).astype(complex)
        sol = solve_ivp(rhs, [0, 4000.0], rho0.ravel(), rtol=1e-11, atol=1e-13)
        rho_inf = sol.y[:, -1].reshape(3, 3)
        v_ode = np.trace(sys_.coupling_op @ rho_inf)
        v_lin = bloch.v_row @ full
        assert v_lin == pytest.approx(v_ode, abs=1e-8)

    def test_zero_dissipation_rejected(self):
        spec = QuditSpec.generic(
            np.diag([0.0, 1.0]), np.diag([0.0, 1.0]), []
        )
        bloch = build_bloch_matrices(build_level_system(spec))
        with pytest.raises(SingularSystemError):
            solve_static_steady(reduce_trace(bloch))

    @pytest.mark.parametrize("seed", range(8))
    def test_physicality_of_random_steady_states(self, seed):
        spec = random_spec(np.random.default_rng(300 + seed))
        bloch = build_bloch_matrices(build_level_system(spec))
        full = solve_static_steady(reduce_trace(bloch))
        d = bloch.d
        rho = bloch_to_density(full, d)
        # hermiticity pairing and population bounds
        assert np.allclose(rho, rho.conj().T, atol=1e-10)
        pops = np.diag(rho).real
        assert np.all(pops > -1e-10) and np.all(pops < 1 + 1e-10)
        assert np.sum(pops) == pytest.approx(1.0, abs=1e-10)


class TestSteadyDisplacement:
    def test_zero_coupling(self):
        bloch = build_bloch_matrices(build_level_system(fig3_ladder()))
        osc = OscillatorSpec(gamma=1e-4, n_th=10, coupling=0.0)
        assert solve_steady_displacement(bloch, osc) == 0.0

    def test_fig3_magnitude_and_balance(self):
        bloch = build_bloch_matrices(build_level_system(fig3_ladder()))
        osc = OscillatorSpec(gamma=5e-5, n_th=100, coupling=0.1)
        alpha = solve_steady_displacement(bloch, osc)
        reduced = reduce_trace(bloch, alpha, osc.coupling)
        v = bloch.v_row @ solve_static_steady(reduced)
        expected_mag = osc.eta * abs(v) / abs(1 + 1j * osc.gamma / 2)
        assert abs(alpha) == pytest.approx(expected_mag, rel=1e-10)
        residual = abs((1j + osc.gamma / 2) * alpha + 1j * osc.coupling * v)
        assert residual < 1e-10

    @pytest.mark.parametrize("seed", range(6))
    def test_fixed_point_is_stationary(self, seed):
        spec = random_spec(np.random.default_rng(400 + seed))
        bloch = build_bloch_matrices(build_level_system(spec))
        osc = OscillatorSpec(gamma=2e-4, n_th=50, coupling=0.1)
        alpha = solve_steady_displacement(bloch, osc)
        v = bloch.v_row @ solve_static_steady(
            reduce_trace(bloch, alpha, osc.coupling)
        )
        again = -1j * osc.coupling * v / (1j * osc.nu + osc.gamma / 2)
        assert abs(again - alpha) < 1e-12 * max(1.0, abs(alpha))


class TestHelpers:
    def test_oscillator_from_quality(self):
        osc = OscillatorSpec.from_quality(20000, n_th=100, coupling=0.1)
        assert osc.gamma == pytest.approx(5e-5)
        assert osc.eta == pytest.approx(0.1)

    def test_effective_two_level_mapping(self):
        for gamma1, omega2 in [(2.0, np.sqrt(0.4)), (20.0, 2.0)]:
            tls = effective_two_level(fig3_ladder(gamma1, omega2))
            assert tls.gamma1 == pytest.approx(0.2)
            assert tls.delta1 == pytest.approx(0.8)
            assert tls.omega1 == pytest.approx(0.6)

    def test_build_reduced_pipeline(self):
        bloch, alpha, reduced = build_reduced(
            fig3_ladder(), OscillatorSpec(gamma=5e-5, n_th=100, coupling=0.1)
        )
        assert reduced.alpha_ss == alpha
        assert reduced.Mt.shape == (8, 8)
