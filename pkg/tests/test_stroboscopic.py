import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenogrover.model import grover_fidelity_closed_form, make_params
from zenogrover.stroboscopic import (
    accumulate_process,
    align_global_phase,
    approx_step_operator,
    distance_from_unitarity,
    exact_step_operator,
    expm_2x2_hermitian,
    final_distance,
    run_protocol,
    subspace_basis_matrices,
)


class TestBlockMatrices:
    def test_explicit_entries_at_n4(self):
        p = make_params(4.0, 1.0)
        blocks = subspace_basis_matrices(p)
        r3 = 0.25 * math.sqrt(3)
        np.testing.assert_allclose(
            blocks.h_up, [[-1.25, -r3], [-r3, -0.75]], atol=1e-15
        )
        np.testing.assert_allclose(
            blocks.h_down, [[-0.75, r3], [r3, 0.75]], atol=1e-15
        )

    def test_small_overlap_limit(self):
        p = make_params(1e18, 2.0)
        blocks = subspace_basis_matrices(p)
        np.testing.assert_allclose(blocks.h_up, -np.eye(2), atol=2 * p.x)

    def test_driving_terms_cancel_in_sum(self):
        p = make_params(64.0, 1.0, epsilon=0.07)
        blocks = subspace_basis_matrices(p)
        expected = -2.0 * (1.0 + p.epsilon) * np.array([[1.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(blocks.h_up + blocks.h_down, expected, atol=1e-14)

    def test_hermitian(self):
        p = make_params(16.0, 1.0, epsilon=0.3)
        blocks = subspace_basis_matrices(p)
        assert np.max(np.abs(blocks.h_up - blocks.h_up.T)) < 1e-14
        assert np.max(np.abs(blocks.h_down - blocks.h_down.T)) < 1e-14

    def test_up_block_spectrum_is_minus_one_plus_minus_x(self):
        # cross-checked two ways: numeric eigensolve and the characteristic
        # polynomial lambda^2 + 2 lambda + (1 - x^2)
        for N in (4.0, 16.0, 100.0):
            p = make_params(N, 1.0)
            blocks = subspace_basis_matrices(p)
            eig = np.sort(np.linalg.eigvalsh(blocks.h_up))
            np.testing.assert_allclose(eig, [-1 - p.x, -1 + p.x], atol=1e-12)
            for lam in eig:
                assert abs(lam**2 + 2 * lam + (1 - p.x**2)) < 1e-12


class TestExpm2x2:
    def test_matches_scipy_on_random_hermitian(self):
        import scipy.linalg

        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b, c = rng.normal(size=3)
            H = np.array([[a, b], [b, c]])
            t = float(rng.uniform(0.1, 10.0))
            expected = scipy.linalg.expm(-1j * H * t)
            np.testing.assert_allclose(expm_2x2_hermitian(H, t), expected, atol=1e-13)

    def test_degenerate_limit(self):
        H = -2.0 * np.eye(2)
        np.testing.assert_allclose(
            expm_2x2_hermitian(H, 1.7), np.exp(2j * 1.7) * np.eye(2), atol=1e-15
        )


class TestStepOperators:
    def test_no_rotation_is_unitary_evolution(self):
        p = make_params(1e6, 1.0, delta_theta=0.0)
        blocks = subspace_basis_matrices(p)
        op = exact_step_operator(5, p)
        expected = expm_2x2_hermitian(blocks.h_up, p.delta_t)
        np.testing.assert_allclose(op.matrix, expected, atol=1e-15)
        assert abs(op.distance) < 1e-12

    def test_orthogonal_postselection_annihilates(self):
        # theta_0 = 0, theta_1 = pi/2: the coupling never flips the ancilla
        p = make_params(1e4, 1.0, delta_theta=math.pi / 2)
        op = exact_step_operator(1, p)
        np.testing.assert_allclose(op.matrix, np.zeros((2, 2)), atol=1e-16)
        assert op.distance == pytest.approx(1.0)

    def test_zeno_identity(self):
        p = make_params(1e8, math.pi, delta_theta=0.013)
        for j in (1, 2, 10, 500):
            op = exact_step_operator(j, p)
            assert op.c_j + op.s_j == pytest.approx(math.cos(p.delta_theta), abs=1e-15)

    def test_near_unitary_at_pi_multiples(self):
        # dt = pi k: each cycle is close to cos(dtheta) times a unitary
        p = make_params(1e10, math.pi, delta_theta=1e-3)
        op = exact_step_operator(3, p)
        bound = 1 - math.cos(p.delta_theta) ** 2 + 10 * p.x
        assert 0 <= op.distance <= bound

    def test_step_index_validation(self):
        p = make_params(1e4, 1.0)
        with pytest.raises(ValueError):
            exact_step_operator(0, p)
        with pytest.raises(ValueError):
            approx_step_operator(0, p)


class TestApproxOperator:
    def test_no_rotation_is_identity_like(self):
        # C=1, S=0: unit diagonal plus the first-order search rotation i x dt
        p = make_params(1e10, 2.0, delta_theta=0.0)
        op = approx_step_operator(1, p)
        np.testing.assert_allclose(np.diag(op.matrix), [1.0, 1.0], atol=1e-15)
        assert op.matrix[0, 1] == pytest.approx(1j * p.x * p.delta_t, abs=1e-15)
        exact = exact_step_operator(1, p).matrix
        aligned = align_global_phase(exact, op.matrix)
        assert np.linalg.norm(exact - aligned) < 1e-8

    def test_pi_step_kills_residual_term(self):
        # at dt = pi the 1 - e^{-2i dt} factor vanishes: off-diagonal is i C x pi
        p = make_params(1e10, math.pi, delta_theta=1e-4)
        op = approx_step_operator(7, p)
        expected_off = 1j * op.c_j * p.x * math.pi
        assert abs(op.matrix[0, 1] - expected_off) < 1e-12 * abs(expected_off) + 1e-18

    def test_matches_exact_engine_in_regime(self):
        # frozen tolerance from the exact-engine oracle
        p = make_params(1e10, math.pi + 0.2, delta_theta=3e-6 * (math.pi + 0.2))
        exact = exact_step_operator(100, p).matrix
        approx = align_global_phase(exact, approx_step_operator(100, p).matrix)
        assert np.linalg.norm(exact - approx) < 1e-6


class TestDistance:
    def test_identity(self):
        assert distance_from_unitarity(np.eye(2)) == 0.0

    def test_zero_matrix(self):
        assert distance_from_unitarity(np.zeros((2, 2))) == 1.0

    def test_scaled_unitary(self):
        U = expm_2x2_hermitian(np.array([[0.3, 0.1], [0.1, -0.2]]), 2.0)
        assert distance_from_unitarity(0.5 * U) == pytest.approx(0.75, abs=1e-14)


class TestAccumulate:
    def test_ordering_regression(self):
        p = make_params(1e4, math.pi + 0.2, alpha=0.3)
        blocks = subspace_basis_matrices(p)
        for n in (2, 5, 17):
            V_n, _ = accumulate_process(p, n)
            V_prev, _ = accumulate_process(p, n - 1) if n > 1 else (np.eye(2), None)
            step = exact_step_operator(n, p, blocks).matrix
            np.testing.assert_allclose(V_n, step @ V_prev, atol=1e-14)

    def test_survival_three_ways(self):
        p = make_params(1e6, math.pi + 0.2, alpha=0.3)
        n = 400
        V, record = accumulate_process(p, n)
        s = np.array([p.x, math.sqrt(1 - p.x**2)], dtype=complex)
        from_product = float(np.linalg.norm(V @ s) ** 2)
        assert abs(record.survival[-1] - from_product) < 1e-10
        # product of conditional success probabilities
        psi = s.copy()
        acc = 1.0
        blocks = subspace_basis_matrices(p)
        for j in range(1, n + 1):
            psi = exact_step_operator(j, p, blocks).matrix @ psi
            cond = float(np.vdot(psi, psi).real)
            acc *= cond
            psi /= math.sqrt(cond)
        assert abs(record.survival[-1] - acc) < 1e-10

    def test_survival_non_increasing(self):
        p = make_params(1e6, math.pi + 0.2, alpha=0.3, epsilon=2 * p_x3(1e6))
        record = run_protocol(p)
        assert np.all(np.diff(record.survival) <= 1e-12)

    def test_record_shape_and_boundaries(self):
        p = make_params(1e4, 1.0, alpha=0.1)
        record = run_protocol(p, 50)
        assert record.steps[0] == 0 and record.steps[-1] == 50
        assert record.survival[0] == 1.0
        assert record.fidelity[0] == pytest.approx(1.0 / p.N, rel=1e-12)
        assert np.all((record.fidelity >= 0) & (record.fidelity <= 1 + 1e-12))
        assert np.all((record.survival >= 0) & (record.survival <= 1 + 1e-12))
        assert record.times[-1] == pytest.approx(50 * p.delta_t, rel=1e-15)
        assert record.final_state is not None
        assert record.final_state.norm_sq == pytest.approx(1.0, abs=1e-12)

    def test_unitary_limit_distance_stays_zero(self):
        p = make_params(1e6, 1.0, delta_theta=0.0)
        _, record = accumulate_process(p, 100_000)
        assert np.max(np.abs(record.distance)) <= 1e-10
        assert np.max(np.abs(record.survival - 1.0)) <= 1e-10

    def test_no_rotation_reduces_to_closed_form(self):
        p = make_params(1e6, 1.0, delta_theta=0.0)
        record = run_protocol(p)
        for i in range(len(record.steps)):
            f_expected = grover_fidelity_closed_form(record.times[i], p.N)
            assert abs(record.fidelity[i] - f_expected) < 1e-9

    def test_reference_process_readout(self):
        p = make_params(1e6, k=1, tau=0.2, alpha=0.3)
        record = run_protocol(p)
        assert record.final_fidelity == pytest.approx(0.98, abs=0.01)
        assert record.final_survival == pytest.approx(0.27, abs=0.02)

    def test_detuned_readouts(self):
        # readout pairs at the two special detunings; the published success
        # figures correspond to fidelity times survival
        N2 = 1000000162505052417
        p0 = make_params(float(N2), k=1063662, tau=0.2, alpha=0.3)
        for m_factor, f_want, fp_want, f_tol, fp_tol in (
            (math.sqrt(3), 0.88, 0.08, 0.02, 0.01),
            (math.sqrt(15), 0.63, 0.018, 0.03, 0.005),
        ):
            p = make_params(
                float(N2), k=1063662, tau=0.2, alpha=0.3, epsilon=2 * p0.x * m_factor
            )
            record = run_protocol(p)
            assert record.final_fidelity == pytest.approx(f_want, abs=f_tol)
            success = record.final_fidelity * record.final_survival
            assert success == pytest.approx(fp_want, abs=fp_tol)

    def test_exact_vs_approx_engine_fidelity(self):
        # regime x*dt <= 1e-3
        p = make_params(1e10, math.pi + 0.2, alpha=0.3)
        exact = run_protocol(p, engine="exact")
        approx = run_protocol(p, engine="approx")
        assert abs(exact.final_fidelity - approx.final_fidelity) < 1e-4

    def test_annihilating_postselection_crushes_survival(self):
        # theta_1 = pi/2 annihilates the state up to the representation error
        # of pi/2 (cos gives ~6e-17, squared ~4e-33); a few more near-orthogonal
        # projections push P below the floor and set the underflow flag
        p = make_params(1e4, 1.0, delta_theta=math.pi / 2)
        record = run_protocol(p, 12)
        assert record.survival[1] <= 4e-33
        assert record.underflow
        assert record.survival[-1] == 0.0
        assert np.all(np.isfinite(record.fidelity))

    def test_deep_damping_underflow_freezes_survival(self):
        # strong damping at tiny N drives P below the floor well before n=3000
        p = make_params(4.0, math.pi, delta_theta=0.01)
        record = run_protocol(p, 3000)
        assert record.underflow
        assert record.survival[-1] == 0.0
        assert np.all(np.isfinite(record.fidelity))
        assert np.all(np.diff(record.survival) <= 1e-12)

    def test_final_distance_matches_record(self):
        p = make_params(1e6, math.pi + 0.2, alpha=0.3)
        _, record = accumulate_process(p, 200)
        assert final_distance(p, 200) == pytest.approx(
            record.distance[-1], abs=1e-15
        )

    def test_engine_validation(self):
        p = make_params(1e4, 1.0)
        with pytest.raises(ValueError):
            accumulate_process(p, 10, engine="bogus")
        with pytest.raises(ValueError):
            accumulate_process(p, 0)

    @given(
        n_exp=st.floats(min_value=2, max_value=8),
        tau=st.floats(min_value=-0.4, max_value=0.4),
        alpha=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=25, deadline=None)
    def test_survival_never_increases_property(self, n_exp, tau, alpha):
        p = make_params(10.0**n_exp, k=1, tau=tau, alpha=alpha)
        record = run_protocol(p, min(p.n_G, 120))
        assert np.all(np.diff(record.survival) <= 1e-12)


def p_x3(N):
    return math.sqrt(3) / math.sqrt(N)
