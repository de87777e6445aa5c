"""Tests for the operator algebra: Pauli maps, T parameterization, metrics."""

import math

import numpy as np
import pytest

import oracle
from sctomo.operators import (
    DensityMatrix,
    KET_H,
    KET_L,
    KET_R,
    KET_V,
    SIGMA_0,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_density,
    concurrence,
    density_from_tparams,
    fidelity,
    fidelity_up_to_z,
    pauli_basis,
    pauli_compose,
    pauli_decompose,
    project_to_physical,
    purity,
    tensor_product,
    tparams_from_density,
)


class TestBasisConventions:
    def test_pauli_squares(self):
        for sig in (SIGMA_X, SIGMA_Y, SIGMA_Z):
            np.testing.assert_allclose(sig @ sig, SIGMA_0, atol=1e-15)

    def test_xy_product_is_iz(self):
        np.testing.assert_allclose(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z, atol=1e-15)

    def test_kets(self):
        # |H> and |V> are the +-x eigenstates in the circular basis
        np.testing.assert_allclose(SIGMA_X @ KET_H, KET_H, atol=1e-15)
        np.testing.assert_allclose(SIGMA_X @ KET_V, -KET_V, atol=1e-15)
        assert abs(np.vdot(KET_H, KET_V)) < 1e-15
        assert abs(np.vdot(KET_R, KET_L)) < 1e-15

    def test_basis_orthogonality(self):
        for n in (1, 2):
            basis = pauli_basis(n)
            for i, a in enumerate(basis):
                for j, b in enumerate(basis):
                    expected = 2.0**n if i == j else 0.0
                    assert abs(np.trace(a @ b).real - expected) < 1e-12


class TestPauliMaps:
    def test_compose_identity_coeffs(self):
        np.testing.assert_allclose(pauli_compose([1, 0, 0, 0]), SIGMA_0 / 2, atol=1e-15)

    def test_compose_z_projector(self):
        np.testing.assert_allclose(pauli_compose([1, 0, 0, 1]), np.diag([1.0, 0.0]), atol=1e-15)

    def test_compose_plus_x_projector(self):
        # (sigma_0 + sigma_x)/2 expanded by hand
        expected = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
        np.testing.assert_allclose(pauli_compose([1, 1, 0, 0]), expected, atol=1e-15)

    def test_decompose_examples(self):
        np.testing.assert_allclose(pauli_decompose(np.diag([1.0, 0.0])), [1, 0, 0, 1], atol=1e-14)
        np.testing.assert_allclose(pauli_decompose(SIGMA_0 / 2), [1, 0, 0, 0], atol=1e-14)
        rho_h = np.outer(KET_H, KET_H.conj())
        np.testing.assert_allclose(pauli_decompose(rho_h), [1, 1, 0, 0], atol=1e-14)

    def test_compose_decompose_round_trip(self):
        rng = np.random.default_rng(42)
        for n, size in ((1, 4), (2, 16)):
            for _ in range(1000):
                t = rng.standard_normal(size)
                rho = density_from_tparams(t).matrix
                lam = pauli_decompose(rho)
                np.testing.assert_allclose(pauli_compose(lam), rho, atol=1e-12)
                lam2 = pauli_decompose(pauli_compose(lam))
                np.testing.assert_allclose(lam2, lam, atol=1e-12)

    def test_decompose_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            pauli_decompose(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_bad_lengths(self):
        with pytest.raises(ValueError):
            pauli_compose([1, 0, 0])
        with pytest.raises(ValueError):
            pauli_decompose(np.eye(3))


class TestTensorProduct:
    def test_identity(self):
        np.testing.assert_allclose(tensor_product(SIGMA_0, SIGMA_0), np.eye(4), atol=1e-15)

    def test_zz(self):
        np.testing.assert_allclose(tensor_product(SIGMA_Z, SIGMA_Z), np.diag([1.0, -1.0, -1.0, 1.0]), atol=1e-15)

    def test_xy_hand_expanded(self):
        expected = np.array(
            [
                [0, 0, 0, -1j],
                [0, 0, 1j, 0],
                [0, -1j, 0, 0],
                [1j, 0, 0, 0],
            ]
        )
        np.testing.assert_allclose(tensor_product(SIGMA_X, SIGMA_Y), expected, atol=1e-15)

    def test_mixed_product_rule(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b, c, d = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(4))
            lhs = tensor_product(a, b) @ tensor_product(c, d)
            rhs = tensor_product(a @ c, b @ d)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_rejects_wrong_dims(self):
        with pytest.raises(ValueError):
            tensor_product(np.eye(4), np.eye(2))


class TestTParameterization:
    def test_identity_mix(self):
        np.testing.assert_allclose(density_from_tparams([1, 1, 0, 0]).matrix, SIGMA_0 / 2, atol=1e-15)

    def test_pole_state(self):
        np.testing.assert_allclose(density_from_tparams([1, 0, 0, 0]).matrix, np.diag([1.0, 0.0]), atol=1e-15)

    def test_hand_evaluated_case(self):
        # T = [[1, 0], [1, 1]]: T^dag T = [[2, 1], [1, 1]], trace 3
        expected = np.array([[2.0, 1.0], [1.0, 1.0]]) / 3.0
        np.testing.assert_allclose(density_from_tparams([1, 1, 1, 0]).matrix, expected, atol=1e-15)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            density_from_tparams([0, 0, 0, 0])

    def test_physicality_random(self):
        rng = np.random.default_rng(11)
        for size in (4, 16):
            for _ in range(1000):
                t = 3.0 * rng.standard_normal(size)
                dm = density_from_tparams(t)  # constructor validates all invariants
                assert dm.matrix.shape == (2 if size == 4 else 4,) * 2

    def test_factorization_round_trip(self):
        rng = np.random.default_rng(12)
        for dim in (2, 4):
            for _ in range(50):
                rho = oracle.random_density(rng, dim)
                t = tparams_from_density(rho)
                np.testing.assert_allclose(density_from_tparams(t).matrix, rho, atol=1e-10)

    def test_factorization_of_pure_state(self):
        rho = np.outer(KET_H, KET_H.conj())
        t = tparams_from_density(rho)
        np.testing.assert_allclose(density_from_tparams(t).matrix, rho, atol=1e-6)


class TestDensityMatrixValidation:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))

    def test_rejects_wrong_trace(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError, match="negative"):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_accepts_eigen_debris(self):
        DensityMatrix(np.diag([1.0 + 5e-11, -5e-11]))

    def test_pure_constructor(self):
        dm = DensityMatrix.from_pure(KET_H)
        assert abs(purity(dm) - 1.0) < 1e-12
        with pytest.raises(ValueError, match="norm"):
            DensityMatrix.from_pure([1.0, 1.0])


class TestFidelity:
    def test_self_fidelity(self):
        rng = np.random.default_rng(3)
        for dim in (2, 4):
            rho = oracle.random_density(rng, dim)
            assert abs(fidelity(rho, rho) - 1.0) < 1e-12

    def test_orthogonal_pure(self):
        assert fidelity(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) < 1e-12

    def test_pure_vs_mixed(self):
        assert abs(fidelity(np.diag([1.0, 0.0]), SIGMA_0 / 2) - 0.5) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        for dim in (2, 4):
            for _ in range(50):
                a = oracle.random_density(rng, dim)
                b = oracle.random_density(rng, dim)
                assert abs(fidelity(a, b) - fidelity(b, a)) < 1e-12

    def test_matches_qubit_closed_form(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            a = oracle.random_density(rng, 2)
            b = oracle.random_density(rng, 2)
            assert abs(fidelity(a, b) - oracle.fidelity_qubit(a, b)) < 1e-10

    def test_matches_sqrtm_two_qubits(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = oracle.random_density(rng, 4)
            b = oracle.random_density(rng, 4)
            assert abs(fidelity(a, b) - oracle.fidelity_sqrtm(a, b)) < 1e-9

    def test_pure_overlap(self):
        rng = np.random.default_rng(8)
        for dim in (2, 4):
            for _ in range(50):
                pa = oracle.random_pure(rng, dim)
                pb = oracle.random_pure(rng, dim)
                f = fidelity(np.outer(pa, pa.conj()), np.outer(pb, pb.conj()))
                # sum-of-sqrt-eigenvalues has a ~sqrt(eps) debris floor on
                # rank-deficient products
                assert abs(f - abs(np.vdot(pa, pb)) ** 2) < 1e-7

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            fidelity(np.eye(2) / 2, np.eye(4) / 4)

    def test_rejects_unphysical(self):
        with pytest.raises(ValueError):
            fidelity(np.diag([1.5, -0.5]), SIGMA_0 / 2)


class TestFidelityUpToZ:
    def test_equal_states(self):
        rho = np.outer(KET_H, KET_H.conj())
        f, theta = fidelity_up_to_z(rho, rho, 1)
        assert f > 1.0 - 1e-9

    def test_plus_x_vs_minus_x(self):
        plus = np.outer(KET_H, KET_H.conj())
        minus = np.outer(KET_V, KET_V.conj())
        f, theta = fidelity_up_to_z(plus, minus, 1)
        assert f > 1.0 - 1e-9
        assert abs(theta[0] - math.pi) < 1e-3

    def test_poles_stay_apart(self):
        f, _ = fidelity_up_to_z(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), 1)
        assert f < 1e-9

    def test_never_below_plain_fidelity(self):
        rng = np.random.default_rng(9)
        for dim, n in ((2, 1), (4, 2)):
            for _ in range(20):
                a = oracle.random_density(rng, dim)
                b = oracle.random_density(rng, dim)
                f_z, _ = fidelity_up_to_z(a, b, n)
                assert f_z >= fidelity(a, b) - 1e-12

    def test_recovers_two_qubit_gauge(self):
        psi = (np.kron(KET_H, KET_H) + np.kron(KET_V, KET_V)) / math.sqrt(2)
        rho = np.outer(psi, psi.conj())
        th1, th2 = 0.9, 2.3
        d = np.kron(
            np.array([np.exp(-0.5j * th1), np.exp(0.5j * th1)]),
            np.array([np.exp(-0.5j * th2), np.exp(0.5j * th2)]),
        )
        rotated = rho * np.outer(d, d.conj())
        f, _ = fidelity_up_to_z(rho, rotated, 2)
        assert f > 1.0 - 1e-6

    def test_qubit_count_check(self):
        with pytest.raises(ValueError, match="n_qubits"):
            fidelity_up_to_z(SIGMA_0 / 2, SIGMA_0 / 2, 2)


class TestConcurrence:
    def test_bell_state(self):
        psi = (np.kron(KET_H, KET_H) + np.kron(KET_V, KET_V)) / math.sqrt(2)
        assert abs(concurrence(np.outer(psi, psi.conj())) - 1.0) < 1e-10

    def test_product_pure_state(self):
        psi = np.kron(KET_H, KET_H)
        assert concurrence(np.outer(psi, psi.conj())) < 1e-7

    def test_partially_entangled(self):
        a, b = math.sqrt(0.8), math.sqrt(0.2)
        psi = a * np.kron(KET_H, KET_H) + b * np.kron(KET_V, KET_V)
        assert abs(concurrence(np.outer(psi, psi.conj())) - 0.8) < 1e-10

    def test_separable_mixed_states(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            rho = np.kron(oracle.random_density(rng, 2), oracle.random_density(rng, 2))
            assert concurrence(rho) < 1e-10

    def test_matches_pure_state_formula(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            psi = oracle.random_pure(rng, 4)
            c = concurrence(np.outer(psi, psi.conj()))
            assert abs(c - oracle.concurrence_pure(psi)) < 1e-7

    def test_rejects_single_qubit(self):
        with pytest.raises(ValueError, match="two qubits"):
            concurrence(SIGMA_0 / 2)


class TestProjection:
    def test_projection_output_is_valid(self):
        rng = np.random.default_rng(14)
        for dim in (2, 4):
            for _ in range(50):
                h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
                h = (h + h.conj().T) / 2
                dm = project_to_physical(h)
                assert isinstance(dm, DensityMatrix)

    def test_projection_is_identity_on_states(self):
        rng = np.random.default_rng(15)
        rho = oracle.random_density(rng, 2)
        np.testing.assert_allclose(project_to_physical(rho).matrix, rho, atol=1e-12)

    def test_as_density_passthrough(self):
        dm = as_density(SIGMA_0 / 2)
        assert as_density(dm) is dm
