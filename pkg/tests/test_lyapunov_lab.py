"""Lyapunov certificate, coercivity study, and KYP verification tests."""

import dataclasses

import numpy as np
import pytest

from dyadlab.errors import CertificateError
from dyadlab.lyapunov_lab import (certificate_for, check_kyp,
                                  coercivity_study, construct_spr_benchmark,
                                  select_Q, solve_lyapunov, weighted_adjoint)
from dyadlab.spatial_model import (assemble_plant, build_grid, euclidean_grid,
                                   mass_matrix, z_inner)


def kron_oracle(A_m, Q_w):
    """Independent vectorized Lyapunov solve: (I (x) A^T + A^T (x) I) p = -q."""
    d = A_m.shape[0]
    K = np.kron(np.eye(d), A_m.T) + np.kron(A_m.T, np.eye(d))
    return np.linalg.solve(K, -Q_w.reshape(-1)).reshape(d, d)


class TestWeightedAdjoint:
    def test_adjoint_identity(self):
        grid = build_grid(1.0, 15)
        W = mass_matrix(grid)
        rng = np.random.default_rng(0)
        A = rng.normal(size=(15, 15))
        As = weighted_adjoint(A, W)
        a, b = rng.normal(size=15), rng.normal(size=15)
        assert z_inner(grid, A @ a, b) == pytest.approx(
            z_inner(grid, a, As @ b), abs=1e-12)

    def test_euclidean_adjoint_is_transpose(self):
        W = np.eye(4)
        A = np.arange(16.0).reshape(4, 4)
        np.testing.assert_allclose(weighted_adjoint(A, W), A.T, atol=1e-14)


class TestSelectQ:
    def test_negative_identity_gives_branch_1(self):
        grid = euclidean_grid(3)
        Q, branch = select_Q(-np.eye(3), grid)
        assert branch == "negative_symmetric_part"
        np.testing.assert_allclose(Q, 2 * np.eye(3), atol=1e-14)

    def test_heat_fires_branch_1(self):
        grid = build_grid(np.pi, 30)
        plant = assemble_plant({"kind": "heat"}, grid)
        _, branch = select_Q(plant.A, grid)
        assert branch == "negative_symmetric_part"

    def test_upwind_dissipation_keeps_branch_1(self):
        # the upwind discretization adds numerical dissipation, so the
        # weighted symmetric part stays positive definite even for tiny
        # physical diffusion; the identity branch must be forced explicitly
        grid = build_grid(1.0, 50)
        plant = assemble_plant(
            {"kind": "advection_diffusion", "c": 1.0, "nu": 0.001}, grid)
        _, branch = select_Q(plant.A, grid)
        assert branch == "negative_symmetric_part"

    def test_rotation_dominant_gives_identity_branch(self):
        # skew-dominant stable matrix: symmetric part indefinite
        grid = euclidean_grid(2)
        A = np.array([[0.1, -5.0], [5.0, -0.3]])
        assert np.max(np.linalg.eigvals(A).real) < 0
        Q, branch = select_Q(A, grid)
        assert branch == "identity"
        np.testing.assert_allclose(Q, np.eye(2), atol=1e-14)

    def test_non_hurwitz_rejected(self):
        with pytest.raises(CertificateError):
            select_Q(np.eye(2), euclidean_grid(2))


class TestSolveLyapunov:
    def test_scalar_closed_form(self):
        grid = euclidean_grid(1)
        cert = solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]]), grid)
        assert cert.P[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert cert.residual <= 1e-12

    def test_kronecker_oracle_2x2(self):
        grid = euclidean_grid(2)
        A_m = np.array([[-1.0, 1.0], [0.0, -2.0]])
        cert = solve_lyapunov(A_m, np.eye(2), grid)
        np.testing.assert_allclose(cert.P_w, kron_oracle(A_m, np.eye(2)),
                                   atol=1e-10)

    def test_kronecker_oracle_random_stable(self):
        rng = np.random.default_rng(7)
        for dim in (5, 17, 40):
            grid = euclidean_grid(dim)
            A = rng.normal(size=(dim, dim))
            A_m = A - (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(dim)
            cert = solve_lyapunov(A_m, np.eye(dim), grid)
            oracle = kron_oracle(A_m, np.eye(dim))
            assert np.max(np.abs(cert.P_w - oracle)) <= 1e-10 * max(
                1.0, np.max(np.abs(oracle)))

    def test_non_hurwitz_refused(self):
        with pytest.raises(CertificateError):
            solve_lyapunov(np.eye(3), np.eye(3), euclidean_grid(3))

    def test_lambda_p_maximality(self):
        grid = build_grid(np.pi, 20)
        plant = assemble_plant({"kind": "heat"}, grid)
        cert = certificate_for(plant.A, grid)
        W = cert.W
        lam = cert.lambda_p
        lo = np.min(np.linalg.eigvalsh(
            np.linalg.solve(W, cert.Q_w - lam * cert.P_w) + 0.0))
        import scipy.linalg as sla
        assert np.min(sla.eigvalsh(cert.Q_w - lam * cert.P_w, W)) >= -1e-8
        assert np.min(sla.eigvalsh(
            cert.Q_w - (lam + 1e-3) * cert.P_w, W)) < 0

    def test_branch1_P_is_identity(self):
        grid = build_grid(np.pi, 30)
        plant = assemble_plant({"kind": "heat"}, grid)
        cert = certificate_for(plant.A, grid)
        assert cert.q_branch == "negative_symmetric_part"
        np.testing.assert_allclose(cert.P, np.eye(30), atol=1e-8)
        assert cert.coercivity_margin == pytest.approx(1.0, abs=1e-8)

    def test_forced_identity_mode(self):
        grid = build_grid(np.pi, 20)
        plant = assemble_plant({"kind": "heat"}, grid)
        cert = certificate_for(plant.A, grid, q_mode="identity")
        assert cert.q_branch == "identity(forced)"
        np.testing.assert_allclose(cert.Q, np.eye(20), atol=1e-14)
        assert cert.residual <= 1e-8


class TestCoercivityStudy:
    def test_heat_margin_constant_one(self):
        rows, slope = coercivity_study({"kind": "heat"}, [25, 50], L=np.pi)
        for _, margin, lam in rows:
            assert margin == pytest.approx(1.0, abs=1e-8)
            assert lam > 0

    def test_advection_margin_decreases(self):
        rows, slope = coercivity_study(
            {"kind": "advection_diffusion", "c": 1.0, "nu": 0.01},
            [25, 50, 100], L=1.0, q_mode="identity")
        margins = [r[1] for r in rows]
        assert margins[0] > margins[1] > margins[2]
        assert slope < 0

    def test_single_entry_no_slope(self):
        rows, slope = coercivity_study({"kind": "heat"}, [25], L=np.pi)
        assert len(rows) == 1
        assert slope is None


class TestKyp:
    def test_spr_benchmark_passes(self):
        for N in (25, 50, 100):
            grid = build_grid(np.pi, N)
            plant, kyp = construct_spr_benchmark(grid)
            report = check_kyp(plant.A, plant.C, kyp, grid)
            assert report.passed
            assert report.residual_lyap <= 1e-8
            assert report.residual_output <= 1e-8
            assert report.eps_Q_measured > 0

    def test_perturbed_E_fails_output(self):
        grid = build_grid(np.pi, 30)
        plant, kyp = construct_spr_benchmark(grid)
        bad = dataclasses.replace(kyp, E=kyp.E + 1e-2)
        report = check_kyp(plant.A, plant.C, bad, grid)
        assert not report.output_ok
        assert not report.passed

    def test_scalar_spr_closed_form(self):
        # a = -1, b = 1, c = 1: P = 1 solves 2aP = -Q with Q = 2, E = c
        grid = euclidean_grid(1)
        base = solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]]), grid)
        from dyadlab.lyapunov_lab import KypCertificate
        cert = KypCertificate(F=np.zeros((1, 1)), E=np.array([1.0]),
                              eps_Q=2.0, residual_lyap=0.0,
                              residual_output=0.0, lyap=base)
        report = check_kyp(np.array([[-1.0]]), np.array([1.0]), cert, grid)
        assert report.passed

    def test_tampered_alpha_rejected(self):
        grid = build_grid(np.pi, 20)
        from dyadlab.errors import ConfigError
        with pytest.raises(ConfigError):
            construct_spr_benchmark(grid, {"alpha_true": [0.9]})
