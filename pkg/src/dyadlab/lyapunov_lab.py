"""Lyapunov certificates, coercivity margins, and KYP verification.

All positivity and adjoint computations are carried out in the weighted
(quadrature) inner product, not the raw Euclidean one. Internally the
operator equation is reduced to a standard matrix Lyapunov equation in the
"weighted" symmetric coordinates P_w = W P, Q_w = W Q, where W is the
diagonal mass matrix: the operator inequality

    <A_m z, P z> + <P z, A_m z> = -<z, Q z>   for all z

is equivalent to  A_m^T P_w + P_w A_m = -Q_w  with P_w, Q_w symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import CertificateError, DimensionError
from .spatial_model import (PlantModel, SpatialGrid, assemble_plant,
                            build_grid, mass_matrix)

__all__ = [
    "LyapunovCertificate",
    "KypCertificate",
    "KypReport",
    "weighted_adjoint",
    "select_Q",
    "solve_lyapunov",
    "certificate_for",
    "coercivity_study",
    "check_kyp",
    "construct_spr_benchmark",
]

RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class LyapunovCertificate:
    """Solution pair (P, Q) with its verified margins.

    P and Q are operator matrices acting on raw nodal vectors; P_w and Q_w
    are their symmetric weighted forms. lambda_p is the largest scalar with
    Q - lambda_p P still positive semidefinite in the weighted sense, and
    coercivity_margin is the smallest weighted eigenvalue of P.
    """

    P: np.ndarray
    Q: np.ndarray
    P_w: np.ndarray
    Q_w: np.ndarray
    W: np.ndarray
    residual: float
    lambda_p: float
    coercivity_margin: float
    grid_N: int
    q_branch: str = ""

    def __post_init__(self):
        if self.residual > RESIDUAL_TOL:
            raise CertificateError(
                f"Lyapunov residual {self.residual:.3e} exceeds {RESIDUAL_TOL:.0e}")
        if self.lambda_p <= 0:
            raise CertificateError(f"lambda_p = {self.lambda_p:.3e} not positive")
        if np.min(sla.eigvalsh(self.P_w)) <= 0:
            raise CertificateError("P is not positive definite")

    def quad_P(self, grid: SpatialGrid, z: np.ndarray) -> float:
        """<z, P z> in the weighted inner product."""
        return float(z @ self.P_w @ z)


@dataclass(frozen=True)
class KypCertificate:
    """KYP triple (F, E, eps_Q) extending a base Lyapunov certificate."""

    F: np.ndarray
    E: np.ndarray
    eps_Q: float
    residual_lyap: float
    residual_output: float
    lyap: LyapunovCertificate


@dataclass(frozen=True)
class KypReport:
    residual_lyap: float
    residual_output: float
    eps_Q_measured: float
    lyap_ok: bool
    output_ok: bool
    eps_ok: bool
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed",
                           self.lyap_ok and self.output_ok and self.eps_ok)


def weighted_adjoint(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Adjoint of A with respect to the weighted inner product: W^-1 A^T W."""
    w = np.diag(W)
    return (A.T * w[None, :]) / w[:, None]


def _assert_hurwitz(A_m: np.ndarray) -> np.ndarray:
    eigs = sla.eigvals(A_m)
    if np.max(eigs.real) >= 0:
        raise CertificateError(
            f"A_m is not Hurwitz (max real part {np.max(eigs.real):.3e})")
    return eigs


def select_Q(A_m: np.ndarray, grid: SpatialGrid, n_channels: int = 1):
    """Pick Q for the Lyapunov equation.

    Returns -(A_m + A_m*) when that operator is positive definite in the
    weighted sense (then P comes out as the identity), and the identity
    operator otherwise. Second return value names the branch that fired.
    """
    _assert_hurwitz(A_m)
    W = mass_matrix(grid, n_channels)
    S = -(A_m + weighted_adjoint(A_m, W))
    S_w = 0.5 * (W @ S + (W @ S).T)
    min_eig = np.min(sla.eigvalsh(S_w, W))
    if min_eig > 0:
        return S, "negative_symmetric_part"
    return np.eye(A_m.shape[0]), "identity"


def solve_lyapunov(A_m: np.ndarray, Q: np.ndarray, grid: SpatialGrid,
                   n_channels: int = 1, q_branch: str = "") -> LyapunovCertificate:
    """Solve the weighted Lyapunov equation and certify margins.

    Refuses to return a certificate if A_m is not Hurwitz or the relative
    residual exceeds the 1e-8 gate.
    """
    if A_m.shape[0] != A_m.shape[1] or A_m.shape != Q.shape:
        raise DimensionError(f"shape mismatch: A_m {A_m.shape}, Q {Q.shape}")
    _assert_hurwitz(A_m)
    W = mass_matrix(grid, n_channels)
    Q_w = 0.5 * (W @ Q + (W @ Q).T)
    P_w = sla.solve_continuous_lyapunov(A_m.T, -Q_w)
    P_w = 0.5 * (P_w + P_w.T)
    residual = (np.linalg.norm(A_m.T @ P_w + P_w @ A_m + Q_w, 2)
                / np.linalg.norm(Q_w, 2))
    lambda_p = float(np.min(sla.eigvalsh(Q_w, P_w)))
    margin = float(np.min(sla.eigvalsh(P_w, W)))
    P = P_w / np.diag(W)[:, None]
    return LyapunovCertificate(
        P=P, Q=Q, P_w=P_w, Q_w=Q_w, W=W, residual=float(residual),
        lambda_p=lambda_p, coercivity_margin=margin, grid_N=grid.N,
        q_branch=q_branch)


def certificate_for(A_m: np.ndarray, grid: SpatialGrid, n_channels: int = 1,
                    q_mode: str = "auto") -> LyapunovCertificate:
    """Select Q (automatically or forced to the identity) and solve.

    ``q_mode='identity'`` matches the general non-coercive analysis, which
    works with the identity-operator Q regardless of the symmetric part;
    any discretization of a dissipative plant has a technically negative
    symmetric part, so the automatic branch alone cannot surface the
    non-coercive regime.
    """
    if q_mode == "identity":
        _assert_hurwitz(A_m)
        return solve_lyapunov(A_m, np.eye(A_m.shape[0]), grid, n_channels,
                              q_branch="identity(forced)")
    Q, branch = select_Q(A_m, grid, n_channels)
    return solve_lyapunov(A_m, Q, grid, n_channels, q_branch=branch)


def coercivity_study(plant_spec: dict, N_list, design_K=None, L: float = 1.0,
                     q_mode: str = "auto"):
    """Coercivity margin and lambda_p of the certificate per grid size.

    Returns (rows, slope): rows of (N, margin, lambda_p) and the log-log
    slope of margin vs N (None for a single-entry study).
    """
    rows = []
    for N in N_list:
        grid = build_grid(L, N)
        plant = assemble_plant(plant_spec, grid)
        A_m = plant.A if design_K is None else design_K(plant).A_m
        cert = certificate_for(A_m, grid, plant.n_channels, q_mode=q_mode)
        rows.append((N, cert.coercivity_margin, cert.lambda_p))
    slope = None
    if len(rows) > 1:
        logN = np.log([r[0] for r in rows])
        logm = np.log([r[1] for r in rows])
        slope = float(np.polyfit(logN, logm, 1)[0])
    return rows, slope


def check_kyp(A_m: np.ndarray, C: np.ndarray, cert: KypCertificate,
              grid: SpatialGrid, n_channels: int = 1) -> KypReport:
    """Recompute both KYP residuals and the coercivity constant of Q.

    The report never raises; failed conditions are flagged individually.
    """
    base = cert.lyap
    W = base.W
    F = np.atleast_2d(np.asarray(cert.F, dtype=float))
    if F.size == 0:
        FtWF = np.zeros_like(A_m)
    else:
        # F maps the state space to itself; F*F in the weighted sense
        FtWF = F.T @ W @ F
    lhs = A_m.T @ base.P_w + base.P_w @ A_m + FtWF + base.Q_w
    residual_lyap = float(np.linalg.norm(lhs, 2) / np.linalg.norm(base.Q_w, 2))
    EP = np.atleast_1d(cert.E) @ base.P
    residual_output = float(np.linalg.norm(EP - C) / np.linalg.norm(C))
    # verify <z, Qz> >= eps_Q ||z||^2 on the weighted eigenbasis of (Q_w, W)
    eps_measured = float(np.min(sla.eigvalsh(base.Q_w, W)))
    return KypReport(
        residual_lyap=residual_lyap,
        residual_output=residual_output,
        eps_Q_measured=eps_measured,
        lyap_ok=residual_lyap <= RESIDUAL_TOL,
        output_ok=residual_output <= RESIDUAL_TOL,
        eps_ok=eps_measured >= cert.eps_Q - 1e-10,
    )


def construct_spr_benchmark(grid: SpatialGrid, plant_overrides: dict | None = None):
    """Collocated heat benchmark with a passing KYP certificate.

    The output functional is proportional to the input shape in the weighted
    inner product, which makes the system strictly positive real; the
    branch-1 certificate (P = identity) then satisfies the KYP conditions
    with F = 0 and E = C P^{-1}.
    """
    spec = {
        "kind": "heat",
        "collocated": True,
        "nonlinearity": {"name": "sin", "scale": 0.3},
        "alpha_true": [0.4],
        "nu_alpha": 0.5,
        "rho0": 1.0,
    }
    if plant_overrides:
        spec.update(plant_overrides)
    plant = assemble_plant(spec, grid)
    A_m = plant.A  # open-loop stable; K = 0
    base = certificate_for(A_m, grid, plant.n_channels)
    dim = A_m.shape[0]
    F = np.zeros((dim, dim))
    E = np.linalg.solve(base.P.T, plant.C)
    eps_Q = float(np.min(sla.eigvalsh(base.Q_w, base.W)))
    lhs = A_m.T @ base.P_w + base.P_w @ A_m + base.Q_w
    residual_lyap = float(np.linalg.norm(lhs, 2) / np.linalg.norm(base.Q_w, 2))
    residual_output = float(
        np.linalg.norm(E @ base.P - plant.C) / np.linalg.norm(plant.C))
    cert = KypCertificate(F=F, E=E, eps_Q=eps_Q, residual_lyap=residual_lyap,
                          residual_output=residual_output, lyap=base)
    return plant, cert
