"""Stabilizing gain, low-pass filter with the DC-gain condition, control law.

The control signal is u = -K w - H_C p with the filter state p driven by
sigma = r - y_hat_p. The filter's DC gain is scaled so that the cascade
plant DC gain times filter DC gain equals -1, which makes constant
references track exactly in steady state for the linear loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DesignError, DimensionError
from .spatial_model import PlantModel, mass_matrix

__all__ = [
    "ClosedLoopRealization",
    "FilterRealization",
    "design_K",
    "build_filter",
    "control_input",
    "sigma_signal",
]


@dataclass(frozen=True)
class ClosedLoopRealization:
    """Stabilized linear part with its fitted semigroup envelope.

    The envelope constants (M, beta) dominate the weighted operator norm of
    exp(A_m t) over a sampled time set; Tstar_bound = M/beta bounds the
    induced norm of the convolution with the semigroup.
    """

    K: np.ndarray
    A_m: np.ndarray
    M: float
    beta: float
    Tstar_bound: float

    def __post_init__(self):
        if self.M < 1 or self.beta <= 0:
            raise DesignError(f"invalid envelope M={self.M}, beta={self.beta}")


@dataclass(frozen=True)
class FilterRealization:
    """Strictly proper stable filter (H_A, H_B, H_C) with recorded DC residual."""

    H_A: np.ndarray
    H_B: np.ndarray
    H_C: np.ndarray
    dc_residual: float

    @property
    def order(self) -> int:
        return self.H_A.shape[0]

    def dc_gain(self) -> float:
        return float(self.H_C @ np.linalg.solve(-self.H_A, self.H_B))


def _weighted_opnorm_samples(A_m: np.ndarray, W: np.ndarray, times: np.ndarray):
    """Weighted operator norm of exp(A_m t) at the sampled times."""
    s = np.sqrt(np.diag(W))
    lam, V = np.linalg.eig(A_m)
    Vs = (V * s[:, None])
    Vinv_s = np.linalg.inv(V) / s[None, :]
    norms = np.empty(times.size)
    for k, t in enumerate(times):
        M_t = (Vs * np.exp(lam * t)[None, :]) @ Vinv_s
        norms[k] = np.linalg.norm(M_t, 2)
    return norms


def design_K(plant: PlantModel, strategy: str = "zero") -> ClosedLoopRealization:
    """Design the stabilizing gain and fit the semigroup envelope.

    Strategies: ``zero`` (open-loop stable catalog plants, the default) and
    ``lqr`` (quadratic regulator with the mass matrix as state weight and
    unit input weight).
    """
    A, B = plant.A, plant.B
    W = mass_matrix(plant.grid, plant.n_channels)
    if strategy == "zero":
        K = np.zeros(plant.dim)
    elif strategy == "lqr":
        try:
            P_are = sla.solve_continuous_are(A, B[:, None], W, np.array([[1.0]]))
        except Exception as exc:
            raise DesignError(f"Riccati solve failed: {exc}") from exc
        K = (B @ P_are)
    else:
        raise DesignError(f"unknown gain strategy {strategy!r}")
    A_m = A - np.outer(B, K)
    eigs = np.linalg.eigvals(A_m)
    max_re = float(np.max(eigs.real))
    if max_re >= 0:
        raise DesignError(
            f"design failure: A_m not Hurwitz (max real part {max_re:.3e})")
    beta = 0.95 * abs(max_re)
    times = np.linspace(0.0, 20.0 / beta, 200)
    norms = _weighted_opnorm_samples(A_m, W, times)
    M = max(1.0, float(np.max(norms * np.exp(beta * times))))
    return ClosedLoopRealization(K=K, A_m=A_m, M=M, beta=beta,
                                 Tstar_bound=M / beta)


def plant_dc_gain(plant: PlantModel, realization: ClosedLoopRealization) -> float:
    """C (-A_m)^{-1} B of the stabilized plant."""
    return float(plant.C @ np.linalg.solve(-realization.A_m, plant.B))


def build_filter(plant: PlantModel, realization: ClosedLoopRealization,
                 order: int = 1, omega: float = 1.0,
                 poles=None) -> FilterRealization:
    """Construct the filter and scale H_C to meet the DC-gain condition.

    The default is a first-order filter with pole -omega and H_B = omega.
    For higher orders supply ``poles`` (all in the open left half plane);
    H_A is the companion realization, H_B the last basis column, and H_C a
    scaled nominal row.
    """
    g_plant = plant_dc_gain(plant, realization)
    if abs(g_plant) < 1e-14:
        raise DesignError("filter infeasible: plant DC gain is zero")
    if poles is None:
        if order != 1:
            raise DesignError("poles must be supplied for filters of order > 1")
        if omega <= 0:
            raise DesignError(f"filter bandwidth must be positive, got {omega}")
        H_A = np.array([[-omega]])
        H_B = np.array([omega])
        H_C = np.array([-1.0 / g_plant])
    else:
        poles = np.asarray(poles, dtype=float)
        if np.any(poles >= 0):
            raise DesignError(f"filter poles must be strictly negative: {poles}")
        n_p = poles.size
        coeffs = np.poly(poles)  # monic characteristic polynomial
        H_A = np.zeros((n_p, n_p))
        H_A[:-1, 1:] = np.eye(n_p - 1)
        H_A[-1, :] = -coeffs[1:][::-1]
        H_B = np.zeros(n_p)
        H_B[-1] = 1.0
        nominal = np.zeros(n_p)
        nominal[0] = 1.0
        g_nominal = float(nominal @ np.linalg.solve(-H_A, H_B))
        if abs(g_nominal) < 1e-14:
            raise DesignError("nominal filter row has zero DC gain")
        H_C = nominal * (-1.0 / (g_plant * g_nominal))
    dc_residual = abs(g_plant * float(H_C @ np.linalg.solve(-H_A, H_B)) + 1.0)
    return FilterRealization(H_A=H_A, H_B=H_B, H_C=H_C,
                             dc_residual=float(dc_residual))


def control_input(realization: ClosedLoopRealization, filt: FilterRealization,
                  w: np.ndarray, p: np.ndarray) -> float:
    """u = -K w - H_C p."""
    if w.shape != realization.K.shape or p.shape != filt.H_C.shape:
        raise DimensionError(
            f"dimension mismatch: w {w.shape} vs K {realization.K.shape}, "
            f"p {p.shape} vs H_C {filt.H_C.shape}")
    u = -float(realization.K @ w) - float(filt.H_C @ p)
    if not np.isfinite(u):
        raise DimensionError("non-finite state passed to control law")
    return u


def sigma_signal(r: float, y_hat_p: float) -> float:
    """Reference for the homogeneous half: sigma = r - y_hat_p."""
    return r - y_hat_p
