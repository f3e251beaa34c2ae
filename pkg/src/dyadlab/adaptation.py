"""Projection operator and the projection-based adaptive law.

The scalar potential pi(a) = (|a|^2 - kappa^2) / (eps kappa^2) defines the
nested sets Omega_0 = {pi <= 0} and Omega_1 = {pi <= 1}; the projection
removes the outward radial component of the drive smoothly across the
transition band, which keeps Omega_1 forward-invariant under the adaptive
flow. The adaptive law is componentwise: each parameter estimate carries its
own scalar potential with kappa equal to the parameter bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .spatial_model import SpatialGrid

__all__ = [
    "ProjectionConfig",
    "pi_potential",
    "pi_gradient",
    "proj",
    "proj_scalar",
    "adaptive_rhs",
    "omega1_radius",
]


@dataclass(frozen=True)
class ProjectionConfig:
    """Projection bound kappa, transition margin epsilon, adaptation gain gamma."""

    kappa: float
    epsilon: float = 0.1
    gamma: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not (0 < self.epsilon <= 1):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def omega1_radius(cfg: ProjectionConfig) -> float:
    """Radius of the outer invariant set Omega_1."""
    return cfg.kappa * np.sqrt(1.0 + cfg.epsilon)


def pi_potential(alpha, cfg: ProjectionConfig) -> float:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    return float((alpha @ alpha - cfg.kappa**2) / (cfg.epsilon * cfg.kappa**2))


def pi_gradient(alpha, cfg: ProjectionConfig) -> np.ndarray:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    return 2.0 * alpha / (cfg.epsilon * cfg.kappa**2)


def proj(alpha1, alpha2, cfg: ProjectionConfig) -> np.ndarray:
    """Case-exact evaluation of the projection of drive alpha2 at alpha1.

    Interior points and inward drives pass through unchanged; otherwise the
    outward radial component is scaled down by the potential value. At the
    zero-gradient point the first case applies (the inner product vanishes).
    """
    alpha1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
    alpha2 = np.atleast_1d(np.asarray(alpha2, dtype=float))
    if alpha1.shape != alpha2.shape:
        raise DimensionError(f"shape mismatch: {alpha1.shape} vs {alpha2.shape}")
    p = pi_potential(alpha1, cfg)
    grad = pi_gradient(alpha1, cfg)
    if p <= 0 or float(grad @ alpha2) <= 0:
        return alpha2.copy()
    unit = grad / np.linalg.norm(grad)
    return alpha2 - unit * float(unit @ alpha2) * p


def proj_scalar(alpha1: float, alpha2: float, cfg: ProjectionConfig) -> float:
    """Scalar specialization used by the componentwise adaptive law."""
    p = (alpha1 * alpha1 - cfg.kappa**2) / (cfg.epsilon * cfg.kappa**2)
    if p <= 0 or alpha1 * alpha2 <= 0:
        return alpha2
    return alpha2 * (1.0 - p)


def adaptive_rhs(alpha_hat: np.ndarray, P: np.ndarray, w_tilde: np.ndarray,
                 f_field: np.ndarray, cfg: ProjectionConfig,
                 grid: SpatialGrid) -> np.ndarray:
    """Componentwise projection-based adaptive law.

    The drive for component i is the negative weighted inner product of
    P w_tilde with the nonlinearity field placed in channel i.
    """
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    n = alpha_hat.size
    if w_tilde.size != n * grid.N or f_field.size != grid.N:
        raise DimensionError(
            f"dimensions do not conform: w_tilde {w_tilde.size}, "
            f"f_field {f_field.size}, n = {n}, N = {grid.N}")
    Pw = (P @ w_tilde).reshape(n, grid.N)
    drive = -(Pw @ (grid.weights * f_field))
    out = np.empty(n)
    for i in range(n):
        out[i] = cfg.gamma * proj_scalar(alpha_hat[i], drive[i], cfg)
    return out
