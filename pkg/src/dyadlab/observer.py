"""Dyadic observer: particular and homogeneous halves and their errors.

The particular half carries the estimated uncertainty, the homogeneous half
carries the filtered control. Their sum estimates the plant state; the
observation error w_tilde = w_hat_p + w_hat_h - w is always recomputed from
this definition rather than integrated separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import ClosedLoopRealization, FilterRealization
from .errors import DimensionError
from .spatial_model import PlantModel

__all__ = ["ObserverState", "ObservationError", "observer_rhs",
           "observation_error"]


@dataclass
class ObserverState:
    """Particular and homogeneous observer halves."""

    w_hat_p: np.ndarray
    w_hat_h: np.ndarray

    @classmethod
    def initial(cls, w0: np.ndarray) -> "ObserverState":
        """Enforced initial conditions: w_hat_h(0) = w(0), w_hat_p(0) = 0."""
        return cls(w_hat_p=np.zeros_like(w0), w_hat_h=np.array(w0, dtype=float))


@dataclass(frozen=True)
class ObservationError:
    w_tilde: np.ndarray
    y_tilde: float


def observer_rhs(obs: ObserverState, alpha_hat: np.ndarray,
                 f_field: np.ndarray, p: np.ndarray,
                 realization: ClosedLoopRealization,
                 filt: FilterRealization, plant: PlantModel):
    """Right-hand sides of the two observer halves.

    d(w_hat_p)/dt = A_m w_hat_p + alpha_hat f(w)   (channelwise placement)
    d(w_hat_h)/dt = A_m w_hat_h - B H_C p
    """
    A_m = realization.A_m
    if obs.w_hat_p.shape != obs.w_hat_h.shape or obs.w_hat_p.size != A_m.shape[0]:
        raise DimensionError("observer state does not conform to A_m")
    d_p = A_m @ obs.w_hat_p + plant.forcing(f_field, alpha_hat)
    d_h = A_m @ obs.w_hat_h - plant.B * float(filt.H_C @ p)
    return d_p, d_h


def observation_error(obs: ObserverState, w: np.ndarray,
                      C: np.ndarray) -> ObservationError:
    """w_tilde = w_hat_p + w_hat_h - w and its output."""
    w_tilde = obs.w_hat_p + obs.w_hat_h - w
    return ObservationError(w_tilde=w_tilde, y_tilde=float(C @ w_tilde))
