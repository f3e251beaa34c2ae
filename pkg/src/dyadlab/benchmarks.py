"""Canonical benchmark setups used by the experiment suite and the CLI.

Three regimes:

- coercive: heat plant, where the auto-selected Q makes P the identity;
- spr: collocated heat plant carrying a verified KYP certificate;
- noncoercive: advection-dominated plant, where the certificate's
  coercivity margin decays under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptation import ProjectionConfig
from .controller import ClosedLoopRealization, FilterRealization, \
    build_filter, design_K
from .lyapunov_lab import KypCertificate, LyapunovCertificate, \
    certificate_for, construct_spr_benchmark
from .sim_engine import SimConfig
from .spatial_model import PlantModel, assemble_plant, build_grid

__all__ = ["Benchmark", "coercive_heat", "spr_collocated", "advection",
           "HEAT_SPEC", "ADVECTION_SPEC"]

HEAT_SPEC = {
    "kind": "heat",
    "nonlinearity": {"name": "sin", "scale": 0.3},
    "alpha_true": [0.4],
    "nu_alpha": 0.5,
    "rho0": 1.0,
    "b_shape": "sine",
    "c_shape": "normalized_sine",
}

ADVECTION_SPEC = {
    "kind": "advection_diffusion",
    "c": 1.0,
    "nu": 0.01,
    "nonlinearity": {"name": "sin", "scale": 0.3},
    "alpha_true": [0.4],
    "nu_alpha": 0.5,
    "rho0": 1.0,
    "b_shape": "sine",
    "c_shape": "normalized_sine",
}


@dataclass
class Benchmark:
    name: str
    plant: PlantModel
    realization: ClosedLoopRealization
    filt: FilterRealization
    cert: LyapunovCertificate
    kyp: KypCertificate | None
    sim: SimConfig


def _default_w0(plant: PlantModel, amplitude: float = 0.5) -> np.ndarray:
    grid = plant.grid
    return amplitude * np.sin(np.pi * grid.nodes / grid.L)


def _bundle(name: str, plant: PlantModel, kyp, dt: float, horizon: float,
            gamma: float, omega: float, r_value: float,
            q_mode: str = "auto") -> Benchmark:
    realization = design_K(plant, "zero")
    filt = build_filter(plant, realization, omega=omega)
    if kyp is not None:
        cert = kyp.lyap
    else:
        cert = certificate_for(realization.A_m, plant.grid, plant.n_channels,
                               q_mode=q_mode)
    proj = ProjectionConfig(kappa=plant.nu_alpha, epsilon=0.1, gamma=gamma)
    sim = SimConfig(
        plant=plant, realization=realization, filt=filt, cert=cert,
        proj=proj, w0=_default_w0(plant), dt=dt, horizon=horizon,
        r={"kind": "constant", "value": r_value}, rho_w=5.0)
    return Benchmark(name=name, plant=plant, realization=realization,
                     filt=filt, cert=cert, kyp=kyp, sim=sim)


def coercive_heat(N: int = 40, gamma: float = 100.0, dt: float = 2e-3,
                  horizon: float = 12.0) -> Benchmark:
    """Heat plant on [0, pi]: branch-1 certificate, P = identity."""
    grid = build_grid(np.pi, N)
    plant = assemble_plant(HEAT_SPEC, grid)
    return _bundle("coercive_heat", plant, None, dt, horizon, gamma,
                   omega=2.0, r_value=0.5)


def spr_collocated(N: int = 40, gamma: float = 100.0, dt: float = 2e-3,
                   horizon: float = 12.0) -> Benchmark:
    """Collocated heat plant with its constructed KYP certificate."""
    grid = build_grid(np.pi, N)
    plant, kyp = construct_spr_benchmark(grid)
    return _bundle("spr_collocated", plant, kyp, dt, horizon, gamma,
                   omega=2.0, r_value=0.5)


def advection(N: int = 50, gamma: float = 200.0, dt: float = 4e-3,
              horizon: float = 30.0) -> Benchmark:
    """Advection-dominated plant on [0, 1]: identity-Q certificate."""
    grid = build_grid(1.0, N)
    plant = assemble_plant(ADVECTION_SPEC, grid)
    # the general non-coercive regime works with the identity-operator Q
    return _bundle("advection", plant, None, dt, horizon, gamma,
                   omega=2.0, r_value=0.5, q_mode="identity")
