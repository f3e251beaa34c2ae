"""Fixed-step integration of the augmented closed-loop system.

One state vector carries the plant, both observer halves, the filter state
and the parameter estimate; everything is stepped together with classical
RK4 so that a-posteriori order checks apply to every recorded signal. The
auxiliary reference system (true uncertainty known, no observers) reuses the
main run's time grid so model-following errors are pointwise subtractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adaptation import ProjectionConfig, adaptive_rhs
from .controller import (ClosedLoopRealization, FilterRealization,
                         control_input, sigma_signal)
from .errors import ConfigError, DimensionError, SimulationError
from .lyapunov_lab import LyapunovCertificate
from .spatial_model import PlantModel, eval_nonlinearity, z_norm

__all__ = [
    "SimConfig",
    "SimulationTrace",
    "ReferenceTrace",
    "make_reference",
    "rk4_stability_limit",
    "step_rk4",
    "rhs_augmented",
    "run",
    "run_reference",
    "trace_norms",
]

RK4_REAL_AXIS = 2.78


def make_reference(spec) -> Callable[[float], float]:
    """Reference signal from a spec dict: constant, step, or sinusoid."""
    if callable(spec):
        return spec
    spec = dict(spec)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        value = float(spec.get("value", 0.0))
        return lambda t: value
    if kind == "step":
        value = float(spec.get("value", 1.0))
        t0 = float(spec.get("t0", 0.0))
        return lambda t: value if t >= t0 else 0.0
    if kind == "sinusoid":
        amp = float(spec.get("amplitude", 1.0))
        omega = float(spec.get("omega", 1.0))
        offset = float(spec.get("offset", 0.0))
        return lambda t: offset + amp * np.sin(omega * t)
    raise ConfigError(f"unknown reference kind {kind!r}")


@dataclass
class SimConfig:
    """Everything needed for one closed-loop run."""

    plant: PlantModel
    realization: ClosedLoopRealization
    filt: FilterRealization
    cert: LyapunovCertificate
    proj: ProjectionConfig
    w0: np.ndarray
    dt: float
    horizon: float
    r: Callable[[float], float] | dict = field(default_factory=dict)
    alpha_hat0: np.ndarray | None = None
    rho_w: float = 10.0
    blowup_factor: float = 10.0
    diagnostics: bool = False
    keep_states: bool = True

    def __post_init__(self):
        self.r = make_reference(self.r)
        if self.alpha_hat0 is None:
            self.alpha_hat0 = np.zeros(self.plant.n_channels)
        self.alpha_hat0 = np.atleast_1d(np.asarray(self.alpha_hat0, dtype=float))
        self.w0 = np.asarray(self.w0, dtype=float)
        if self.w0.size != self.plant.dim:
            raise DimensionError(
                f"w0 has size {self.w0.size}, plant dimension is {self.plant.dim}")
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("dt and horizon must be positive")
        limit = rk4_stability_limit(self.realization.A_m)
        if self.dt > limit:
            raise ConfigError(
                f"dt = {self.dt:.3g} exceeds the RK4 stability limit "
                f"{limit:.3g} for the linear part")
        self.plant.check_initial_condition(self.w0)


def rk4_stability_limit(A_m: np.ndarray) -> float:
    """Heuristic step bound 0.8 * 2.78 / max |eig(A_m)| for the linear part."""
    rad = float(np.max(np.abs(np.linalg.eigvals(A_m))))
    return 0.8 * RK4_REAL_AXIS / rad


def step_rk4(y: np.ndarray, t: float, dt: float, rhs) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _unpack(y: np.ndarray, dim: int, n_p: int, n: int):
    w = y[:dim]
    w_hat_p = y[dim:2 * dim]
    w_hat_h = y[2 * dim:3 * dim]
    p = y[3 * dim:3 * dim + n_p]
    alpha_hat = y[3 * dim + n_p:3 * dim + n_p + n]
    return w, w_hat_p, w_hat_h, p, alpha_hat


def rhs_augmented(cfg: SimConfig) -> Callable[[float, np.ndarray], np.ndarray]:
    """Closure computing the derivative of the full augmented state.

    State layout: [w, w_hat_p, w_hat_h, p, alpha_hat] plus, in diagnostics
    mode, the co-simulated truth halves [w_p, w_h].
    """
    plant, real, filt = cfg.plant, cfg.realization, cfg.filt
    dim, n = plant.dim, plant.n_channels
    n_p = filt.order
    A, A_m, B, C = plant.A, real.A_m, plant.B, plant.C
    P = cfg.cert.P
    grid = plant.grid
    base = 3 * dim + n_p + n
    r_of_t = cfg.r

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        w, w_hat_p, w_hat_h, p, alpha_hat = _unpack(y, dim, n_p, n)
        f_field = eval_nonlinearity(plant.f_spec, w, grid.N)
        u = control_input(real, filt, w, p)
        dw = A @ w + B * u + plant.forcing(f_field, plant.alpha_true)
        sigma = sigma_signal(r_of_t(t), float(C @ w_hat_p))
        dp = filt.H_A @ p + filt.H_B * sigma
        d_hat_p = A_m @ w_hat_p + plant.forcing(f_field, alpha_hat)
        d_hat_h = A_m @ w_hat_h - B * float(filt.H_C @ p)
        w_tilde = w_hat_p + w_hat_h - w
        d_alpha = adaptive_rhs(alpha_hat, P, w_tilde, f_field, cfg.proj, grid)
        out = np.empty_like(y)
        out[:dim] = dw
        out[dim:2 * dim] = d_hat_p
        out[2 * dim:3 * dim] = d_hat_h
        out[3 * dim:3 * dim + n_p] = dp
        out[3 * dim + n_p:base] = d_alpha
        if y.size > base:
            # diagnostic truth halves: w_p carries the uncertainty, w_h the input
            w_p = y[base:base + dim]
            w_h = y[base + dim:base + 2 * dim]
            out[base:base + dim] = A_m @ w_p + plant.forcing(
                f_field, plant.alpha_true)
            out[base + dim:base + 2 * dim] = A_m @ w_h - B * float(filt.H_C @ p)
        if not np.all(np.isfinite(out)):
            raise SimulationError(f"non-finite derivative at t = {t:.6g}")
        return out

    return rhs


@dataclass
class SimulationTrace:
    """Time-indexed record of one closed-loop run."""

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    sigma: np.ndarray
    y_hat_p: np.ndarray
    y_hat_h: np.ndarray
    y_tilde: np.ndarray
    norm_w: np.ndarray
    norm_wtilde: np.ndarray
    norm_P12_wtilde: np.ndarray
    V: np.ndarray
    alpha_hat: np.ndarray
    metadata: dict
    # full state histories (rows indexed by sample) when keep_states is set
    w_hist: np.ndarray | None = None
    w_hat_p_hist: np.ndarray | None = None
    w_hat_h_hist: np.ndarray | None = None
    p_hist: np.ndarray | None = None
    # diagnostic truth-half outputs
    y_p: np.ndarray | None = None
    y_h: np.ndarray | None = None
    norm_wtilde_p: np.ndarray | None = None
    norm_wtilde_h: np.ndarray | None = None


def run(cfg: SimConfig) -> SimulationTrace:
    """Integrate the closed-loop system and record the trace.

    Enforces the dyadic initial conditions (homogeneous half starts at the
    plant state, particular half at zero, so the observation error starts at
    zero exactly) and aborts if the state norm trips the blow-up guard.
    """
    plant, filt = cfg.plant, cfg.filt
    dim, n = plant.dim, plant.n_channels
    n_p = filt.order
    grid = plant.grid
    n_steps = int(round(cfg.horizon / cfg.dt))
    base = 3 * dim + n_p + n
    size = base + (2 * dim if cfg.diagnostics else 0)

    y = np.zeros(size)
    y[:dim] = cfg.w0
    y[2 * dim:3 * dim] = cfg.w0          # w_hat_h(0) = w(0)
    y[3 * dim + n_p:base] = cfg.alpha_hat0
    if cfg.diagnostics:
        y[base + dim:base + 2 * dim] = cfg.w0   # truth halves: w_h(0) = w(0)

    rhs = rhs_augmented(cfg)
    n_rec = n_steps + 1
    rec = {k: np.zeros(n_rec) for k in
           ("u", "y", "r", "sigma", "y_hat_p", "y_hat_h", "y_tilde",
            "norm_w", "norm_wtilde", "norm_P12_wtilde", "V")}
    alpha_rec = np.zeros((n_rec, n))
    t_rec = cfg.dt * np.arange(n_rec)
    states = None
    if cfg.keep_states:
        states = {"w": np.zeros((n_rec, dim)), "w_hat_p": np.zeros((n_rec, dim)),
                  "w_hat_h": np.zeros((n_rec, dim)), "p": np.zeros((n_rec, n_p))}
    diag = None
    if cfg.diagnostics:
        diag = {k: np.zeros(n_rec) for k in
                ("y_p", "y_h", "norm_wtilde_p", "norm_wtilde_h")}

    gamma = cfg.proj.gamma
    guard = cfg.blowup_factor * cfg.rho_w

    def record(i, t, y):
        w, w_hat_p, w_hat_h, p, alpha_hat = _unpack(y, dim, n_p, n)
        w_tilde = w_hat_p + w_hat_h - w
        nw = z_norm(grid, w)
        if not np.isfinite(nw) or nw > guard:
            raise SimulationError(
                f"blow-up guard tripped at t = {t:.6g}: ||w||_Z = {nw:.4g} "
                f"exceeds {cfg.blowup_factor} * rho_w = {guard:.4g}")
        rr = cfg.r(t)
        y_hat_p = float(plant.C @ w_hat_p)
        rec["u"][i] = control_input(cfg.realization, filt, w, p)
        rec["y"][i] = float(plant.C @ w)
        rec["r"][i] = rr
        rec["sigma"][i] = sigma_signal(rr, y_hat_p)
        rec["y_hat_p"][i] = y_hat_p
        rec["y_hat_h"][i] = float(plant.C @ w_hat_h)
        rec["y_tilde"][i] = float(plant.C @ w_tilde)
        rec["norm_w"][i] = nw
        rec["norm_wtilde"][i] = z_norm(grid, w_tilde)
        quad = max(float(w_tilde @ cfg.cert.P_w @ w_tilde), 0.0)
        rec["norm_P12_wtilde"][i] = np.sqrt(quad)
        alpha_err = alpha_hat - plant.alpha_true
        rec["V"][i] = quad + float(alpha_err @ alpha_err) / gamma
        alpha_rec[i] = alpha_hat
        if states is not None:
            states["w"][i] = w
            states["w_hat_p"][i] = w_hat_p
            states["w_hat_h"][i] = w_hat_h
            states["p"][i] = p
        if diag is not None:
            w_p = y[base:base + dim]
            w_h = y[base + dim:base + 2 * dim]
            diag["y_p"][i] = float(plant.C @ w_p)
            diag["y_h"][i] = float(plant.C @ w_h)
            diag["norm_wtilde_p"][i] = z_norm(grid, w_hat_p - w_p)
            diag["norm_wtilde_h"][i] = z_norm(grid, w_hat_h - w_h)

    record(0, 0.0, y)
    for i in range(1, n_steps + 1):
        y = step_rk4(y, t_rec[i - 1], cfg.dt, rhs)
        record(i, t_rec[i], y)

    nu_alpha = plant.nu_alpha
    rho1 = cfg.cert.lambda_p * n * (nu_alpha * (2.0 + cfg.proj.epsilon)) ** 2
    metadata = {
        "gamma": gamma,
        "epsilon": cfg.proj.epsilon,
        "nu_alpha": nu_alpha,
        "lambda_p": cfg.cert.lambda_p,
        "rho1": rho1,
        "cert_residual": cfg.cert.residual,
        "coercivity_margin": cfg.cert.coercivity_margin,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "rho_w": cfg.rho_w,
        "plant": plant.name,
        "grid_N": grid.N,
    }
    trace = SimulationTrace(
        t=t_rec, alpha_hat=alpha_rec, metadata=metadata,
        **{k: v for k, v in rec.items()})
    if states is not None:
        trace.w_hist = states["w"]
        trace.w_hat_p_hist = states["w_hat_p"]
        trace.w_hat_h_hist = states["w_hat_h"]
        trace.p_hist = states["p"]
    if diag is not None:
        trace.y_p = diag["y_p"]
        trace.y_h = diag["y_h"]
        trace.norm_wtilde_p = diag["norm_wtilde_p"]
        trace.norm_wtilde_h = diag["norm_wtilde_h"]
    return trace


@dataclass
class ReferenceTrace:
    """Auxiliary reference run plus model-following errors."""

    t: np.ndarray
    y_ref: np.ndarray
    sigma_ref: np.ndarray
    u_ref_r: np.ndarray
    norm_e_w: np.ndarray
    e_p: np.ndarray
    w_ref_hist: np.ndarray
    w_ref_p_hist: np.ndarray
    w_ref_h_hist: np.ndarray
    p_ref_hist: np.ndarray
    e_w_hist: np.ndarray


def run_reference(cfg: SimConfig, trace: SimulationTrace) -> ReferenceTrace:
    """Integrate the auxiliary reference system on the main run's time grid.

    The reference loop knows the true uncertainty (alpha f applied to its
    own state) and needs no observers; its halves are split the same way.
    Model-following errors are pointwise subtractions against the main trace.
    """
    if trace.w_hist is None or trace.p_hist is None:
        raise ConfigError("main trace must be recorded with keep_states=True")
    plant, real, filt = cfg.plant, cfg.realization, cfg.filt
    dim = plant.dim
    n_p = filt.order
    A_m, B, C = real.A_m, plant.B, plant.C
    grid = plant.grid
    r_of_t = cfg.r

    def rhs(t, y):
        w_ref = y[:dim]
        w_ref_p = y[dim:2 * dim]
        w_ref_h = y[2 * dim:3 * dim]
        p_ref = y[3 * dim:3 * dim + n_p]
        f_field = eval_nonlinearity(plant.f_spec, w_ref, grid.N)
        forcing = plant.forcing(f_field, plant.alpha_true)
        u_ref_r = -float(filt.H_C @ p_ref)
        sigma_ref = r_of_t(t) - float(C @ w_ref_p)
        out = np.empty_like(y)
        out[:dim] = A_m @ w_ref + B * u_ref_r + forcing
        out[dim:2 * dim] = A_m @ w_ref_p + forcing
        out[2 * dim:3 * dim] = A_m @ w_ref_h + B * u_ref_r
        out[3 * dim:] = filt.H_A @ p_ref + filt.H_B * sigma_ref
        return out

    n_rec = trace.t.size
    y = np.zeros(3 * dim + n_p)
    y[:dim] = cfg.w0                 # w_ref(0) = w(0)
    y[2 * dim:3 * dim] = cfg.w0      # half split mirrors the observer ICs

    hists = {k: np.zeros((n_rec, dim)) for k in ("w_ref", "w_ref_p", "w_ref_h")}
    p_hist = np.zeros((n_rec, n_p))
    y_ref = np.zeros(n_rec)
    sigma_ref = np.zeros(n_rec)
    u_ref_r = np.zeros(n_rec)

    def record(i, t, y):
        hists["w_ref"][i] = y[:dim]
        hists["w_ref_p"][i] = y[dim:2 * dim]
        hists["w_ref_h"][i] = y[2 * dim:3 * dim]
        p_hist[i] = y[3 * dim:]
        y_ref[i] = float(C @ y[:dim])
        sigma_ref[i] = r_of_t(t) - float(C @ y[dim:2 * dim])
        u_ref_r[i] = -float(filt.H_C @ y[3 * dim:])

    record(0, 0.0, y)
    for i in range(1, n_rec):
        y = step_rk4(y, trace.t[i - 1], cfg.dt, rhs)
        record(i, trace.t[i], y)

    e_w_hist = trace.w_hist - hists["w_ref"]
    norm_e_w = np.array([z_norm(grid, e) for e in e_w_hist])
    e_p = trace.p_hist - p_hist
    return ReferenceTrace(
        t=trace.t, y_ref=y_ref, sigma_ref=sigma_ref, u_ref_r=u_ref_r,
        norm_e_w=norm_e_w, e_p=e_p, w_ref_hist=hists["w_ref"],
        w_ref_p_hist=hists["w_ref_p"], w_ref_h_hist=hists["w_ref_h"],
        p_ref_hist=p_hist, e_w_hist=e_w_hist)


def trace_norms(trace: SimulationTrace, tau: float):
    """Truncated norms up to time tau: sup state norm, sup and L2 of y_tilde,
    and the running maximum of the Lyapunov functional."""
    if tau < trace.t[0] or tau > trace.t[-1] + 1e-12:
        raise ConfigError(f"tau = {tau} outside the trace horizon")
    mask = trace.t <= tau + 1e-12
    w_W = float(np.max(trace.norm_w[mask]))
    yt_inf = float(np.max(np.abs(trace.y_tilde[mask])))
    yt_l2 = float(np.sqrt(np.trapezoid(trace.y_tilde[mask] ** 2,
                                       trace.t[mask])))
    v_sup = float(np.max(trace.V[mask]))
    return w_W, yt_inf, yt_l2, v_sup
