"""Command-line experiment runner: config parsing, orchestration, artifacts.

Subcommands map to the laboratory's experiment types: ``run`` (one closed
loop), ``sweep`` (adaptation-gain study), ``certify`` (Lyapunov/KYP
certificate), ``coercivity`` (margin vs. grid refinement), ``reference``
(model-following study). All artifacts are deterministic: CSV cells are
printed with repr-exact floats and plot metadata timestamps are suppressed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis, benchmarks
from .adaptation import ProjectionConfig
from .controller import build_filter, design_K
from .errors import ConfigError, SimulationError
from .lyapunov_lab import certificate_for, check_kyp, coercivity_study, \
    construct_spr_benchmark
from .sim_engine import SimConfig, run, run_reference
from .spatial_model import assemble_plant, build_grid

__all__ = ["parse_config", "ExperimentConfig", "main"]

_PLANT_KEYS = {"kind", "L", "N", "N_list", "diffusivity", "c", "nu",
               "b_shape", "c_shape", "collocated", "c_scale", "nonlinearity",
               "alpha_true", "nu_alpha", "rho0", "A", "B", "C"}
_CONTROLLER_KEYS = {"strategy"}
_FILTER_KEYS = {"order", "omega", "poles"}
_CERT_KEYS = {"mode"}
_ADAPT_KEYS = {"gamma", "gamma_list", "epsilon", "alpha_hat0"}
_SIM_KEYS = {"dt", "horizon", "reference", "rho_w", "blowup_factor",
             "w0_amplitude", "transient_discard"}
_OUTPUT_KEYS = {"plots"}
_TOP_KEYS = {"plant", "controller", "filter", "certificate", "adaptation",
             "simulation", "outputs", "seed"}

DEFAULTS = {
    "controller": {"strategy": "zero"},
    "filter": {"order": 1, "omega": 2.0, "poles": None},
    "certificate": {"mode": "auto"},
    "adaptation": {"gamma": 100.0, "epsilon": 0.1, "alpha_hat0": None},
    "simulation": {"rho_w": 5.0, "blowup_factor": 10.0, "w0_amplitude": 0.5,
                   "reference": {"kind": "constant", "value": 0.0},
                   "transient_discard": None},
    "outputs": {"plots": True},
    "seed": 0,
}


class ExperimentConfig:
    """Validated configuration with its content hash."""

    def __init__(self, data: dict, source: str = "<dict>"):
        self.data = data
        self.source = source
        canonical = json.dumps(data, sort_keys=True, default=str)
        self.hash = hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def __getitem__(self, key):
        return self.data[key]


def _check_keys(section: dict, allowed: set, prefix: str, violations: list):
    for key in section:
        if key not in allowed:
            violations.append(f"unknown key {prefix}{key!r}")


def _merged(data: dict) -> dict:
    out = {}
    for section, defaults in DEFAULTS.items():
        if isinstance(defaults, dict):
            out[section] = dict(defaults) | dict(data.get(section, {}) or {})
        else:
            out[section] = data.get(section, defaults)
    out["plant"] = dict(data.get("plant", {}) or {})
    return out


def validate_config(data: dict) -> list[str]:
    """Collect all schema violations (not just the first)."""
    violations: list[str] = []
    if not isinstance(data, dict):
        return ["config root must be a mapping"]
    _check_keys(data, _TOP_KEYS, "", violations)
    plant = data.get("plant")
    if not isinstance(plant, dict):
        violations.append("missing 'plant' section")
        plant = {}
    _check_keys(plant, _PLANT_KEYS, "plant.", violations)
    if "kind" not in plant:
        violations.append("plant.kind is required")
    if plant.get("kind") not in (None, "heat", "advection_diffusion", "matrix"):
        violations.append(f"unknown plant.kind {plant.get('kind')!r}")
    if "N" not in plant and "N_list" not in plant:
        violations.append("plant.N (or plant.N_list) is required")
    for key in ("L", "N", "diffusivity", "c", "nu", "nu_alpha", "rho0"):
        val = plant.get(key)
        if val is not None and (not isinstance(val, (int, float)) or val <= 0):
            violations.append(f"plant.{key} must be positive")
    _check_keys(data.get("controller", {}) or {}, _CONTROLLER_KEYS,
                "controller.", violations)
    _check_keys(data.get("filter", {}) or {}, _FILTER_KEYS, "filter.",
                violations)
    _check_keys(data.get("certificate", {}) or {}, _CERT_KEYS, "certificate.",
                violations)
    cert_mode = (data.get("certificate", {}) or {}).get("mode", "auto")
    if cert_mode not in ("auto", "identity", "kyp"):
        violations.append(f"unknown certificate.mode {cert_mode!r}")
    if cert_mode == "kyp":
        if plant.get("kind") != "heat" or not plant.get("collocated", False):
            violations.append(
                "certificate.mode 'kyp' needs the collocated heat benchmark "
                "plant (plant.kind: heat, plant.collocated: true)")
    adapt = data.get("adaptation", {}) or {}
    _check_keys(adapt, _ADAPT_KEYS, "adaptation.", violations)
    gamma = adapt.get("gamma")
    if gamma is not None and (not isinstance(gamma, (int, float)) or gamma <= 0):
        violations.append("adaptation.gamma must be positive")
    eps = adapt.get("epsilon")
    if eps is not None and not (0 < eps <= 1):
        violations.append("adaptation.epsilon must lie in (0, 1]")
    glist = adapt.get("gamma_list")
    if glist is not None:
        if (not isinstance(glist, (list, tuple)) or len(glist) < 2
                or any(g <= 0 for g in glist)):
            violations.append(
                "adaptation.gamma_list must hold at least 2 positive gammas")
    sim = data.get("simulation", {}) or {}
    _check_keys(sim, _SIM_KEYS, "simulation.", violations)
    for key in ("dt", "horizon", "rho_w", "blowup_factor"):
        val = sim.get(key)
        if val is not None and (not isinstance(val, (int, float)) or val <= 0):
            violations.append(f"simulation.{key} must be positive")
    _check_keys(data.get("outputs", {}) or {}, _OUTPUT_KEYS, "outputs.",
                violations)
    return violations


def parse_config(path) -> ExperimentConfig:
    """Read, validate, and default-fill a YAML experiment config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    violations = validate_config(data)
    if violations:
        raise ConfigError("invalid config:\n  " + "\n  ".join(violations))
    return ExperimentConfig(_merged(data), source=str(path))


def build_experiment(cfg: ExperimentConfig) -> benchmarks.Benchmark:
    """Assemble the full component stack from a validated config."""
    plant_spec = dict(cfg["plant"])
    L = float(plant_spec.pop("L", 1.0))
    if "N" not in plant_spec:
        raise ConfigError("this command needs plant.N (N_list is only for "
                          "the coercivity study)")
    N = int(plant_spec.pop("N"))
    plant_spec.pop("N_list", None)
    if plant_spec.get("kind") == "matrix":
        from .spatial_model import euclidean_grid
        grid = euclidean_grid(N)
    else:
        grid = build_grid(L, N)
    cert_mode = cfg["certificate"]["mode"]
    kyp = None
    if cert_mode == "kyp":
        overrides = {k: v for k, v in plant_spec.items() if k != "kind"}
        plant, kyp = construct_spr_benchmark(grid, overrides)
    else:
        plant = assemble_plant(plant_spec, grid)
    realization = design_K(plant, cfg["controller"]["strategy"])
    fspec = cfg["filter"]
    filt = build_filter(plant, realization, order=int(fspec["order"]),
                        omega=float(fspec["omega"]), poles=fspec["poles"])
    if kyp is not None:
        cert = kyp.lyap
    else:
        cert = certificate_for(realization.A_m, grid, plant.n_channels,
                               q_mode=cert_mode)
    adapt = cfg["adaptation"]
    proj = ProjectionConfig(kappa=plant.nu_alpha,
                            epsilon=float(adapt["epsilon"]),
                            gamma=float(adapt.get("gamma") or 1.0))
    sim_cfg = cfg["simulation"]
    if sim_cfg.get("dt") is None or sim_cfg.get("horizon") is None:
        raise ConfigError("simulation.dt and simulation.horizon are required "
                          "for this command")
    w0 = sim_cfg["w0_amplitude"] * np.sin(np.pi * grid.nodes / grid.L)
    sim = SimConfig(
        plant=plant, realization=realization, filt=filt, cert=cert, proj=proj,
        w0=w0, dt=float(sim_cfg["dt"]), horizon=float(sim_cfg["horizon"]),
        r=sim_cfg["reference"], alpha_hat0=adapt["alpha_hat0"],
        rho_w=float(sim_cfg["rho_w"]),
        blowup_factor=float(sim_cfg["blowup_factor"]))
    return benchmarks.Benchmark(name=cfg.hash, plant=plant,
                                realization=realization, filt=filt,
                                cert=cert, kyp=kyp, sim=sim)


# ---------------------------------------------------------------------------
# artifact emission

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_metadata(path: Path, cfg: ExperimentConfig, extra: dict):
    payload = {"config_hash": cfg.hash, "config_source": cfg.source} | extra
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_fmt)
        fh.write("\n")


def _plot(path: Path, xs, series: dict, xlabel: str, ylabel: str,
          logy: bool = False):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs, ys, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _trace_csv(path: Path, trace):
    write_csv(path,
              ["t", "u", "y", "r", "sigma", "y_hat_p", "y_hat_h", "y_tilde",
               "norm_w", "norm_wtilde", "norm_P12_wtilde", "V"]
              + [f"alpha_hat_{i}" for i in range(trace.alpha_hat.shape[1])],
              [trace.t, trace.u, trace.y, trace.r, trace.sigma,
               trace.y_hat_p, trace.y_hat_h, trace.y_tilde, trace.norm_w,
               trace.norm_wtilde, trace.norm_P12_wtilde, trace.V]
              + [trace.alpha_hat[:, i]
                 for i in range(trace.alpha_hat.shape[1])])


# ---------------------------------------------------------------------------
# subcommands; each returns a process exit status

def command_run(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    bench = build_experiment(cfg)
    try:
        trace = run(bench.sim)
    except SimulationError as exc:
        (outdir / "summary.txt").write_text(f"RUN FAILED: {exc}\n")
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    _trace_csv(outdir / "trace.csv", trace)
    envelope = analysis.bound_verify(trace, bench.cert)
    track = analysis.tracking_report(trace)
    write_metadata(outdir / "metadata.json", cfg, trace.metadata | {
        "dc_residual": bench.filt.dc_residual,
        "envelope_passed": envelope.passed,
        "envelope_asymptote": envelope.asymptote,
    })
    lines = [
        f"config hash        : {cfg.hash}",
        f"certificate        : branch={bench.cert.q_branch} "
        f"residual={bench.cert.residual:.3e} "
        f"lambda_p={bench.cert.lambda_p:.6g} "
        f"margin={bench.cert.coercivity_margin:.6g}",
        f"dc residual        : {bench.filt.dc_residual:.3e}",
        f"sup ||w||_Z        : {trace.norm_w.max():.6g} (rho_w "
        f"{bench.sim.rho_w:g})",
        f"sup |y - r|        : {track.sup_tracking:.6g}",
        f"sup |y_tilde|      : {np.abs(trace.y_tilde).max():.6g}",
        f"envelope check     : {'pass' if envelope.passed else 'FAIL'}"
        f" ({envelope.violations.size} violations)",
        f"tracking identity  : {track.sup_residual:.3e}",
    ]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    if plots:
        _plot(outdir / "tracking.svg", trace.t,
              {"y": trace.y, "r": trace.r}, "t", "output")
        _plot(outdir / "y_tilde.svg", trace.t,
              {"y_tilde": trace.y_tilde}, "t", "observation error")
        _plot(outdir / "wtilde_norm.svg", trace.t,
              {"||w_tilde||_Z": trace.norm_wtilde}, "t", "state error norm")
        lam, gamma = bench.cert.lambda_p, bench.sim.proj.gamma
        rho1 = trace.metadata["rho1"]
        decay = np.exp(-lam * trace.t)
        env = trace.V[0] * decay + rho1 / (lam * gamma) * (1 - decay)
        _plot(outdir / "lyapunov_envelope.svg", trace.t,
              {"V": trace.V, "envelope": env}, "t", "V(t)")
    return 0 if envelope.passed else 1


def command_sweep(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    bench = build_experiment(cfg)
    gamma_list = cfg["adaptation"].get("gamma_list")
    if not gamma_list:
        print("sweep needs adaptation.gamma_list", file=sys.stderr)
        return 2
    discard = cfg["simulation"]["transient_discard"]
    try:
        study = analysis.gamma_sweep(bench.sim, gamma_list,
                                     transient_discard=discard,
                                     with_reference=True)
    except SimulationError as exc:
        print(f"sweep invalidated: {exc}", file=sys.stderr)
        return 1
    names = sorted(study.metrics)
    write_csv(outdir / "sweep.csv", ["gamma"] + names,
              [study.gamma_list] + [study.metrics[n] for n in names])
    lines = [f"config hash       : {cfg.hash}",
             f"transient discard : {study.transient_discard:.6g}"]
    for n in names:
        lines.append(f"slope[{n}] = {study.slopes[n]:+.4f} "
                     f"(+/- {study.slope_halfwidths[n]:.4f})")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    write_metadata(outdir / "metadata.json", cfg, {
        "slopes": study.slopes,
        "cert_residual": bench.cert.residual})
    if plots:
        _plot(outdir / "sweep.svg", study.gamma_list,
              {n: study.metrics[n] for n in names}, "gamma", "sup metric",
              logy=True)
    return 0


def command_certify(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    bench = build_experiment(cfg)
    cert = bench.cert
    write_csv(outdir / "certificate.csv",
              ["grid_N", "q_branch", "residual", "lambda_p",
               "coercivity_margin"],
              [np.array([cert.grid_N]), np.array([cert.q_branch]),
               np.array([cert.residual]), np.array([cert.lambda_p]),
               np.array([cert.coercivity_margin])])
    lines = [f"config hash : {cfg.hash}",
             f"branch      : {cert.q_branch}",
             f"residual    : {cert.residual:.3e}",
             f"lambda_p    : {cert.lambda_p:.6g}",
             f"margin      : {cert.coercivity_margin:.6g}"]
    status = 0
    if bench.kyp is not None:
        report = check_kyp(bench.realization.A_m, bench.plant.C, bench.kyp,
                           bench.plant.grid, bench.plant.n_channels)
        lines += [f"kyp residual_lyap   : {report.residual_lyap:.3e}",
                  f"kyp residual_output : {report.residual_output:.3e}",
                  f"kyp eps_Q           : {report.eps_Q_measured:.6g}",
                  f"kyp verdict         : "
                  f"{'pass' if report.passed else 'FAIL'}"]
        if not report.passed:
            status = 1
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    write_metadata(outdir / "metadata.json", cfg,
                   {"residual": cert.residual, "lambda_p": cert.lambda_p})
    return status


def command_coercivity(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    plant_spec = dict(cfg["plant"])
    L = float(plant_spec.pop("L", 1.0))
    N_list = plant_spec.pop("N_list", None) or [plant_spec.get("N")]
    plant_spec.pop("N", None)
    q_mode = cfg["certificate"]["mode"]
    if q_mode == "kyp":
        q_mode = "auto"
    rows, slope = coercivity_study(plant_spec, N_list, L=L, q_mode=q_mode)
    write_csv(outdir / "coercivity.csv", ["N", "coercivity_margin", "lambda_p"],
              [np.array([r[0] for r in rows]),
               np.array([r[1] for r in rows]),
               np.array([r[2] for r in rows])])
    lines = [f"config hash : {cfg.hash}"]
    lines += [f"N={r[0]:4d}  margin={r[1]:.6e}  lambda_p={r[2]:.6e}"
              for r in rows]
    if slope is not None:
        lines.append(f"log-log margin slope vs N: {slope:+.4f}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    write_metadata(outdir / "metadata.json", cfg, {"slope": slope})
    if plots and len(rows) > 1:
        _plot(outdir / "margin_vs_N.svg",
              np.array([r[0] for r in rows]),
              {"coercivity margin": np.array([r[1] for r in rows])},
              "N", "margin", logy=True)
    return 0


def command_reference(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    bench = build_experiment(cfg)
    try:
        trace = run(bench.sim)
        ref = run_reference(bench.sim, trace)
    except SimulationError as exc:
        print(f"reference run failed: {exc}", file=sys.stderr)
        return 1
    write_csv(outdir / "reference.csv",
              ["t", "y", "y_ref", "sigma_ref", "u_ref_r", "norm_e_w"],
              [trace.t, trace.y, ref.y_ref, ref.sigma_ref, ref.u_ref_r,
               ref.norm_e_w])
    residual = analysis.model_following_residual(bench.sim, trace, ref)
    lines = [f"config hash          : {cfg.hash}",
             f"sup ||e_w||_Z        : {ref.norm_e_w.max():.6g}",
             f"model-following res. : {residual:.3e}"]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    write_metadata(outdir / "metadata.json", cfg,
                   {"sup_e_w": float(ref.norm_e_w.max()),
                    "model_following_residual": residual})
    if plots:
        _plot(outdir / "model_following.svg", trace.t,
              {"||e_w||_Z": ref.norm_e_w}, "t", "model-following error")
    return 0


COMMANDS = {
    "run": command_run,
    "sweep": command_sweep,
    "certify": command_certify,
    "coercivity": command_coercivity,
    "reference": command_reference,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dyadlab",
        description="Adaptive-control laboratory for distributed plants")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--output-dir", default="out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config RNG seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="max parallel runs (runs are joined in "
                        "deterministic order)")
    parser.add_argument("--no-plots", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.data["seed"] = args.seed
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    plots = cfg["outputs"]["plots"] and not args.no_plots
    try:
        return COMMANDS[args.command](cfg, outdir, plots)
    except (ConfigError, SimulationError) as exc:
        print(exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
