"""Command line: pfem <assemble|simulate|spectrum|converge|verify> --config <path> [--out <dir>] [--seed <n>].

Exit codes: 0 success, 2 user/config error, 3 numerical failure.
"""
import argparse
from dataclasses import replace
from pathlib import Path
import sys

import numpy as np

from . import sim, spectra, verify
from .config import ConfigError, ScenarioConfig, load_config
from .models import build

EXIT_OK = 0
EXIT_USER = 2
EXIT_NUMERIC = 3


class NumericalFailure(RuntimeError):
    pass


def _outdir(args, cfg: ScenarioConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_assemble(args, cfg: ScenarioConfig) -> int:
    prob = build(cfg.model)
    out = _outdir(args, cfg)
    prob.ops.export(out)
    for name, shape in prob.ops.shapes.items():
        print(f"{name}: {shape[0]}x{shape[1]}")
    print(f"wrote {out}")
    return EXIT_OK


def _signal(prob, cfg: ScenarioConfig) -> sim.BoundarySignal:
    s = cfg.signal
    w = sim.side_weights(prob, s.sides) if s.sides else np.zeros(prob.sys.nb)
    sig = sim.BoundarySignal(w, 1.0, s.omega, s.func, s.t0, s.t1)
    if s.amplitude == "auto":
        if not s.sides:
            raise ConfigError("signal.amplitude = 'auto' needs at least one side in signal.sides")
        A = sim.calibrate_amplitude(prob, sig, cfg.run.t_end, cfg.run.dt, s.target)
        print(f"calibrated amplitude {A:.6e} (target max |h-h0|/h0 = {s.target:g})")
    else:
        A = float(s.amplitude)
    return sig.scaled(A * s.factor)


def cmd_simulate(args, cfg: ScenarioConfig) -> int:
    prob = build(cfg.model)
    run = cfg.run
    sig = _signal(prob, cfg)
    out = _outdir(args, cfg)
    x0 = prob.flat_state()
    try:
        traj = sim.simulate(prob.sys, x0, sig, run.t_end, run.dt, run.snapshots, run.integrator)
    except sim.SimulationError as exc:
        sim.write_outputs(out, prob, exc.trajectory)
        raise NumericalFailure(f"{exc} (partial trajectory written to {out})") from None
    sim.write_outputs(out, prob, traj)
    print(f"final H = {float(traj.H[-1])!r}")
    print(f"max volume drift = {traj.volume_drift().max():.3e}")
    print(f"max power residual = {traj.power_residual_max:.3e}")
    if run.compare_linearized:
        lsys = sim.linearized_system(prob)
        try:
            lt = sim.simulate(lsys, x0, sig, run.t_end, run.dt, run.snapshots, run.integrator,
                              check_power=False)
        except sim.SimulationError as exc:
            raise NumericalFailure(f"linearized run: {exc}") from None
        lin = out / "linearized"
        sim.write_outputs(lin, prob, lt)
        for t in sorted(traj.snapshots):
            d = sim.relative_field_difference(prob, traj.snapshots[t], lt.snapshots[t], x0)
            print(f"nonlinear/linearized difference at t={t:g}: {d:.4e}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_spectrum(args, cfg: ScenarioConfig) -> int:
    res = spectra.spectrum_for(cfg.model, cfg.spectrum.count)
    out = _outdir(args, cfg)
    spectra.write_spectrum_csv(out / "spectrum.csv", res)
    print(f"{res.label}: dofs={res.dofs} zero modes={res.n_zero} omega1={float(res.omega1)!r}")
    if res.omega_ref is not None:
        print(f"reference omega1={float(res.omega_ref)!r} rel_error={res.rel_errors[0]:.3e}")
    print(f"wrote {out / 'spectrum.csv'}")
    return EXIT_OK


def cmd_converge(args, cfg: ScenarioConfig) -> int:
    c = cfg.converge
    rows = spectra.convergence_study(cfg.model, [tuple(p) for p in c.pairs], c.levels)
    out = _outdir(args, cfg)
    spectra.write_convergence_csv(out / "convergence.csv", rows)
    for r in rows:
        print(f"{r.label:10s} dofs={r.dofs:6d} rel_error={r.rel_error:.3e} order={r.emp_order:.2f}")
    print(f"wrote {out / 'convergence.csv'}")
    return EXIT_OK


def cmd_verify(args, cfg: ScenarioConfig) -> int:
    v = cfg.verify
    vcfg = verify.VerifyConfig(seed=v.seed, nstates=v.nstates, nfd=v.nfd)
    if args.seed is not None:
        vcfg.seed = args.seed
    if cfg.has_model:
        vcfg.models = [cfg.model]
    report = verify.run_all(vcfg)
    print(report.to_text())
    if args.out is not None or cfg.has_model:
        report.write(_outdir(args, cfg))
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {"assemble": cmd_assemble, "simulate": cmd_simulate, "spectrum": cmd_spectrum,
            "converge": cmd_converge, "verify": cmd_verify}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfem", description="Structure-preserving mixed FEM for port-Hamiltonian models")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML scenario file (optional for verify)")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="seed for random states (verify)")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USER
    try:
        if args.config is None:
            if args.command != "verify":
                raise ConfigError(f"{args.command} requires --config")
            cfg = ScenarioConfig()
        else:
            cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, verify=replace(cfg.verify, seed=args.seed))
        return COMMANDS[args.command](args, cfg)
    # LinAlgError derives from ValueError, so the numerical branch comes first
    except (NumericalFailure, np.linalg.LinAlgError, ArithmeticError, sim.StepFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
