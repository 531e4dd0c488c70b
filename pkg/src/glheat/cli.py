"""Command-line interface: run, sweep, probe.

Exit codes: 0 success, 1 configuration/validation error, 2 numerical
failure during integration.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import diagnostics, harness, io, probes
from .errors import ConfigError, GLHeatError, NumericsError
from .grid import RadialGrid
from .scheme import SchemeParams
from .solver import StepperConfig, run


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glheat",
                                 description="Penalized harmonic heat flow laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one run and write dump + CSVs")
    p_run.add_argument("config", help="key=value config file (single lambda)")

    p_sweep = sub.add_parser("sweep", help="run a lambda ladder and write the sweep report")
    p_sweep.add_argument("config", help="key=value config file (lambda ladder)")

    p_probe = sub.add_parser("probe", help="recompute probes from a stored dump")
    p_probe.add_argument("dump", help="trajectory dump written by 'run'")
    p_probe.add_argument("--probe", action="append", required=True, metavar="t0,rho0,R1[,R2...]",
                         help="probe line, repeatable")
    p_probe.add_argument("--eps0", type=float, default=0.1)
    p_probe.add_argument("-o", "--output", default=None, help="probe CSV path (default stdout)")
    return ap


def _single_run_artifacts(cfg: io.RunConfig, lam: float, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    params = SchemeParams(lam, cfg.T, cfg.d)
    grid = RadialGrid(cfg.n_cells, cfg.d)
    stepper = StepperConfig(dt=cfg.dt, scheme=cfg.scheme,
                            checkpoint_stride=cfg.checkpoint_stride,
                            newton_tol=cfg.newton_tol)
    traj = run(params, grid, stepper, cfg.datum)
    io.dump_trajectory(traj, os.path.join(out_dir, "trajectory.bin"))
    io.write_ledger_csv(diagnostics.build_ledger(traj), os.path.join(out_dir, "ledger.csv"))
    if cfg.probes:
        io.write_probe_csv(traj, cfg.probes, cfg.eps0, os.path.join(out_dir, "probes.csv"))


def cmd_run(config_path: str) -> int:
    cfg = io.parse_config(config_path)
    if len(cfg.lambdas) != 1:
        raise ConfigError(f"{config_path}: 'run' needs a single lambda "
                          f"(got a ladder of {len(cfg.lambdas)}); use 'sweep'")
    _single_run_artifacts(cfg, cfg.lam, cfg.output_dir)
    return 0


def cmd_sweep(config_path: str) -> int:
    cfg = io.parse_config(config_path)
    if len(cfg.lambdas) < 3:
        raise ConfigError(f"{config_path}: 'sweep' needs a ladder of at least 3 lambdas")
    cyls = tuple(probes.ParabolicCylinder(s.t0, s.rho0, R)
                 for s in cfg.probes for R in s.ladder)
    base = harness.SweepConfig(d=cfg.d, n_cells=cfg.n_cells, T=cfg.T, dt=cfg.dt,
                               checkpoint_stride=cfg.checkpoint_stride, datum=cfg.datum,
                               scheme=cfg.scheme, newton_tol=cfg.newton_tol, probes=cyls)
    report = harness.sweep(base, cfg.lambdas)
    os.makedirs(cfg.output_dir, exist_ok=True)
    for lam, traj in zip(report.lambdas, report.trajectories):
        sub = os.path.join(cfg.output_dir, f"lambda_{lam:g}")
        os.makedirs(sub, exist_ok=True)
        io.dump_trajectory(traj, os.path.join(sub, "trajectory.bin"))
        io.write_ledger_csv(diagnostics.build_ledger(traj), os.path.join(sub, "ledger.csv"))
        if cfg.probes:
            io.write_probe_csv(traj, cfg.probes, cfg.eps0, os.path.join(sub, "probes.csv"))
    io.write_sweep_csv(report, os.path.join(cfg.output_dir, "sweep.csv"))
    return 0


def cmd_probe(dump_path: str, probe_args, eps0: float, output: str | None) -> int:
    traj = io.load_trajectory(dump_path)
    specs = []
    for i, line in enumerate(probe_args):
        parts = [s.strip() for s in line.split(",")]
        if len(parts) < 3:
            raise ConfigError(f"--probe {line!r}: needs t0,rho0,R1[,R2,...]")
        try:
            nums = [float(s) for s in parts]
        except ValueError:
            raise ConfigError(f"--probe {line!r}: non-numeric entry") from None
        spec = io.ProbeSpec(i, nums[0], nums[1], tuple(nums[2:]))
        io._validate_probe(spec, traj.grid.d, traj.params.T, traj.config.dt,
                           traj.config.checkpoint_stride, "--probe", i)
        specs.append(spec)
    if output is None:
        lines = [f"# schema {io.PROBE_SCHEMA}", ",".join(io.PROBE_COLUMNS)]
        for spec in specs:
            for row in io.probe_rows(traj, spec, eps0):
                lines.append(",".join([str(row[0])] + [io._fmt(x) for x in row[1:]]))
        print("\n".join(lines))
    else:
        io.write_probe_csv(traj, specs, eps0, output)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "sweep":
            return cmd_sweep(args.config)
        if args.command == "probe":
            return cmd_probe(args.dump, args.probe, args.eps0, args.output)
        raise ConfigError(f"unknown command {args.command!r}")
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GLHeatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
