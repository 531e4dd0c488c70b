"""Sweep orchestration over a ladder of penalty strengths.

Members share grid, dt, horizon and datum (dt is set by accuracy, not
stability: the splitting is robust in lambda, so the value chosen for the
largest member serves all).  Members run concurrently with no shared
mutable state; the report is assembled in ladder order regardless of
completion order, so a rerun bit-reproduces every artifact.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import diagnostics, probes
from .errors import ConfigError, NumericsError
from .grid import InitialDatum, RadialGrid
from .scheme import SchemeParams
from .solver import StepperConfig, Trajectory, run


@dataclass(frozen=True)
class SweepConfig:
    """Shared discretization and datum for every ladder member; optional
    probe cylinders feed the per-probe limsup-density surrogates."""

    d: int
    n_cells: int
    T: float
    dt: float
    checkpoint_stride: int
    datum: InitialDatum
    scheme: str = "strang"
    newton_tol: float = 1e-12
    probes: tuple = ()


@dataclass(frozen=True, eq=False)
class SweepReport:
    lambdas: tuple
    config: SweepConfig
    P: np.ndarray                   # penalty integral per member
    P_log_lambda: np.ndarray
    constraint_sup: np.ndarray
    constraint_L2: np.ndarray
    wedge: np.ndarray
    E_final: np.ndarray
    E_initial: float
    gaps: np.ndarray                # consecutive L^2(Q) distances, len-1
    C_hat: float                    # least-squares constant of P ~ C/log(lam)
    C_derived: float                # 4 pi (1+T^2) E(0)
    trajectories: tuple
    probe_densities: tuple = ()     # per configured probe: densities over the ladder

    def member(self, lam: float) -> Trajectory:
        return self.trajectories[self.lambdas.index(lam)]

    def probe_limsup(self, i: int) -> float:
        """Max-over-ladder density of the i-th configured probe: the
        finite-ladder surrogate for the limsup density."""
        return float(np.max(self.probe_densities[i]))


def sweep(base: SweepConfig, lambdas) -> SweepReport:
    """Run every ladder member (concurrently), assemble per-member decay and
    convergence measurements in ladder order."""
    lams = tuple(float(x) for x in lambdas)
    if len(lams) < 3:
        raise ConfigError("a sweep needs at least 3 ladder members")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("lambda ladder must be strictly increasing")
    grid = RadialGrid(base.n_cells, base.d)
    cfg = StepperConfig(dt=base.dt, scheme=base.scheme,
                        checkpoint_stride=base.checkpoint_stride,
                        newton_tol=base.newton_tol)

    def one(lam: float) -> Trajectory:
        return run(SchemeParams(lam, base.T, base.d), grid, cfg, base.datum)

    with ThreadPoolExecutor(max_workers=min(len(lams), 4)) as pool:
        futures = [pool.submit(one, lam) for lam in lams]
        trajs = []
        for lam, fut in zip(lams, futures):
            try:
                trajs.append(fut.result())
            except NumericsError as exc:
                for f in futures:
                    f.cancel()
                raise NumericsError(f"sweep member lambda={lam:g} failed: {exc}") from exc
            except Exception as exc:
                for f in futures:
                    f.cancel()
                raise ConfigError(f"sweep member lambda={lam:g} failed: {exc}") from exc

    P = np.empty(len(lams))
    csup = np.empty(len(lams))
    cl2 = np.empty(len(lams))
    wedge = np.empty(len(lams))
    E_final = np.empty(len(lams))
    E0 = None
    for i, traj in enumerate(trajs):
        ledger = diagnostics.build_ledger(traj)
        P[i] = traj.penalty_integral_final
        csup[i], cl2[i] = diagnostics.constraint_violation(traj)
        wedge[i] = diagnostics.wedge_residual(traj) if traj.n_checkpoints >= 3 else 0.0
        E_final[i] = ledger.E_total[-1]
        if E0 is None:
            E0 = float(ledger.E_total[0])
    gaps = np.array([diagnostics.compare_L2(a, b) for a, b in zip(trajs, trajs[1:])])
    x = 1.0 / np.log(np.asarray(lams))
    C_hat = float(np.dot(x, P) / np.dot(x, x))
    C_derived = 4.0 * np.pi * (1.0 + base.T ** 2) * E0
    probe_dens = tuple(np.array([probes.density(traj, cyl) for traj in trajs])
                       for cyl in base.probes)
    return SweepReport(lams, base, P, P * np.log(np.asarray(lams)), csup, cl2,
                       wedge, E_final, E0, gaps, C_hat, C_derived, tuple(trajs),
                       probe_dens)


def cauchy_table(report: SweepReport) -> np.ndarray:
    """Consecutive L^2(Q) gaps along the ladder, recomputed from the stored
    trajectories."""
    return np.array([diagnostics.compare_L2(a, b)
                     for a, b in zip(report.trajectories, report.trajectories[1:])])


def limsup_density(report: SweepReport, cyl: probes.ParabolicCylinder) -> float:
    """Finite-ladder surrogate for the limsup density: the max over members
    of the plain cylinder density at the probe."""
    return max(probes.density(traj, cyl) for traj in report.trajectories)
