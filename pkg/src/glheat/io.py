"""On-disk formats: flat key=value config files, ledger/probe/sweep CSVs,
and the bit-exact binary trajectory dump.

Dump layout (little-endian): magic b"GLHF", u32 version=1, u32 d,
u32 n_cells, f64 T, f64 lambda, f64 dt, u32 stride, u64 slice_count;
per slice f64 t then (n+1) f64 g then (n+1) f64 zeta; trailer of three f64:
kinetic, chi-dissipation and penalty-integral finals.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import diagnostics, probes
from .errors import ConfigError
from .grid import InitialDatum, RadialGrid
from .scheme import SchemeParams
from .solver import StepperConfig, Trajectory

MAGIC = b"GLHF"
DUMP_VERSION = 1

LEDGER_SCHEMA = "glheat.ledger.v1"
LEDGER_COLUMNS = ("t", "E_dir", "E_pen", "E_total", "kinetic_accum",
                  "chi_dissipation_accum", "constraint_sup", "penalty_integral_accum")
PROBE_SCHEMA = "glheat.probes.v1"
PROBE_COLUMNS = ("probe_id", "t0", "rho0", "R", "density", "scaled_energy",
                 "defect_prev", "lei_lhs", "lei_rhs", "rpi_lhs", "rpi_rhs", "hybrid_C")
SWEEP_SCHEMA = "glheat.sweep.v1"
SWEEP_COLUMNS = ("lambda", "P", "P_times_loglambda", "constraint_sup",
                 "constraint_L2", "wedge_residual", "E_final", "gap_to_prev")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# trajectory dump

def dump_trajectory(traj: Trajectory, path: str) -> None:
    n = traj.grid.n
    K = traj.n_checkpoints
    header = MAGIC + struct.pack("<IIIdddIQ", DUMP_VERSION, traj.grid.d, n,
                                 traj.params.T, traj.params.lam, traj.config.dt,
                                 traj.config.checkpoint_stride, K)
    parts = [header]
    for k in range(K):
        parts.append(struct.pack("<d", float(traj.times[k])))
        parts.append(np.ascontiguousarray(traj.G[k], dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(traj.Z[k], dtype="<f8").tobytes())
    parts.append(struct.pack("<ddd", traj.kinetic_final, traj.dissipation_final,
                             traj.penalty_integral_final))
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_trajectory(path: str) -> Trajectory:
    """Read a dump back; slices are reproduced bit-exactly.  Intermediate
    accumulator values are not stored in the format, so the loaded arrays
    carry NaN there (finals and the zero start are exact)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read dump {path}: {exc}") from exc
    head_fmt = "<IIIdddIQ"
    head_len = 4 + struct.calcsize(head_fmt)
    if len(blob) < head_len:
        raise ConfigError(f"{path}: truncated dump header at byte {len(blob)} (need {head_len})")
    if blob[:4] != MAGIC:
        raise ConfigError(f"{path}: bad magic {blob[:4]!r}")
    version, d, n, T, lam, dt, stride, K = struct.unpack_from(head_fmt, blob, 4)
    if version != DUMP_VERSION:
        raise ConfigError(f"{path}: unsupported dump version {version}")
    slice_bytes = 8 * (1 + 2 * (n + 1))
    expected = head_len + K * slice_bytes + 24
    if len(blob) != expected:
        offset = min(len(blob), expected)
        raise ConfigError(f"{path}: truncated or oversized dump at byte {offset} "
                          f"(expected {expected} bytes, have {len(blob)})")
    times = np.empty(K)
    G = np.empty((K, n + 1))
    Z = np.empty((K, n + 1))
    pos = head_len
    for k in range(K):
        times[k] = struct.unpack_from("<d", blob, pos)[0]
        pos += 8
        G[k] = np.frombuffer(blob, dtype="<f8", count=n + 1, offset=pos)
        pos += 8 * (n + 1)
        Z[k] = np.frombuffer(blob, dtype="<f8", count=n + 1, offset=pos)
        pos += 8 * (n + 1)
    kin_f, dis_f, pen_f = struct.unpack_from("<ddd", blob, pos)
    nanpad = np.full(K, np.nan)
    kin = nanpad.copy()
    dis = nanpad.copy()
    pen = nanpad.copy()
    kin[0] = dis[0] = pen[0] = 0.0
    kin[-1], dis[-1], pen[-1] = kin_f, dis_f, pen_f
    params = SchemeParams(lam, T, d)
    cfg = StepperConfig(dt=dt, checkpoint_stride=max(int(stride), 1))
    return Trajectory(params, RadialGrid(n, d), cfg, times, G, Z, kin, dis, pen)


# ---------------------------------------------------------------------------
# CSV writers

def write_ledger_csv(ledger: diagnostics.EnergyLedger, path: str) -> None:
    lines = [f"# schema {LEDGER_SCHEMA}", ",".join(LEDGER_COLUMNS)]
    for k in range(len(ledger.times)):
        row = (ledger.times[k], ledger.E_dir[k], ledger.E_pen[k], ledger.E_total[k],
               ledger.kinetic[k], ledger.dissipation[k], ledger.constraint_sup[k],
               ledger.penalty_integral[k])
        lines.append(",".join(_fmt(x) for x in row))
    _write_text(path, lines)


@dataclass(frozen=True)
class ProbeSpec:
    probe_id: int
    t0: float
    rho0: float
    ladder: tuple

    def __post_init__(self):
        if len(self.ladder) < 1:
            raise ConfigError(f"probe {self.probe_id}: needs at least one scale")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError(f"probe {self.probe_id}: R ladder must be strictly increasing")


def probe_rows(traj: Trajectory, spec: ProbeSpec, eps0: float):
    """One row per ladder scale; the defect column pairs consecutive scales
    and is nan for the first scale and for off-axis probes."""
    rows = []
    prev_R = None
    for R in spec.ladder:
        cyl = probes.ParabolicCylinder(spec.t0, spec.rho0, R)
        dens = probes.density(traj, cyl)
        se = probes.scaled_energy(traj, cyl, R)
        if prev_R is None or spec.rho0 > 0:
            defect = math.nan
        else:
            defect = probes.flow_defect(traj, cyl, prev_R, R)
        lei_lhs, lei_rhs, _ = probes.local_energy_ratio(traj, cyl)
        rpi_lhs, rpi_rhs, _ = probes.reverse_poincare_ratio(traj, cyl)
        hyb = probes.hybrid_ratio(traj, cyl, eps0)
        rows.append((spec.probe_id, spec.t0, spec.rho0, R, dens, se, defect,
                     lei_lhs, lei_rhs, rpi_lhs, rpi_rhs, hyb))
        prev_R = R
    return rows


def write_probe_csv(traj: Trajectory, specs, eps0: float, path: str) -> None:
    lines = [f"# schema {PROBE_SCHEMA}", ",".join(PROBE_COLUMNS)]
    for spec in specs:
        for row in probe_rows(traj, spec, eps0):
            lines.append(",".join([str(row[0])] + [_fmt(x) for x in row[1:]]))
    _write_text(path, lines)


def write_sweep_csv(report, path: str) -> None:
    base = report.config
    lines = [
        f"# schema {SWEEP_SCHEMA}",
        f"# shared discretization: d={base.d} n_cells={base.n_cells} T={_fmt(base.T)} "
        f"dt={_fmt(base.dt)} stride={base.checkpoint_stride} scheme={base.scheme} "
        f"datum={base.datum.describe()}",
        ",".join(SWEEP_COLUMNS),
    ]
    for i, lam in enumerate(report.lambdas):
        gap = math.nan if i == 0 else report.gaps[i - 1]
        row = (lam, report.P[i], report.P_log_lambda[i], report.constraint_sup[i],
               report.constraint_L2[i], report.wedge[i], report.E_final[i], gap)
        lines.append(",".join(_fmt(x) for x in row))
    _write_text(path, lines)


def _write_text(path: str, lines) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    d: int
    lambdas: tuple            # one entry: plain run; several: sweep ladder
    T: float
    dt: float
    n_cells: int
    checkpoint_stride: int
    scheme: str
    datum: InitialDatum
    probes: tuple             # ProbeSpec entries
    eps0: float
    output_dir: str
    newton_tol: float = 1e-12

    @property
    def lam(self) -> float:
        return self.lambdas[0]


_REQUIRED_KEYS = ("d", "lambda", "T", "dt", "n_cells")


def parse_config(path: str) -> RunConfig:
    """Flat 'key = value' file with '#' comments; repeated
    'probe = t0,rho0,R1,R2,...' lines collect the probe list.  Every
    module-level precondition is re-validated here with file/line
    diagnostics."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    kv: dict[str, tuple[str, int]] = {}
    probe_lines: list[tuple[str, int]] = []
    for lineno, raw in enumerate(raw_lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if key == "probe":
            probe_lines.append((value, lineno))
        elif key in kv:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        else:
            kv[key] = (value, lineno)

    def need(key):
        if key not in kv:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return kv.pop(key)

    def as_float(key, value, lineno):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: {key} must be a number, got {value!r}") from None

    def as_int(key, value, lineno):
        v = as_float(key, value, lineno)
        if v != int(v):
            raise ConfigError(f"{path}:{lineno}: {key} must be an integer, got {value!r}")
        return int(v)

    value, lineno = need("d")
    d = as_int("d", value, lineno)
    if d < 2:
        raise ConfigError(f"{path}:{lineno}: d must be >= 2")

    value, lineno = need("lambda")
    lams = []
    for part in value.split(","):
        lam = as_float("lambda", part.strip(), lineno)
        if lam <= 1.0:
            raise ConfigError(f"{path}:{lineno}: lambda must exceed 1, got {part.strip()}")
        lams.append(lam)
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigError(f"{path}:{lineno}: lambda ladder must be strictly increasing")

    value, lineno = need("T")
    T = as_float("T", value, lineno)
    if T < 0:
        raise ConfigError(f"{path}:{lineno}: T must be nonnegative")

    value, lineno = need("dt")
    dt = as_float("dt", value, lineno)
    if dt <= 0:
        raise ConfigError(f"{path}:{lineno}: dt must be positive")
    if T > 0:
        nsteps = round(T / dt)
        if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
            raise ConfigError(f"{path}:{lineno}: dt={dt:g} must divide T={T:g}")

    value, lineno = need("n_cells")
    n_cells = as_int("n_cells", value, lineno)
    if n_cells < 16:
        raise ConfigError(f"{path}:{lineno}: n_cells must be >= 16")

    stride = 1
    if "checkpoint_stride" in kv:
        value, lineno = kv.pop("checkpoint_stride")
        stride = as_int("checkpoint_stride", value, lineno)
        if stride < 1:
            raise ConfigError(f"{path}:{lineno}: checkpoint_stride must be >= 1")

    scheme_name = "strang"
    if "scheme" in kv:
        value, lineno = kv.pop("scheme")
        if value not in ("strang", "imex"):
            raise ConfigError(f"{path}:{lineno}: scheme must be strang or imex, got {value!r}")
        scheme_name = value

    datum = InitialDatum.equator()
    if "initial" in kv:
        value, lineno = kv.pop("initial")
        datum = _parse_datum(value, path, lineno)

    eps0 = 0.1
    if "eps0" in kv:
        value, lineno = kv.pop("eps0")
        eps0 = as_float("eps0", value, lineno)
        if not 0.0 < eps0 < 1.0:
            raise ConfigError(f"{path}:{lineno}: eps0 must lie in (0, 1)")

    newton_tol = 1e-12
    if "newton_tol" in kv:
        value, lineno = kv.pop("newton_tol")
        newton_tol = as_float("newton_tol", value, lineno)
        if newton_tol <= 0:
            raise ConfigError(f"{path}:{lineno}: newton_tol must be positive")

    output_dir = "out"
    if "output_dir" in kv:
        output_dir, _ = kv.pop("output_dir")
    output_dir = os.environ.get("GLHEAT_OUTPUT_DIR", output_dir)

    if kv:
        key = sorted(kv)[0]
        raise ConfigError(f"{path}:{kv[key][1]}: unknown key {key!r}")

    specs = []
    for i, (value, lineno) in enumerate(probe_lines):
        parts = [s.strip() for s in value.split(",")]
        if len(parts) < 3:
            raise ConfigError(f"{path}:{lineno}: probe needs t0,rho0,R1[,R2,...]")
        nums = [as_float("probe", s, lineno) for s in parts]
        t0, rho0, ladder = nums[0], nums[1], tuple(nums[2:])
        spec = ProbeSpec(i, t0, rho0, ladder)
        _validate_probe(spec, d, T, dt, stride, path, lineno)
        specs.append(spec)

    return RunConfig(d, tuple(lams), T, dt, n_cells, stride, scheme_name,
                     datum, tuple(specs), eps0, output_dir, newton_tol)


def _parse_datum(value: str, path: str, lineno: int) -> InitialDatum:
    if value == "equator":
        return InitialDatum.equator()
    if value == "constant":
        return InitialDatum.constant()
    if value.startswith("bubble:"):
        try:
            return InitialDatum.bubble(float(value.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad bubble amplitude in {value!r}") from None
    if value.startswith("custom:"):
        return InitialDatum.custom(value.split(":", 1)[1])
    raise ConfigError(f"{path}:{lineno}: initial must be equator | constant | "
                      f"bubble:AMP | custom:PATH, got {value!r}")


def _validate_probe(spec: ProbeSpec, d: int, T: float, dt: float, stride: int,
                    path: str, lineno: int) -> None:
    """Union of the probe preconditions, so every CSV row is computable:
    the Gaussian-window hypothesis t0 > (2R)^2, compact containment of the
    doubled cylinder, and the slice-resolution rule stride*dt <= R^2/8."""
    if spec.rho0 < 0:
        raise ConfigError(f"{path}:{lineno}: rho0 must be nonnegative")
    if spec.rho0 > 0 and d != 3:
        raise ConfigError(f"{path}:{lineno}: off-axis probes need d = 3")
    for R in spec.ladder:
        if R <= 0:
            raise ConfigError(f"{path}:{lineno}: probe scale must be positive")
        if spec.t0 - (2 * R) ** 2 <= 0:
            raise ConfigError(f"{path}:{lineno}: probe needs t0 - (2R)^2 > 0 "
                              f"(t0={spec.t0:g}, R={R:g})")
        if spec.t0 + (2 * R) ** 2 >= T:
            raise ConfigError(f"{path}:{lineno}: doubled cylinder passes the horizon "
                              f"(t0={spec.t0:g}, R={R:g}, T={T:g})")
        if spec.rho0 + 2 * R >= 1:
            raise ConfigError(f"{path}:{lineno}: doubled ball pokes out of the unit ball")
        if stride * dt > R * R / 8.0 + 1e-15:
            raise ConfigError(f"{path}:{lineno}: checkpoint spacing {stride * dt:g} exceeds "
                              f"R^2/8 = {R * R / 8:g}; reduce checkpoint_stride")
