"""Configuration parsing and trace/field serialization.

Config files are strict JSON (unknown keys rejected).  Traces travel as CSV
with full-precision decimal floats, so an emit/ingest round trip reproduces
samples bit-identically.  Single fields and trajectory snapshots use a flat
little-endian complex array with a JSON sidecar describing the grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .fields import build_preset
from .forward import KV, OSEEN, MeasurementTrace, ModelParams
from .inverse import FixedPointConfig, ProblemSetup
from .memory import KernelSpec, KernelTrace
from .spectral import Grid, SpectralField, Trajectory

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "derive_model_constants",
    "ingest_measurement",
    "emit_measurement",
    "ingest_kernel",
    "emit_kernel",
    "save_field",
    "load_field",
    "save_trajectory",
    "save_diagnostics",
]


class ConfigError(ValueError):
    pass


def derive_model_constants(lam: float, kappa1: float, kappa2: float,
                           nu: float) -> tuple[float, float, float, float]:
    """Map the physical constants to ``(mu0, mu1, gamma, delta)``.

    ``mu1 = 2 kappa2 / lam``, ``mu0 = (2/lam)(kappa1 - kappa2/lam)``,
    ``gamma = (2/lam)(nu - kappa1/lam + kappa2/lam^2)``, ``delta = 1/lam``.
    """
    if lam <= 0:
        raise ConfigError("relaxation time lambda must be positive")
    mu1 = 2.0 * kappa2 / lam
    mu0 = (2.0 / lam) * (kappa1 - kappa2 / lam)
    gamma = (2.0 / lam) * (nu - kappa1 / lam + kappa2 / lam**2)
    delta = 1.0 / lam
    return mu0, mu1, gamma, delta


def _require_keys(section: dict, allowed: set, required: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass
class RunConfig:
    """Validated run description with all derived constants filled in."""

    mode: str
    dim: int
    n_modes: int
    mu0: float
    mu1: float
    gamma: Optional[float]
    delta: Optional[float]
    kernel: Optional[KernelSpec]
    field_specs: dict
    T: float
    dt: float
    tau: float
    solver: FixedPointConfig
    out_dir: str
    smooth_measurement: bool
    dump_trajectory: bool

    def build_grid(self) -> Grid:
        return Grid(self.dim, self.n_modes)

    def build_field(self, grid: Grid, name: str) -> Optional[SpectralField]:
        spec = self.field_specs.get(name)
        if spec is None:
            return None
        if "file" in spec:
            return load_field(spec["file"], grid)
        kwargs = {k: v for k, v in spec.items() if k != "preset"}
        return build_preset(grid, spec["preset"], **kwargs)

    def build_params(self, grid: Grid, with_kernel: bool) -> ModelParams:
        u_inf = self.build_field(grid, "u_inf")
        if self.mode == OSEEN and u_inf is None:
            raise ConfigError("oseen mode requires fields.u_inf")
        kernel = self.kernel if with_kernel else None
        return ModelParams(self.mu0, self.mu1, kernel=kernel, mode=self.mode,
                           u_inf=u_inf)

    def build_setup(self, measurement: Optional[MeasurementTrace] = None,
                    with_kernel: bool = False) -> ProblemSetup:
        grid = self.build_grid()
        params = self.build_params(grid, with_kernel)
        u0 = self.build_field(grid, "u0")
        phi = self.build_field(grid, "phi")
        if u0 is None or phi is None:
            raise ConfigError("fields.u0 and fields.phi are required")
        return ProblemSetup(params, u0, phi, measurement=measurement)


def parse_config(path) -> RunConfig:
    """Load and validate a JSON run configuration.

    Exactly one of ``model.{mu0, mu1}`` or ``model.{lambda, kappa1, kappa2,
    nu}`` must be given; derived constants must come out positive.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc

    _require_keys(raw, {"mode", "grid", "model", "kernel", "fields", "time",
                        "solver", "io"},
                  {"mode", "grid", "model", "fields", "time"}, "config")
    mode = raw["mode"]
    if mode not in (KV, OSEEN):
        raise ConfigError(f"mode must be '{KV}' or '{OSEEN}', got {mode!r}")

    _require_keys(raw["grid"], {"dim", "N"}, {"dim", "N"}, "grid")
    dim, n_modes = int(raw["grid"]["dim"]), int(raw["grid"]["N"])

    model = raw["model"]
    direct_keys = {"mu0", "mu1"}
    physical_keys = {"lambda", "kappa1", "kappa2", "nu"}
    has_direct = bool(direct_keys & set(model))
    has_physical = bool(physical_keys & set(model))
    if has_direct and has_physical:
        raise ConfigError("model must give either {mu0, mu1} or "
                          "{lambda, kappa1, kappa2, nu}, not both")
    gamma = delta = None
    if has_direct:
        _require_keys(model, direct_keys, direct_keys, "model")
        mu0, mu1 = float(model["mu0"]), float(model["mu1"])
    elif has_physical:
        _require_keys(model, physical_keys, physical_keys, "model")
        mu0, mu1, gamma, delta = derive_model_constants(
            float(model["lambda"]), float(model["kappa1"]),
            float(model["kappa2"]), float(model["nu"]))
    else:
        raise ConfigError("model section is empty")
    if mu0 <= 0 or mu1 <= 0:
        raise ConfigError(f"derived constants must be positive: mu0={mu0}, mu1={mu1}")
    if gamma is not None and (gamma <= 0 or delta <= 0):
        raise ConfigError(f"derived kernel constants must be positive: "
                          f"gamma={gamma}, delta={delta}")

    kernel = None
    if "kernel" in raw:
        ksec = raw["kernel"]
        _require_keys(ksec, {"type", "gamma", "delta", "path"}, {"type"}, "kernel")
        if ksec["type"] == "zero":
            kernel = KernelSpec.zero()
        elif ksec["type"] == "exponential":
            g = float(ksec.get("gamma", gamma if gamma is not None else 0.0))
            d = float(ksec.get("delta", delta if delta is not None else 0.0))
            kernel = KernelSpec.exponential(g, d)
        elif ksec["type"] == "tabulated":
            kernel = KernelSpec.tabulated(ingest_kernel(ksec["path"]))
        else:
            raise ConfigError(f"unknown kernel type {ksec['type']!r}")

    _require_keys(raw["time"], {"T", "dt", "tau"}, {"T", "dt", "tau"}, "time")
    T, dt, tau = (float(raw["time"][k]) for k in ("T", "dt", "tau"))
    if not (T >= tau > dt > 0):
        raise ConfigError(f"need T >= tau > dt > 0, got T={T}, tau={tau}, dt={dt}")

    solver_raw = raw.get("solver", {})
    _require_keys(solver_raw, {"tol", "max_iter", "enforce_smallness"}, set(), "solver")
    solver = FixedPointConfig(
        tau=tau, dt=dt, tol=float(solver_raw.get("tol", 1e-8)),
        max_iter=int(solver_raw.get("max_iter", 50)),
        enforce_smallness=bool(solver_raw.get("enforce_smallness", False)))

    io_raw = raw.get("io", {})
    _require_keys(io_raw, {"out_dir", "smooth_measurement", "dump_trajectory"},
                  set(), "io")

    fields = raw["fields"]
    _require_keys(fields, {"u0", "phi", "u_inf"}, {"u0", "phi"}, "fields")
    for name, spec in fields.items():
        if not isinstance(spec, dict) or ("preset" not in spec) == ("file" not in spec):
            raise ConfigError(f"fields.{name} needs exactly one of 'preset' or 'file'")

    return RunConfig(
        mode=mode, dim=dim, n_modes=n_modes, mu0=mu0, mu1=mu1, gamma=gamma,
        delta=delta, kernel=kernel, field_specs=fields, T=T, dt=dt, tau=tau,
        solver=solver, out_dir=io_raw.get("out_dir", "."),
        smooth_measurement=bool(io_raw.get("smooth_measurement", False)),
        dump_trajectory=bool(io_raw.get("dump_trajectory", False)))


# ---------------------------------------------------------------------------
# CSV traces


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_measurement(path, trace: MeasurementTrace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "r", "rp", "rpp"])
        for t, r, r1, r2 in zip(trace.times, trace.r, trace.r1, trace.r2):
            writer.writerow([_fmt(t), _fmt(r), _fmt(r1), _fmt(r2)])


def _finite_difference(y: np.ndarray, dt: float) -> np.ndarray:
    """Centered first derivative, second-order one-sided at the ends."""
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2 * dt)
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dt)
    d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dt)
    return d


def ingest_measurement(path, smooth: bool = False, window_length: int = 11,
                       polyorder: int = 3) -> MeasurementTrace:
    """Read a measurement CSV with header ``t,r[,rp[,rpp]]``.

    Missing derivative columns are completed by finite differences; with
    ``smooth=True`` the ``r`` column is Savitzky-Golay filtered before
    differentiation (supplied derivative columns pass through untouched).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty measurement file")
        header = [h.strip() for h in header]
        if header[:2] != ["t", "r"] or header not in (
                ["t", "r"], ["t", "r", "rp"], ["t", "r", "rp", "rpp"]):
            raise ValueError(f"{path}: header must be t,r[,rp[,rpp]], got {header}")
        rows = [[float(x) for x in row] for row in reader if row]
    if len(rows) < 4:
        raise ValueError(f"{path}: need at least 4 samples, got {len(rows)}")
    data = np.array(rows)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: inconsistent column count")
    t = data[:, 0]
    steps = np.diff(t)
    dt = float(steps.mean())
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * dt:
        raise ValueError(f"{path}: time grid is not uniform")

    r = data[:, 1]
    r_base = r
    if smooth:
        from scipy.signal import savgol_filter

        wl = min(window_length, len(r) - (1 - len(r) % 2))
        if wl % 2 == 0:
            wl -= 1
        r_base = savgol_filter(r, wl, min(polyorder, wl - 1))
    r1 = data[:, 2] if data.shape[1] > 2 else _finite_difference(r_base, dt)
    r2 = data[:, 3] if data.shape[1] > 3 else _finite_difference(r1, dt)
    return MeasurementTrace(dt, r, r1, r2)


def emit_kernel(path, trace: KernelTrace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "k"])
        for t, k in zip(trace.times, trace.samples):
            writer.writerow([_fmt(t), _fmt(k)])


def ingest_kernel(path) -> KernelTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "k"]:
            raise ValueError(f"{path}: kernel header must be t,k")
        rows = [[float(x) for x in row] for row in reader if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 kernel samples")
    data = np.array(rows)
    steps = np.diff(data[:, 0])
    dt = float(steps.mean())
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * dt:
        raise ValueError(f"{path}: kernel time grid is not uniform")
    return KernelTrace(dt, data[:, 1])


# ---------------------------------------------------------------------------
# binary fields / trajectories


def save_field(prefix, f: SpectralField):
    """Write ``prefix.bin`` (flat little-endian complex128) + ``prefix.json``."""
    prefix = Path(prefix)
    f.coeffs.astype("<c16").tofile(prefix.with_suffix(".bin"))
    sidecar = {"kind": "field", "dim": f.grid.dim, "N": f.grid.n,
               "shape": list(f.coeffs.shape), "dtype": "<c16"}
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))


def load_field(prefix, grid: Grid) -> SpectralField:
    prefix = Path(prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text())
    if sidecar.get("kind") != "field":
        raise ValueError(f"{prefix}: sidecar does not describe a field")
    if sidecar["dim"] != grid.dim or sidecar["N"] != grid.n:
        raise ValueError(f"{prefix}: field grid {sidecar['dim']}d N={sidecar['N']} "
                         f"does not match configured {grid}")
    raw = np.fromfile(prefix.with_suffix(".bin"), dtype="<c16")
    coeffs = raw.reshape(tuple(sidecar["shape"])).astype(complex)
    return SpectralField(grid, coeffs)


def save_trajectory(prefix, traj: Trajectory):
    prefix = Path(prefix)
    traj.data.astype("<c16").tofile(prefix.with_suffix(".bin"))
    sidecar = {"kind": "trajectory", "dim": traj.grid.dim, "N": traj.grid.n,
               "shape": list(traj.data.shape), "dtype": "<c16", "dt": traj.dt}
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))


def save_diagnostics(path, payload: dict):
    def _coerce(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, (np.bool_,)):
            return bool(obj)
        raise TypeError(f"not JSON-serializable: {type(obj)}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, default=_coerce)
        fh.write("\n")
