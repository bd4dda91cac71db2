"""Command-line surface: forward runs, inversions, twins, marching, checks.

Exit codes: 0 success, 2 solver did not converge, 3 data assumption violated,
4 I/O or configuration failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import continuation, inverse
from .forward import SolverDivergenceError, run_direct, synthesize_twin
from .io import (
    ConfigError,
    emit_kernel,
    emit_measurement,
    ingest_measurement,
    parse_config,
    save_diagnostics,
    save_trajectory,
)
from .memory import KernelTrace
from .spectral import l2_norm, sobolev_norm

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_ASSUMPTION = 3
EXIT_IO = 4


def _json_line(payload: dict):
    print(json.dumps(payload), flush=True)


def _iteration_printer(verbose: bool):
    return _json_line if verbose else None


def _out_dir(args, config) -> Path:
    out = Path(args.out) if args.out else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _relative_kernel_error(k: KernelTrace, k_true: KernelTrace) -> float:
    n = min(len(k.samples), len(k_true.samples))
    diff = KernelTrace(k.dt, k.samples[:n] - k_true.samples[:n])
    ref = KernelTrace(k.dt, k_true.samples[:n])
    denom = ref.l2_norm()
    return diff.l2_norm() / denom if denom > 0 else diff.l2_norm()


class AssumptionFailure(Exception):
    pass


def _gate_assumptions(setup, mode, measurement_required: bool) -> None:
    if measurement_required and setup.measurement is None:
        raise ConfigError("a measurement trace is required")
    report = inverse.check_assumptions(setup, mode)
    if not report.passed:
        names = ", ".join(f"({c.name})" for c in report.failures)
        print(json.dumps(report.as_dict(), indent=1))
        raise AssumptionFailure(f"assumption {names} violated")


def cmd_forward(args) -> int:
    config = parse_config(args.config)
    if config.kernel is None:
        raise ConfigError("forward run requires a kernel section")
    setup = config.build_setup(with_kernel=True)
    _gate_assumptions(setup, config.mode, measurement_required=False)
    u_traj, measurement, _ = run_direct(setup.u0, setup.params, config.T,
                                        config.dt, setup.phi)
    out = _out_dir(args, config)
    emit_measurement(out / "measurement.csv", measurement)
    if config.dump_trajectory or args.dump_trajectory:
        save_trajectory(out / "trajectory", u_traj)
    summary = {
        "steps": u_traj.n_steps,
        "final_l2_norm": l2_norm(u_traj.field(u_traj.n_steps)),
        "final_h2_norm": sobolev_norm(u_traj.field(u_traj.n_steps), 2),
        "r0": measurement.r[0],
        "r_final": measurement.r[-1],
    }
    save_diagnostics(out / "forward_summary.json", summary)
    print(f"forward run complete: {out / 'measurement.csv'}")
    return EXIT_OK


def _load_measurement(args, config):
    return ingest_measurement(args.measurement, smooth=config.smooth_measurement)


def cmd_invert(args) -> int:
    config = parse_config(args.config)
    measurement = _load_measurement(args, config)
    setup = config.build_setup(measurement=measurement)
    _gate_assumptions(setup, config.mode, measurement_required=True)
    result = inverse.fixed_point_solve(setup, config.solver, config.mode,
                                       on_iteration=_iteration_printer(args.verbose))
    out = _out_dir(args, config)
    emit_kernel(out / "kernel.csv", result.k)
    save_diagnostics(out / "diagnostics.json", {
        "converged": result.converged,
        "iterations": result.iterations,
        "tau": result.tau,
        "contraction_ratios": result.contraction_ratios,
        "deltas": result.deltas,
        "residuals": result.residuals,
        "message": result.message,
    })
    if not result.converged:
        print(f"inversion did not converge: {result.message}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"inversion converged in {result.iterations} iterations; "
          f"kernel written to {out / 'kernel.csv'}")
    return EXIT_OK


def cmd_twin(args) -> int:
    config = parse_config(args.config)
    if config.kernel is None:
        raise ConfigError("twin experiment requires a kernel section")
    setup = config.build_setup()
    _gate_assumptions(setup, config.mode, measurement_required=False)
    twin = synthesize_twin(setup, config.kernel, config.T, config.dt)
    setup.measurement = twin.measurement
    result = inverse.fixed_point_solve(setup, config.solver, config.mode,
                                       on_iteration=_iteration_printer(args.verbose))
    out = _out_dir(args, config)
    emit_measurement(out / "measurement.csv", twin.measurement)
    emit_kernel(out / "kernel.csv", result.k)
    n_window = len(result.k.samples)
    rel_err = _relative_kernel_error(result.k, twin.k_true.slice(0, n_window))
    save_diagnostics(out / "diagnostics.json", {
        "converged": result.converged,
        "iterations": result.iterations,
        "tau": result.tau,
        "kernel_relative_l2_error": rel_err,
        "kernel_l2_norm": result.k.l2_norm(),
        "contraction_ratios": result.contraction_ratios,
        "residuals": result.residuals,
        "message": result.message,
    })
    print(f"twin reconstruction: relative L2 kernel error {rel_err:.3e}, "
          f"reconstructed ||k||_L2 {result.k.l2_norm():.3e}")
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_march(args) -> int:
    config = parse_config(args.config)
    measurement = _load_measurement(args, config)
    setup = config.build_setup(measurement=measurement)
    _gate_assumptions(setup, config.mode, measurement_required=True)
    result = continuation.march_global(setup, config.solver, config.T, config.mode,
                                       on_iteration=_iteration_printer(args.verbose))
    out = _out_dir(args, config)
    emit_kernel(out / "kernel.csv", result.k)
    save_diagnostics(out / "diagnostics.json", {
        "converged": result.converged,
        "covered": result.tau,
        "iterations": result.iterations,
        "residuals": result.residuals,
        "message": result.message,
    })
    if not result.converged:
        print(f"march stopped at t={result.tau:.6g}: {result.message}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"march reached T={result.tau:.6g}; kernel written to {out / 'kernel.csv'}")
    return EXIT_OK


def cmd_check(args) -> int:
    config = parse_config(args.config)
    measurement = None
    if args.measurement:
        measurement = ingest_measurement(args.measurement,
                                         smooth=config.smooth_measurement)
    setup = config.build_setup(measurement=measurement)
    report = inverse.check_assumptions(setup, config.mode)
    print(json.dumps(report.as_dict(), indent=1))
    if not report.passed:
        names = ", ".join(f"({c.name})" for c in report.failures)
        print(f"assumption {names} violated", file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(verbose=True)
    if failures:
        print(f"{failures} invariant check(s) failed", file=sys.stderr)
        return 1
    print("all invariant checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvmem",
        description="Viscoelastic flow with memory: forward solves and "
                    "memory-kernel reconstruction from integral measurements.")
    parser.add_argument("--verbose", action="store_true",
                        help="stream per-iteration diagnostics as JSON lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="run the direct solver, write measurement CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--dump-trajectory", action="store_true")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("invert", help="reconstruct the kernel from a measurement")
    p.add_argument("--config", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("twin", help="synthesize data with a known kernel and re-invert")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_twin)

    p = sub.add_parser("march", help="global window-marching reconstruction")
    p.add_argument("--config", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_march)

    p = sub.add_parser("check", help="data assumption report")
    p.add_argument("--config", required=True)
    p.add_argument("--measurement", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("selftest", help="run the module invariant suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AssumptionFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ASSUMPTION
    except SolverDivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
