"""Quick invariant suite runnable without a test harness.

Each check exercises one structural property the library relies on; the CLI
``selftest`` subcommand runs them all and exits nonzero on any violation.
"""

from __future__ import annotations

import numpy as np

from .fields import taylor_green
from .forward import KV, ModelParams, run_direct
from .memory import (
    KernelSpec,
    KernelTrace,
    check_time_primitive_bound,
    check_young_bound,
    convolve_scalar,
    split_convolution,
)
from .spectral import (
    Grid,
    PressureField,
    SpectralField,
    Trajectory,
    advect,
    apply_helmholtz,
    gradient,
    helmholtz_inverse,
    l2_inner,
    l2_norm,
    leray_project,
    random_divergence_free,
    sobolev_norm,
)


def _projection_invariants(rng) -> list:
    grid = Grid(2, 16)
    out = []
    worst_idem = worst_div = worst_grad = 0.0
    for _ in range(20):
        f = SpectralField(grid, rng.standard_normal((2,) + grid.shape)
                          + 1j * rng.standard_normal((2,) + grid.shape))
        p1 = leray_project(f)
        p2 = leray_project(p1)
        scale = max(l2_norm(f), 1e-30)
        worst_idem = max(worst_idem, l2_norm(p2 - p1) / scale)
        worst_div = max(worst_div, float(np.max(np.abs(
            np.sum(grid.k * p1.coeffs, axis=0)))) / scale)
        s = PressureField(grid, rng.standard_normal(grid.shape)
                          + 1j * rng.standard_normal(grid.shape))
        g = leray_project(gradient(s))
        worst_grad = max(worst_grad, l2_norm(g) / max(l2_norm(gradient(s)), 1e-30))
    out.append(("projection idempotent", worst_idem, 1e-12))
    out.append(("projection kills divergence", worst_div, 1e-12))
    out.append(("projection kills gradients", worst_grad, 1e-12))
    return out


def _helmholtz_roundtrip(rng) -> list:
    grid = Grid(2, 16)
    f = random_divergence_free(grid, rng)
    err = l2_norm(helmholtz_inverse(apply_helmholtz(f, 0.7), 0.7) - f) / l2_norm(f)
    return [("helmholtz inverse round-trip", err, 1e-12)]


def _advection_skew(rng) -> list:
    grid = Grid(2, 16)
    worst = 0.0
    for _ in range(10):
        a = random_divergence_free(grid, rng)
        b = random_divergence_free(grid, rng)
        val = abs(l2_inner(advect(a, b), b))
        bound = sobolev_norm(a, 1) * sobolev_norm(b, 1) ** 2
        worst = max(worst, val / bound)
    return [("advection energy skew-symmetry", worst, 1e-10)]


def _parseval(rng) -> list:
    grid = Grid(2, 16)
    f = random_divergence_free(grid, rng)
    phys = f.to_physical()
    quad = float(np.sqrt(np.sum(phys**2) * grid.cell_volume))
    err = abs(quad - sobolev_norm(f, 0)) / quad
    return [("Parseval vs physical quadrature", err, 1e-10)]


def _young_sweep(rng) -> list:
    dt = 1e-3
    m = 200
    worst = 0.0
    for _ in range(20):
        k = KernelTrace(dt, rng.uniform(0, 1, m + 1))
        f = rng.uniform(0, 1, m + 1)
        worst = max(worst, check_young_bound(k, f).ratio)
    return [("Young convolution bound", worst, 1.0 + 5 * dt)]


def _primitive_bounds() -> list:
    dt = 1e-3
    t = np.arange(0, 1 + dt / 2, dt)
    r1, r2 = check_time_primitive_bound(np.sin(3 * t), dt)
    return [("time-primitive sup bound", r1.ratio, r1.tolerance),
            ("time-primitive L2 bound", r2.ratio, r2.tolerance)]


def _convolution_order() -> list:
    def err(dt):
        m = int(round(1.0 / dt))
        k = KernelTrace(dt, np.exp(-dt * np.arange(m + 1)))
        f = np.ones(m + 1)
        exact = 1.0 - np.exp(-1.0)
        return abs(convolve_scalar(k, f, m) - exact)

    order = np.log2(err(2e-2) / err(1e-2))
    return [("convolution order >= 1.9", -order, -1.9)]


def _split_identity(rng) -> list:
    grid = Grid(2, 8)
    dt = 1e-2
    m = 20
    t_axis = dt * np.arange(2 * m + 1)
    k_full = KernelTrace(dt, 0.5 * np.exp(-0.5 * t_axis))
    base = random_divergence_free(grid, rng)
    data = np.array([(1 + np.sin(3 * t)) * base.coeffs for t in t_axis])
    full_traj = Trajectory(grid, dt, data)
    from .memory import convolve_field

    worst = 0.0
    k_hat = KernelTrace(dt, k_full.samples[: m + 1])
    k_tau = KernelTrace(dt, k_full.samples[m:])
    v_hat = full_traj.slice(0, m + 1)
    v_tau = full_traj.slice(m, 2 * m + 1)
    for n in (0, m // 2, m):
        split = split_convolution(k_hat, k_tau, v_hat, v_tau, n * dt)
        mono = convolve_field(k_full, full_traj, m + n, laplace=True)
        worst = max(worst, l2_norm(split - mono))
    bound = 2 * dt * np.max(np.abs(k_full.samples)) * max(
        l2_norm(full_traj.field(n)) * np.max(grid.k2) for n in range(2 * m + 1))
    return [("convolution splitting identity", worst, bound)]


def _forward_decay() -> list:
    grid = Grid(2, 8)
    from .fields import shear_mode

    u0 = shear_mode(grid, amplitude=1.0)
    params = ModelParams(1.5, 1.0, kernel=KernelSpec.zero(), mode=KV)
    dt, steps = 1e-2, 20
    traj, _, _ = run_direct(u0, params, steps * dt, dt, taylor_green(grid))
    rho = (1 + 1.0 - 0.5 * dt * 1.5) / (1 + 1.0 + 0.5 * dt * 1.5)  # |xi|^2 = 1
    expected = u0.coeffs * rho**steps
    err = float(np.max(np.abs(traj.data[-1] - expected)))
    return [("single-mode Crank-Nicolson decay", err, 1e-12)]


def run_selftest(verbose: bool = True) -> int:
    """Run all invariant checks; returns the number of failures."""
    rng = np.random.default_rng(2024)
    checks = []
    checks += _projection_invariants(rng)
    checks += _helmholtz_roundtrip(rng)
    checks += _advection_skew(rng)
    checks += _parseval(rng)
    checks += _young_sweep(rng)
    checks += _primitive_bounds()
    checks += _convolution_order()
    checks += _split_identity(rng)
    checks += _forward_decay()

    failures = 0
    for name, measured, bound in checks:
        ok = measured <= bound
        failures += not ok
        if verbose:
            print(f"{'ok  ' if ok else 'FAIL'} {name}: {measured:.3e} "
                  f"(bound {bound:.3e})")
    return failures
