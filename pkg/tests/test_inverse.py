"""Assumption checks, kernel formula, linear solves, and the Picard driver."""

import numpy as np
import pytest

from kvmem.fields import shear_mode, taylor_green
from kvmem.forward import KV, OSEEN, ModelParams, synthesize_twin
from kvmem.inverse import (
    FixedPointConfig,
    ProblemSetup,
    check_assumptions,
    combined_norm,
    compute_v0,
    fixed_point_solve,
    kernel_update_kv,
    kernel_update_oseen,
    reconstruct_u,
    residual_check,
    solve_linear_ibvp_kv,
    solve_linear_ibvp_oseen,
)
from kvmem.memory import KernelSpec, KernelTrace
from kvmem.spectral import (
    Grid,
    SpectralField,
    Trajectory,
    advection_product,
    helmholtz_inverse,
    l2_norm,
    laplacian,
    leray_project,
    zero_field,
)

from conftest import make_setup, make_twin, relative_kernel_error


# ---------------------------------------------------------------------------
# assumption checker


def test_orthogonal_probe_fails_normalizer_check():
    g = Grid(2, 16)
    u0 = taylor_green(g, amplitude=0.3)
    phi = shear_mode(g, wavenumber=3)  # orthogonal to Lap u0
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=KV), u0, phi)
    report = check_assumptions(setup)
    failed = {c.name for c in report.failures}
    assert failed == {"A3"}
    assert abs(setup.alpha_inv) < 1e-12


def test_twin_measurement_passes_all_checks(oseen_twin):
    setup, _ = oseen_twin
    report = check_assumptions(setup)
    assert report.passed
    a5 = [c for c in report.checks if c.name == "H5"][0]
    assert a5.measured <= 1e-10


def test_non_divergence_free_initial_field_fails():
    g = Grid(2, 16)
    bad = taylor_green(g).copy()
    bad.coeffs[0, 2, 0] += 0.3
    bad.coeffs[0, -2, 0] += 0.3
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=KV), bad, taylor_green(g))
    report = check_assumptions(setup)
    assert any(c.name == "A1" and not c.passed for c in report.checks)
    assert report.failures[0].measured > 1e-10


def test_zero_data_rejected_without_crash():
    g = Grid(2, 16)
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=KV), zero_field(g), taylor_green(g))
    report = check_assumptions(setup)
    assert not report.passed
    assert any(c.name == "A3" and not c.passed for c in report.checks)


def test_incompatible_measurement_fails_a5(oseen_twin):
    from dataclasses import replace

    setup, twin = oseen_twin
    bad = replace(twin.measurement, r=twin.measurement.r.copy())
    bad.r[0] += 0.1
    setup_bad = ProblemSetup(setup.params, setup.u0, setup.phi, measurement=bad)
    report = check_assumptions(setup_bad)
    assert any(c.name == "H5" and not c.passed for c in report.checks)


def test_oseen_labels_use_h_prefix(oseen_twin):
    setup, _ = oseen_twin
    names = {c.name for c in check_assumptions(setup).checks}
    assert names == {"H1", "H2", "H3", "H4", "H4a", "H5"}


# ---------------------------------------------------------------------------
# v0


def test_v0_zero_initial_field():
    g = Grid(2, 16)
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=KV), zero_field(g), taylor_green(g))
    assert l2_norm(setup.v0) == 0.0


def test_v0_single_mode_diagonal_formula():
    # shear mode self-advects to zero: v0 = -mu0 |xi|^2 u0 / (1 + mu1 |xi|^2)
    g = Grid(2, 16)
    mu0, mu1 = 1.5, 1.0
    u0 = shear_mode(g, amplitude=0.7)
    setup = ProblemSetup(ModelParams(mu0, mu1, mode=KV), u0, taylor_green(g))
    expected = -mu0 * 1.0 / (1.0 + mu1 * 1.0)
    assert l2_norm(setup.v0 - expected * u0) < 1e-13


def test_v0_taylor_green_direct_assembly():
    g = Grid(2, 8)
    mu0, mu1 = 1.5, 1.0
    u0 = taylor_green(g, amplitude=0.4)
    setup = ProblemSetup(ModelParams(mu0, mu1, mode=KV), u0, taylor_green(g))
    rhs = mu0 * laplacian(u0) - advection_product(u0, u0)
    v0_oracle = helmholtz_inverse(leray_project(rhs), mu1)
    assert l2_norm(setup.v0 - v0_oracle) < 1e-14


def test_v0_oseen_uses_drift():
    g = Grid(2, 16)
    u0 = taylor_green(g, amplitude=0.4)
    u_inf = shear_mode(g, amplitude=0.6, wavenumber=2)
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=OSEEN, u_inf=u_inf), u0, taylor_green(g))
    rhs = 1.5 * laplacian(u0) - advection_product(u_inf, u0)
    v0_oracle = helmholtz_inverse(leray_project(rhs), 1.0)
    assert l2_norm(setup.v0 - v0_oracle) < 1e-14
    assert l2_norm(compute_v0(setup, OSEEN) - v0_oracle) < 1e-14


# ---------------------------------------------------------------------------
# kernel update formula


def _zero_iterate(setup, dt, n_steps, constant=None):
    base = setup.v0 if constant is None else constant
    v = Trajectory.constant(base, dt, n_steps)
    k = KernelTrace(dt, np.zeros(n_steps + 1))
    return v, k


def test_kernel_update_reduces_to_scaled_data(oseen_twin):
    # zero velocity iterate and zero kernel guess: k = alpha * r''
    setup, twin = oseen_twin
    dt, n = 1e-3, 50
    v = Trajectory.constant(zero_field(setup.grid), dt, n)
    k0 = KernelTrace(dt, np.zeros(n + 1))
    out = kernel_update_oseen(v, k0, setup)
    assert np.allclose(out.samples, setup.alpha * twin.measurement.r2[: n + 1])


def test_kernel_update_zero_everything(kv_twin):
    from dataclasses import replace

    setup, twin = kv_twin
    silenced = replace(twin.measurement, r2=np.zeros_like(twin.measurement.r2))
    setup0 = ProblemSetup(setup.params, setup.u0, setup.phi, measurement=silenced)
    dt, n = 1e-3, 50
    v = Trajectory.constant(zero_field(setup.grid), dt, n)
    k0 = KernelTrace(dt, np.zeros(n + 1))
    assert np.all(kernel_update_kv(v, k0, setup0).samples == 0)


def test_kernel_update_oseen_reproduces_truth_on_forward_data(oseen_twin):
    # drift-mode pairings are exactly skew-symmetric, so feeding the forward
    # solver's own (v, k_true) reproduces the kernel to machine precision
    setup, twin = oseen_twin
    out = kernel_update_oseen(twin.v_traj, twin.k_true, setup)
    assert np.max(np.abs(out.samples - twin.k_true.samples)) < 1e-10


def test_kernel_update_kv_reproduces_truth_at_quadrature_order():
    errs = {}
    for dt in (2e-3, 1e-3):
        setup, twin = make_twin(mode=KV, T=0.1, dt=dt, amp=0.3)
        out = kernel_update_kv(twin.v_traj, twin.k_true, setup)
        errs[dt] = np.max(np.abs(out.samples - twin.k_true.samples))
    assert errs[2e-3] / errs[1e-3] >= 3.0  # O(dt^2)
    assert errs[1e-3] < 1e-5


# ---------------------------------------------------------------------------
# linear initial value problem


def test_linear_solve_pure_decay(oseen_twin):
    from dataclasses import replace

    setup, twin = oseen_twin
    dt, n = 1e-3, 40
    cfg = FixedPointConfig(tau=n * dt, dt=dt, tol=1e-8)
    v_tilde = Trajectory.constant(zero_field(setup.grid), dt, n)
    k = KernelTrace(dt, np.zeros(n + 1))
    # zero kernel, zero frozen iterate: forcing vanishes, every mode decays by
    # the scalar Crank-Nicolson factor from v0
    silenced = replace(twin.measurement, r2=np.zeros_like(twin.measurement.r2))
    setup0 = ProblemSetup(setup.params, setup.u0, setup.phi, measurement=silenced)
    v = solve_linear_ibvp_oseen(k, v_tilde, setup0, cfg)
    mu0, mu1 = setup.params.mu0, setup.params.mu1
    k2 = setup.grid.k2
    rho = (1 + mu1 * k2 - 0.5 * dt * mu0 * k2) / (1 + mu1 * k2 + 0.5 * dt * mu0 * k2)
    expected = rho**n * setup.v0.coeffs
    assert np.max(np.abs(v.data[n] - expected)) < 1e-13


def test_linear_solve_self_refinement(oseen_twin):
    # frozen forcing from a smooth iterate: dt-refinement at second order
    setup, twin = oseen_twin

    def solve(dt):
        n = int(round(0.1 / dt))
        sub = twin.measurement.slice(0, n + 1)
        sub = type(sub)(dt, sub.r[:: 1], sub.r1, sub.r2)  # keep dt metadata honest
        cfg = FixedPointConfig(tau=0.1, dt=dt, tol=1e-8)
        stride = int(round(dt / 1e-3))
        v_tilde = Trajectory(setup.grid, dt, twin.v_traj.data[:: stride][: n + 1].copy())
        k = twin.k_true.slice(0, 1001)[0] if False else KernelTrace(
            dt, twin.k_true.samples[:: stride][: n + 1].copy())
        meas = type(twin.measurement)(dt, twin.measurement.r[:: stride][: n + 1],
                                      twin.measurement.r1[:: stride][: n + 1],
                                      twin.measurement.r2[:: stride][: n + 1])
        s = ProblemSetup(setup.params, setup.u0, setup.phi, measurement=meas)
        return solve_linear_ibvp_oseen(k, v_tilde, s, cfg)

    v1 = solve(1e-3)
    v2 = solve(2e-3)
    v4 = solve(4e-3)
    err2 = l2_norm(v2.field(len(v2) - 1) - v1.field(len(v1) - 1))
    err4 = l2_norm(v4.field(len(v4) - 1) - v1.field(len(v1) - 1))
    assert err4 / err2 > 3.0


def test_fixed_point_config_validation():
    with pytest.raises(ValueError):
        FixedPointConfig(tau=0.25, dt=1e-3, tol=-1)
    with pytest.raises(ValueError):
        FixedPointConfig(tau=0.2501, dt=1e-3)


# ---------------------------------------------------------------------------
# full Picard solve


def test_zero_kernel_twin_recovers_zero():
    setup, twin = make_twin(mode=OSEEN, T=0.2, dt=1e-3, gamma=0.5, delta=0.5)
    twin0 = synthesize_twin(setup, KernelSpec.zero(), 0.2, 1e-3)
    setup.measurement = twin0.measurement
    cfg = FixedPointConfig(tau=0.2, dt=1e-3, tol=1e-10)
    res = fixed_point_solve(setup, cfg)
    assert res.converged
    assert res.k.l2_norm() <= 1e-6


def test_oseen_twin_reconstruction(oseen_result, oseen_twin):
    _, twin = oseen_twin
    res = oseen_result
    assert res.converged
    assert relative_kernel_error(res.k, twin.k_true) <= 0.05
    assert np.all(res.contraction_ratios < 1.0)
    assert res.residuals["window_halvings"] == 0


def test_iterates_keep_initial_value_and_divergence(oseen_result, oseen_twin):
    setup, _ = oseen_twin
    res = oseen_result
    assert res.residuals["v0_mismatch"] == 0.0
    assert res.residuals["divergence_max"] <= 1e-12


def test_fixed_point_consistency_one_more_application(oseen_result, oseen_twin):
    # a converged pair moves by no more than the tolerance under one more sweep
    setup, _ = oseen_twin
    res = oseen_result
    cfg = FixedPointConfig(tau=res.tau, dt=res.k.dt, tol=1e-10)
    k_next = kernel_update_oseen(res.v, res.k, setup)
    v_next = solve_linear_ibvp_oseen(k_next, res.v, setup, cfg)
    delta = combined_norm(
        Trajectory(res.v.grid, res.v.dt, v_next.data - res.v.data),
        KernelTrace(res.k.dt, k_next.samples - res.k.samples))
    assert delta <= cfg.tol


def test_solver_requires_passing_assumptions():
    g = Grid(2, 16)
    setup = ProblemSetup(ModelParams(1.5, 1.0, mode=KV), taylor_green(g),
                         shear_mode(g, wavenumber=3))
    from kvmem.forward import MeasurementTrace

    setup.measurement = MeasurementTrace(1e-3, np.zeros(300), np.zeros(300), np.zeros(300))
    with pytest.raises(ValueError):
        fixed_point_solve(setup, FixedPointConfig(tau=0.25, dt=1e-3))


# ---------------------------------------------------------------------------
# reconstruction and residuals


def test_reconstruct_constant_derivative():
    g = Grid(2, 8)
    u0 = taylor_green(g)
    f = shear_mode(g, amplitude=0.5)
    dt, n = 0.01, 20
    v = Trajectory.constant(f, dt, n)
    u = reconstruct_u(v, u0)
    assert l2_norm(u.field(0) - u0) == 0.0
    assert l2_norm(u.field(n) - (u0 + n * dt * f)) < 1e-13


def test_reconstruct_zero_derivative():
    g = Grid(2, 8)
    u0 = taylor_green(g)
    v = Trajectory.constant(zero_field(g), 0.01, 10)
    u = reconstruct_u(v, u0)
    for n in range(11):
        assert l2_norm(u.field(n) - u0) == 0.0


def test_reconstruct_matches_forward_trajectory(oseen_twin):
    setup, twin = oseen_twin

    def gap(stride):
        dt = 1e-3 * stride
        v = Trajectory(setup.grid, dt, twin.v_traj.data[::stride].copy())
        u = reconstruct_u(v, setup.u0)
        ref = twin.u_traj.data[::stride]
        return max(l2_norm(u.field(n) - SpectralField(setup.grid, ref[n]))
                   for n in range(len(u)))

    assert gap(1) < 1e-5
    assert gap(2) / gap(1) > 3.0  # O(dt^2)


def test_residuals_on_forward_output_shrink_with_dt():
    params_kwargs = dict(mode=KV, amp=0.3)

    def momentum(dt):
        setup, twin = make_twin(T=0.1, dt=dt, **params_kwargs)
        return residual_check(twin.u_traj, twin.k_true, setup)["momentum_residual"]

    m_coarse, m_fine = momentum(4e-3), momentum(2e-3)
    assert m_coarse / m_fine >= 3.0


def test_residuals_flag_equation_violation(kv_twin):
    # constant-in-time u with a nonzero diffusion term cannot solve the system
    setup, twin = kv_twin
    u = Trajectory.constant(setup.u0, 1e-3, 50)
    k = KernelTrace(1e-3, np.zeros(51))
    diag = residual_check(u, k, setup)
    assert diag["momentum_residual"] > 1e-2


def test_converged_overdetermination_residual(oseen_result):
    assert oseen_result.residuals["overdetermination_max"] <= 10 * 1e-10
