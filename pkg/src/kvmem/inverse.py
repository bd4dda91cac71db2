"""Kernel reconstruction by Picard iteration on the derivative system.

Substituting ``v = du/dt`` turns the inverse problem into a coupled pair: an
explicit pointwise formula for the kernel (the probe trace differentiated
twice, corrected by inner products of the current velocity iterate) and a
linear initial value problem for ``v`` whose forcing uses the frozen iterate.
Iterating the two maps is a contraction on short enough windows; this module
implements the iteration for both the full nonlinearity ("kv") and the Oseen
linearization ("oseen"), together with the data assumption checks and the
a-posteriori residual diagnostics.

Everything operates on a ``WindowProblem``: a self-contained description of
one time window including any frozen history terms.  A fresh solve is simply
a window with empty history; the continuation module builds shifted windows
with precomputed history convolution tails.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .forward import KV, OSEEN, MeasurementTrace, ModelParams, SolverDivergenceError
from .memory import KernelTrace, convolution_matrix, convolve_scalar_all
from .spectral import (
    Grid,
    SpectralField,
    Trajectory,
    advection_product,
    divergence,
    l2_inner,
    l2_norm,
    laplacian,
    leray_project,
    measurement_functional,
    sobolev_norm,
    helmholtz_inverse,
)

__all__ = [
    "ProblemSetup",
    "FixedPointConfig",
    "FixedPointResult",
    "AssumptionCheck",
    "AssumptionReport",
    "WindowProblem",
    "check_assumptions",
    "compute_v0",
    "kernel_update_kv",
    "kernel_update_oseen",
    "solve_linear_ibvp_kv",
    "solve_linear_ibvp_oseen",
    "fixed_point_solve",
    "solve_window",
    "reconstruct_u",
    "residual_check",
    "combined_norm",
    "trajectory_h1h2_norm",
]


# ---------------------------------------------------------------------------
# batched helpers (stacked time axis)


def _inner_traj(data: np.ndarray, f: SpectralField) -> np.ndarray:
    """L2 inner product of every trajectory sample with a fixed field."""
    vol = (2.0 * np.pi) ** f.grid.dim
    axes = tuple(range(1, data.ndim))
    return vol * np.real(np.sum(data * np.conj(f.coeffs), axis=axes))


def _project_batch(grid: Grid, data: np.ndarray) -> np.ndarray:
    kdot = np.sum(grid.k[None] * data, axis=1)
    out = data - grid.k[None] * (kdot / grid.k2_safe)[:, None]
    out[(slice(None), slice(None)) + (0,) * grid.dim] = 0.0
    return out


def _advect_batch(grid: Grid, a_data: np.ndarray, b_data: np.ndarray) -> np.ndarray:
    """Dealiased ``(a . grad) b`` for stacked samples (no projection)."""
    axes = tuple(range(2, a_data.ndim))
    n_total = grid.n**grid.dim
    a_phys = np.real(np.fft.ifftn(a_data * n_total, axes=axes))
    out = np.zeros_like(a_phys)
    for j in range(grid.dim):
        db = np.real(np.fft.ifftn(1j * grid.k[j] * b_data * n_total, axes=axes))
        out += a_phys[:, j][:, None] * db
    coeffs = np.fft.fftn(out, axes=axes) / n_total
    return coeffs * grid.dealias


def _cumtrapz_traj(data: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid integral along the time axis, zero at t=0."""
    out = np.zeros_like(data)
    if len(data) > 1:
        increments = 0.5 * dt * (data[1:] + data[:-1])
        out[1:] = np.cumsum(increments, axis=0)
    return out


def trajectory_h1h2_norm(data: np.ndarray, grid: Grid, dt: float) -> float:
    """Discrete ``H^1(0,tau; H^2)`` norm: trapezoid in time of the squared
    ``H^2`` norm plus the same for the forward-difference time derivative."""
    vol = (2.0 * np.pi) ** grid.dim
    w = (1.0 + grid.k2) ** 2
    axes = tuple(range(1, data.ndim))
    sq = vol * np.sum(w * np.abs(data) ** 2, axis=axes)
    total = np.trapezoid(sq, dx=dt)
    if len(data) > 1:
        dv = np.diff(data, axis=0) / dt
        dsq = vol * np.sum(w * np.abs(dv) ** 2, axis=axes)
        total += np.trapezoid(dsq, dx=dt) if len(dsq) > 1 else dt * float(dsq[0])
    return float(np.sqrt(total))


def combined_norm(v: Trajectory, k: KernelTrace) -> float:
    """Iteration norm ``||v||_{H^1(0,tau;H^2)} + ||k||_{L^2(0,tau)}``."""
    return trajectory_h1h2_norm(v.data, v.grid, v.dt) + k.l2_norm()


# ---------------------------------------------------------------------------
# problem setup and assumption checks


@dataclass
class ProblemSetup:
    """Inverse-problem data: model constants, initial state, probe, trace.

    ``alpha`` (the reciprocal of ``<phi, Lap u0>``) and the derived initial
    derivative ``v0`` are computed on construction; ``alpha`` is ``inf`` when
    the probe is orthogonal to ``Lap u0``, which the assumption checker
    reports instead of raising.
    """

    params: ModelParams
    u0: SpectralField
    phi: SpectralField
    measurement: Optional[MeasurementTrace] = None
    alpha_inv: float = dc_field(init=False)
    alpha: float = dc_field(init=False)
    v0: SpectralField = dc_field(init=False)

    def __post_init__(self):
        if self.u0.grid != self.phi.grid:
            raise ValueError("u0 and phi must share a grid")
        self.alpha_inv = l2_inner(self.phi, laplacian(self.u0))
        self.alpha = 1.0 / self.alpha_inv if self.alpha_inv != 0 else np.inf
        self.v0 = compute_v0(self)

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    @property
    def mode(self) -> str:
        return self.params.mode


def compute_v0(setup: ProblemSetup, mode: Optional[str] = None) -> SpectralField:
    """Initial time derivative ``v0 = (I - mu1 Lap)^{-1} P[mu0 Lap u0 - (a.grad)u0]``.

    ``a`` is ``u0`` for the full nonlinearity and the drift for Oseen; the
    initial pressure gradient is absorbed by the projection.
    """
    mode = mode or setup.params.mode
    a = setup.u0 if mode == KV else setup.params.u_inf
    rhs = setup.params.mu0 * laplacian(setup.u0) - advection_product(a, setup.u0)
    return helmholtz_inverse(leray_project(rhs), setup.params.mu1)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str


@dataclass
class AssumptionReport:
    mode: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "measured": c.measured,
                 "threshold": c.threshold, "detail": c.detail}
                for c in self.checks
            ],
        }


def _div_residual(f: SpectralField) -> float:
    scale = max(l2_norm(f), 1e-300)
    return float(np.max(np.abs(divergence(f)))) / scale


def check_assumptions(setup: ProblemSetup, mode: Optional[str] = None,
                      div_tol: float = 1e-10,
                      compat_tol: float = 1e-6) -> AssumptionReport:
    """Validate the data assumptions; report-only, never raises.

    Names follow the convention (A1)-(A5) for the full nonlinearity and
    (H1)-(H5) for the Oseen variant.  The compatibility checks of the last
    assumption are only evaluated when a measurement trace is attached.
    """
    mode = mode or setup.params.mode
    tag = "A" if mode == KV else "H"
    checks = []

    d0 = _div_residual(setup.u0)
    checks.append(AssumptionCheck(
        f"{tag}1", d0 <= div_tol and l2_norm(setup.u0) > 0, d0, div_tol,
        "initial velocity divergence-free and nonzero"))
    dphi = _div_residual(setup.phi)
    checks.append(AssumptionCheck(
        f"{tag}2", dphi <= div_tol and l2_norm(setup.phi) > 0, dphi, div_tol,
        "probe field divergence-free and nonzero"))

    floor = 1e-8 * l2_norm(setup.phi) * sobolev_norm(setup.u0, 2)
    a_ok = np.isfinite(setup.alpha_inv) and abs(setup.alpha_inv) > floor
    checks.append(AssumptionCheck(
        f"{tag}3", bool(a_ok), float(setup.alpha_inv), floor,
        "probe not orthogonal to Lap u0 (normalizer alpha finite)"))

    if mode == OSEEN and setup.params.u_inf is not None:
        dinf = _div_residual(setup.params.u_inf)
        checks.append(AssumptionCheck(
            f"{tag}4a", dinf <= div_tol, dinf, div_tol, "drift field divergence-free"))
    dv0 = _div_residual(setup.v0)
    checks.append(AssumptionCheck(
        f"{tag}4", dv0 <= div_tol and bool(np.all(np.isfinite(setup.v0.coeffs))),
        dv0, div_tol, "derived v0 finite and divergence-free"))

    if setup.measurement is not None:
        m = setup.measurement
        mu0, mu1 = setup.params.mu0, setup.params.mu1
        r0_expected = measurement_functional(setup.phi, setup.u0, mu1)
        a = setup.u0 if mode == KV else setup.params.u_inf
        r1_expected = (mu0 * l2_inner(laplacian(setup.u0), setup.phi)
                       - l2_inner(advection_product(a, setup.u0), setup.phi))
        scale = max(1.0, abs(r0_expected), abs(r1_expected))
        err = max(abs(m.r[0] - r0_expected), abs(m.r1[0] - r1_expected)) / scale
        finite = bool(np.all(np.isfinite(m.r)) and np.all(np.isfinite(m.r1))
                      and np.all(np.isfinite(m.r2)))
        checks.append(AssumptionCheck(
            f"{tag}5", finite and err <= compat_tol, err, compat_tol,
            "measurement finite and compatible with r(0), r'(0) identities"))

    return AssumptionReport(mode, checks)


# ---------------------------------------------------------------------------
# one Picard window


@dataclass
class FixedPointConfig:
    tau: float
    dt: float
    tol: float = 1e-8
    max_iter: int = 50
    enforce_smallness: bool = False

    def __post_init__(self):
        if self.tau <= 0 or self.dt <= 0 or self.tol <= 0:
            raise ValueError("tau, dt, tol must be positive")
        steps = self.tau / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("tau must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.tau / self.dt))


@dataclass
class FixedPointResult:
    v: Trajectory
    k: KernelTrace
    iterations: int
    contraction_ratios: np.ndarray
    residuals: dict
    converged: bool
    tau: float
    deltas: np.ndarray
    message: str = ""


@dataclass
class WindowProblem:
    """One reconstruction window, possibly with frozen history terms.

    For a fresh solve the history fields are ``None`` and the tail arrays are
    zero.  For a shifted window (continuation) the early slices of the history
    velocity/kernel feed the split convolutions, and the tails carry the part
    of the memory integral that depends only on frozen history.
    """

    grid: Grid
    dt: float
    n_steps: int
    mu0: float
    mu1: float
    mode: str
    u_inf: Optional[SpectralField]
    u0: SpectralField          # original initial velocity (kernel source term)
    u_base: SpectralField      # transport base: velocity at the window start (kv)
    phi: SpectralField
    alpha: float
    r2_window: np.ndarray
    v_init: SpectralField
    hist_v_early: Optional[np.ndarray] = None
    hist_k_early: Optional[np.ndarray] = None
    tail_scalar: Optional[np.ndarray] = None
    tail_field: Optional[np.ndarray] = None

    def __post_init__(self):
        m = self.n_steps + 1
        if len(self.r2_window) < m:
            raise ValueError("measurement window shorter than the time grid")
        shape = (m,) + self.u0.coeffs.shape
        if self.tail_scalar is None:
            self.tail_scalar = np.zeros(m)
        if self.tail_field is None:
            self.tail_field = np.zeros(shape, dtype=complex)
        # fixed per-window quantities
        self._lap_phi = laplacian(self.phi)
        self._lap_u0_phi = l2_inner(self._lap_phi, self.u0)
        if self.mode == OSEEN:
            self._drift_phi = advection_product(self.u_inf, self.phi)
        if self.hist_v_early is not None:
            self._hist_s_early = _inner_traj(self.hist_v_early * (-self.grid.k2),
                                             self.phi)
        self._hist_conv_mat = None
        if self.hist_k_early is not None:
            hk = KernelTrace(self.dt, self.hist_k_early[: m])
            self._hist_conv_mat = convolution_matrix(hk, self.n_steps)

    def kernel_update(self, v_tilde: np.ndarray, k_tilde: np.ndarray) -> np.ndarray:
        """Pointwise kernel formula applied to the frozen iterate."""
        if not np.isfinite(self.alpha):
            raise ValueError("kernel update undefined: alpha is not finite")
        m = self.n_steps + 1
        s_tilde = _inner_traj(v_tilde * (-self.grid.k2), self.phi)  # <Lap v, phi>
        mat_new = convolution_matrix(KernelTrace(self.dt, k_tilde), self.n_steps)
        if self.hist_v_early is None:
            conv = mat_new @ s_tilde
        else:
            conv = mat_new @ self._hist_s_early[:m]
            conv = conv + self._hist_conv_mat @ s_tilde
        out = self.r2_window[:m] - self.mu0 * s_tilde - conv - self.tail_scalar[:m]
        if self.mode == OSEEN:
            out = out - _inner_traj(v_tilde, self._drift_phi)
        else:
            u_full = self.u_base.coeffs[None] + _cumtrapz_traj(v_tilde, self.dt)
            adv_v_phi = _advect_batch(self.grid, v_tilde, np.broadcast_to(
                self.phi.coeffs, v_tilde.shape))
            adv_u_phi = _advect_batch(self.grid, u_full, np.broadcast_to(
                self.phi.coeffs, u_full.shape))
            vol = (2.0 * np.pi) ** self.grid.dim
            axes = tuple(range(1, v_tilde.ndim))
            t4 = vol * np.real(np.sum(adv_v_phi * np.conj(u_full), axis=axes))
            t5 = vol * np.real(np.sum(adv_u_phi * np.conj(v_tilde), axis=axes))
            out = out - t4 - t5
        return self.alpha * out

    def forcing(self, k_new: np.ndarray, v_tilde: np.ndarray) -> np.ndarray:
        """Projected right-hand side G(t_n) of the linear problem, all steps."""
        m = self.n_steps + 1
        lap_u0 = -self.grid.k2 * self.u0.coeffs
        g = k_new[:m].reshape((m,) + (1,) * lap_u0.ndim) * lap_u0[None]
        mat_new = convolution_matrix(KernelTrace(self.dt, k_new), self.n_steps)
        target = self.hist_v_early if self.hist_v_early is not None else v_tilde
        flat = (-self.grid.k2 * target[:m]).reshape(m, -1)
        g = g + (mat_new @ flat).reshape(g.shape)
        if self._hist_conv_mat is not None:
            flat_t = (-self.grid.k2 * v_tilde).reshape(m, -1)
            g = g + (self._hist_conv_mat @ flat_t).reshape(g.shape)
        g = g + self.tail_field[:m]
        if self.mode == OSEEN:
            g = g - _advect_batch(self.grid, np.broadcast_to(
                self.u_inf.coeffs, v_tilde.shape), v_tilde)
        else:
            u_full = self.u_base.coeffs[None] + _cumtrapz_traj(v_tilde, self.dt)
            g = g - _advect_batch(self.grid, v_tilde, u_full)
            g = g - _advect_batch(self.grid, u_full, v_tilde)
        return _project_batch(self.grid, g)

    def integrate(self, k_new: np.ndarray, v_tilde: np.ndarray) -> np.ndarray:
        """March the diagonal linear problem with the frozen forcing.

        Crank-Nicolson throughout: the forcing is known on the whole window
        (it depends only on the frozen iterate), so trapezoid averaging of G
        keeps the update one-step and makes the probe trace of the solution
        an exact discrete time integral of the kernel-formula right-hand
        side -- which is what ties the converged overdetermination residual
        to the iteration tolerance instead of the step size.
        """
        g = self.forcing(k_new, v_tilde)
        grid = self.grid
        helm = 1.0 + self.mu1 * grid.k2
        c = 0.5 * self.dt * self.mu0 * grid.k2
        v = np.zeros_like(g)
        v[0] = self.v_init.coeffs
        norm0 = max(float(np.sqrt(np.sum(np.abs(v[0]) ** 2))), 1e-30)
        for n in range(self.n_steps):
            f_star = 0.5 * (g[n] + g[n + 1])
            v[n + 1] = ((helm - c) * v[n] + self.dt * f_star) / (helm + c)
            if not np.all(np.isfinite(v[n + 1])):
                raise SolverDivergenceError(n + 1, "linear solve produced non-finite values")
            if np.sqrt(np.sum(np.abs(v[n + 1]) ** 2)) > 1e8 * max(norm0, 1.0):
                raise SolverDivergenceError(n + 1, "linear solve is blowing up")
        return v


def solve_window(prob: WindowProblem, cfg: FixedPointConfig,
                 initial_kernel: Optional[np.ndarray] = None,
                 on_iteration=None) -> FixedPointResult:
    """Picard iteration on one window (no halving; drivers own restarts)."""
    m = prob.n_steps + 1
    grid = prob.grid
    v_tilde = np.broadcast_to(prob.v_init.coeffs, (m,) + prob.v_init.coeffs.shape).copy()
    k_tilde = np.zeros(m) if initial_kernel is None else np.asarray(initial_kernel, float).copy()
    tau = prob.n_steps * prob.dt

    deltas, ratios = [], []
    converged = False
    message = ""
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        iterations = it
        try:
            k_new = prob.kernel_update(v_tilde, k_tilde)
            v_new = prob.integrate(k_new, v_tilde)
        except SolverDivergenceError as exc:
            message = f"iteration {it} diverged: {exc}"
            break
        delta = (trajectory_h1h2_norm(v_new - v_tilde, grid, prob.dt)
                 + float(np.sqrt(np.trapezoid((k_new - k_tilde) ** 2, dx=prob.dt))))
        deltas.append(delta)
        if len(deltas) > 1 and deltas[-2] > 0:
            ratios.append(delta / deltas[-2])
        iterate_norm = (trajectory_h1h2_norm(v_new, grid, prob.dt)
                        + float(np.sqrt(np.trapezoid(k_new**2, dx=prob.dt))))
        v_tilde, k_tilde = v_new, k_new
        if on_iteration is not None:
            on_iteration({"iteration": it, "delta": delta,
                          "ratio": ratios[-1] if ratios else None,
                          "iterate_norm": iterate_norm, "tau": tau})
        if cfg.enforce_smallness and tau * (1 + iterate_norm + iterate_norm**2) > 1.0:
            message = (f"smallness violated: tau(1+L+L^2) = "
                       f"{tau * (1 + iterate_norm + iterate_norm**2):.3f} > 1 with L={iterate_norm:.3f}")
            break
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            message = "no contraction for 3 consecutive iterations"
            break
        if delta <= cfg.tol:
            converged = True
            break
    else:
        message = f"no convergence in {cfg.max_iter} iterations (last delta {deltas[-1]:.3e})"

    v_traj = Trajectory(grid, prob.dt, v_tilde)
    k_trace = KernelTrace(prob.dt, k_tilde)
    return FixedPointResult(v_traj, k_trace, iterations, np.array(ratios), {},
                            converged, tau, np.array(deltas), message)


# ---------------------------------------------------------------------------
# public per-operation wrappers (fresh window, no history)


def _fresh_problem(setup: ProblemSetup, dt: float, n_steps: int, mode: str) -> WindowProblem:
    if setup.measurement is None:
        raise ValueError("setup has no measurement trace")
    if len(setup.measurement.r2) < n_steps + 1:
        raise ValueError("measurement trace shorter than the requested window")
    if abs(setup.measurement.dt - dt) > 1e-12 * dt:
        raise ValueError("measurement dt does not match the solver dt")
    return WindowProblem(
        grid=setup.grid, dt=dt, n_steps=n_steps, mu0=setup.params.mu0,
        mu1=setup.params.mu1, mode=mode, u_inf=setup.params.u_inf,
        u0=setup.u0, u_base=setup.u0, phi=setup.phi, alpha=setup.alpha,
        r2_window=setup.measurement.r2, v_init=setup.v0)


def kernel_update_kv(v_tilde: Trajectory, k_tilde: KernelTrace,
                     setup: ProblemSetup) -> KernelTrace:
    """Kernel formula for the full nonlinearity applied to a frozen iterate."""
    prob = _fresh_problem(setup, v_tilde.dt, v_tilde.n_steps, KV)
    return KernelTrace(v_tilde.dt, prob.kernel_update(v_tilde.data, k_tilde.samples))


def kernel_update_oseen(v_tilde: Trajectory, k_tilde: KernelTrace,
                        setup: ProblemSetup) -> KernelTrace:
    """Kernel formula for the Oseen variant applied to a frozen iterate."""
    prob = _fresh_problem(setup, v_tilde.dt, v_tilde.n_steps, OSEEN)
    return KernelTrace(v_tilde.dt, prob.kernel_update(v_tilde.data, k_tilde.samples))


def solve_linear_ibvp_kv(k: KernelTrace, v_tilde: Trajectory, setup: ProblemSetup,
                         cfg: FixedPointConfig) -> Trajectory:
    prob = _fresh_problem(setup, cfg.dt, cfg.n_steps, KV)
    return Trajectory(setup.grid, cfg.dt, prob.integrate(k.samples, v_tilde.data))


def solve_linear_ibvp_oseen(k: KernelTrace, v_tilde: Trajectory, setup: ProblemSetup,
                            cfg: FixedPointConfig) -> Trajectory:
    prob = _fresh_problem(setup, cfg.dt, cfg.n_steps, OSEEN)
    return Trajectory(setup.grid, cfg.dt, prob.integrate(k.samples, v_tilde.data))


# ---------------------------------------------------------------------------
# top-level driver


def fixed_point_solve(setup: ProblemSetup, cfg: FixedPointConfig,
                      mode: Optional[str] = None,
                      initial_kernel: Optional[np.ndarray] = None,
                      on_iteration=None) -> FixedPointResult:
    """Reconstruct ``(v, k)`` on ``[0, cfg.tau]`` by Picard iteration.

    The window is halved and the solve restarted when the iteration stops
    contracting (three consecutive non-contracting ratios) or, with
    ``cfg.enforce_smallness``, when the running iterate norm violates the
    window-size heuristic ``tau (1 + L + L^2) <= 1``.  Fails (with
    ``converged=False`` and diagnostics) once the window would drop below
    ``4*dt``.
    """
    mode = mode or setup.params.mode
    report = check_assumptions(setup, mode)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures)
        raise ValueError(f"data assumptions violated: {names}")

    tau = cfg.tau
    halvings = 0
    result = None
    while True:
        sub_cfg = FixedPointConfig(tau, cfg.dt, cfg.tol, cfg.max_iter,
                                   cfg.enforce_smallness)
        prob = _fresh_problem(setup, cfg.dt, sub_cfg.n_steps, mode)
        result = solve_window(prob, sub_cfg, initial_kernel=initial_kernel,
                              on_iteration=on_iteration)
        if result.converged:
            break
        if tau / 2 < 4 * cfg.dt:
            result.message += " (window floor 4*dt reached)"
            break
        tau = tau / 2
        halvings += 1

    result.residuals = _window_diagnostics(result, setup, mode)
    result.residuals["window_halvings"] = halvings
    return result


def _window_diagnostics(result: FixedPointResult, setup: ProblemSetup, mode: str) -> dict:
    u = reconstruct_u(result.v, setup.u0)
    diag = residual_check(u, result.k, setup, mode)
    diag["v0_mismatch"] = l2_norm(result.v.field(0) - setup.v0)
    diag["divergence_max"] = max(
        float(np.max(np.abs(divergence(result.v.field(n))))) for n in range(len(result.v)))
    return diag


# ---------------------------------------------------------------------------
# reconstruction and residuals


def reconstruct_u(v: Trajectory, u0: SpectralField) -> Trajectory:
    """Velocity from its derivative: ``u(t) = u0 + int_0^t v``, trapezoid."""
    data = u0.coeffs[None] + _cumtrapz_traj(v.data, v.dt)
    return Trajectory(v.grid, v.dt, data)


def residual_check(u: Trajectory, k: KernelTrace, setup: ProblemSetup,
                   mode: Optional[str] = None) -> dict:
    """Discrete residuals of the original system on a trajectory.

    Momentum residual uses centered time differences at interior nodes and is
    reported as an ``L^2(0,tau; L^2)`` norm; also reports the worst divergence
    coefficient and the maximum probe mismatch when a measurement is attached.
    """
    mode = mode or setup.params.mode
    grid = u.grid
    dt = u.dt
    m = len(u)
    mu0, mu1 = setup.params.mu0, setup.params.mu1
    helm = 1.0 + mu1 * grid.k2
    mem = np.zeros_like(u.data)
    mat = convolution_matrix(k, m - 1)
    mem = (mat @ (-grid.k2 * u.data).reshape(m, -1)).reshape(u.data.shape)
    if mode == KV:
        adv = _advect_batch(grid, u.data, u.data)
    else:
        adv = _advect_batch(grid, np.broadcast_to(setup.params.u_inf.coeffs, u.data.shape),
                            u.data)
    residual_sq = []
    vol = (2.0 * np.pi) ** grid.dim
    for n in range(1, m - 1):
        dudt = (u.data[n + 1] - u.data[n - 1]) / (2 * dt)
        r_n = helm * dudt + mu0 * grid.k2 * u.data[n] + adv[n] - mem[n]
        r_n = _project_batch(grid, r_n[None])[0]
        residual_sq.append(vol * float(np.sum(np.abs(r_n) ** 2)))
    momentum = float(np.sqrt(np.trapezoid(residual_sq, dx=dt))) if residual_sq else 0.0

    div_max = max(float(np.max(np.abs(divergence(u.field(n))))) for n in range(m))

    diag = {"momentum_residual": momentum, "divergence_max": div_max}
    if setup.measurement is not None and len(setup.measurement.r) >= m:
        mismatch = [abs(measurement_functional(setup.phi, u.field(n), mu1)
                        - setup.measurement.r[n]) for n in range(m)]
        diag["overdetermination_max"] = float(np.max(mismatch))
    return diag
