"""Volterra memory term: trapezoid convolution quadrature and history splitting.

The hereditary term ``int_0^t k(t-s) Lap u(s) ds`` and its scalar projections
are all causal convolutions on a uniform time grid.  Everything here uses the
composite trapezoid rule (weights dt/2 at both endpoints), which matches the
second-order time steppers elsewhere and is exactly additive when an integral
is split at grid nodes -- the property the window-continuation machinery
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import SpectralField, Trajectory

__all__ = [
    "KernelTrace",
    "KernelSpec",
    "trapezoid_weights",
    "convolution_matrix",
    "convolve_scalar",
    "convolve_scalar_all",
    "convolve_field",
    "convolve_field_all",
    "tail_convolution_scalar",
    "history_source",
    "split_convolution",
    "BoundReport",
    "check_young_bound",
    "check_time_primitive_bound",
]


@dataclass
class KernelTrace:
    """Memory kernel sampled at ``t_n = n*dt``."""

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("kernel samples must be a nonempty 1d array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("kernel samples must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))

    @property
    def duration(self) -> float:
        return self.dt * (len(self.samples) - 1)

    def l2_norm(self) -> float:
        """Discrete ``L^2(0, tau)`` norm by the trapezoid rule."""
        if len(self.samples) == 1:
            return 0.0
        return float(np.sqrt(np.trapezoid(self.samples**2, dx=self.dt)))

    def slice(self, start: int, stop: int) -> "KernelTrace":
        return KernelTrace(self.dt, self.samples[start:stop].copy())


@dataclass
class KernelSpec:
    """Kernel description: analytic exponential, zero, or tabulated samples.

    The exponential family ``k(t) = gamma * exp(-delta * t)`` can be derived
    from the physical constants (relaxation time ``lam``, retardation times
    ``kappa1``, ``kappa2``, viscosity ``nu``) via ``gamma = (2/lam)(nu -
    kappa1/lam + kappa2/lam^2)`` and ``delta = 1/lam``; see
    :func:`kvmem.io.derive_model_constants` for the matching ``mu0, mu1`` map.
    """

    variant: str  # "exponential" | "zero" | "tabulated"
    gamma: float = 0.0
    delta: float = 0.0
    table: Optional[KernelTrace] = None

    def __post_init__(self):
        if self.variant not in ("exponential", "zero", "tabulated"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "exponential" and (self.gamma <= 0 or self.delta <= 0):
            raise ValueError("exponential kernel needs gamma > 0 and delta > 0")
        if self.variant == "tabulated" and self.table is None:
            raise ValueError("tabulated kernel needs a KernelTrace")

    @classmethod
    def exponential(cls, gamma: float, delta: float) -> "KernelSpec":
        return cls("exponential", gamma=gamma, delta=delta)

    @classmethod
    def zero(cls) -> "KernelSpec":
        return cls("zero")

    @classmethod
    def tabulated(cls, trace: KernelTrace) -> "KernelSpec":
        return cls("tabulated", table=trace)

    def sample(self, dt: float, n_steps: int) -> KernelTrace:
        t = dt * np.arange(n_steps + 1)
        if self.variant == "zero":
            return KernelTrace(dt, np.zeros(n_steps + 1))
        if self.variant == "exponential":
            return KernelTrace(dt, self.gamma * np.exp(-self.delta * t))
        if abs(self.table.dt - dt) > 1e-12 * dt or len(self.table.samples) < n_steps + 1:
            raise ValueError("tabulated kernel does not cover the requested grid")
        return KernelTrace(dt, self.table.samples[: n_steps + 1].copy())


# ---------------------------------------------------------------------------
# trapezoid convolution


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    """Weights for ``int_0^{n dt}``: dt/2 at the ends, dt inside, 0 for n=0."""
    if n == 0:
        return np.zeros(1)
    w = np.full(n + 1, dt)
    w[0] = w[n] = 0.5 * dt
    return w


def convolution_matrix(k: KernelTrace, n_steps: int) -> np.ndarray:
    """Lower-triangular ``A`` with ``(A f)_n = int_0^{t_n} k(t_n - s) f(s) ds``."""
    if len(k.samples) < n_steps + 1:
        raise ValueError("kernel trace shorter than requested convolution range")
    m = n_steps + 1
    idx = np.subtract.outer(np.arange(m), np.arange(m))
    kern = np.where(idx >= 0, k.samples[np.clip(idx, 0, None)], 0.0)
    w = np.full((m, m), k.dt)
    w[:, 0] = 0.5 * k.dt
    np.fill_diagonal(w, 0.5 * k.dt)
    w = np.tril(w)
    w[0, :] = 0.0
    return kern * w


def _check_dt(k: KernelTrace, dt: float):
    if abs(k.dt - dt) > 1e-12 * max(k.dt, dt):
        raise ValueError(f"dt mismatch: kernel {k.dt} vs data {dt}")


def convolve_scalar(k: KernelTrace, f: np.ndarray, n: int) -> float:
    """Trapezoid value of ``int_0^{t_n} k(t_n - s) f(s) ds``."""
    f = np.asarray(f, dtype=float)
    if len(f) < n + 1 or len(k.samples) < n + 1:
        raise ValueError("trace too short for requested index")
    if n == 0:
        return 0.0
    w = trapezoid_weights(n, k.dt)
    return float(np.sum(w * k.samples[n::-1] * f[: n + 1]))


def convolve_scalar_all(k: KernelTrace, f: np.ndarray) -> np.ndarray:
    """All values ``n = 0..len(f)-1`` at once via the convolution matrix."""
    f = np.asarray(f, dtype=float)
    return convolution_matrix(k, len(f) - 1) @ f


def convolve_field(k: KernelTrace, traj: Trajectory, n: int,
                   laplace: bool = False) -> SpectralField:
    """Componentwise trapezoid convolution of a field history at step ``n``.

    With ``laplace=True`` the integrand is ``Lap traj`` (the multiplier
    ``-|xi|^2`` is time-independent and applied once to the weighted sum).
    """
    _check_dt(k, traj.dt)
    if len(traj) < n + 1 or len(k.samples) < n + 1:
        raise ValueError("history too short for requested index")
    if n == 0:
        out = np.zeros_like(traj.data[0])
    else:
        w = trapezoid_weights(n, k.dt) * k.samples[n::-1]
        out = np.tensordot(w, traj.data[: n + 1], axes=1)
    if laplace:
        out = -traj.grid.k2 * out
    return SpectralField(traj.grid, out)


def convolve_field_all(k: KernelTrace, traj: Trajectory,
                       laplace: bool = False) -> np.ndarray:
    """Whole-history field convolution, shape ``(n_times, dim, n, ..., n)``.

    One matrix product over the flattened field axis; this is what keeps the
    Picard iterations cheap.
    """
    _check_dt(k, traj.dt)
    m = len(traj)
    mat = convolution_matrix(k, m - 1)
    flat = traj.data.reshape(m, -1)
    out = (mat @ flat).reshape(traj.data.shape)
    if laplace:
        out = -traj.grid.k2 * out
    return out


# ---------------------------------------------------------------------------
# history splitting for window continuation


def tail_convolution_scalar(k_hat: KernelTrace, f_hat: np.ndarray, n: int) -> float:
    """``int_{t_n}^{tau} k_hat(tau + t_n - s) f_hat(s) ds`` over old history.

    ``tau`` is the duration covered by ``f_hat``; ``t_n = n*dt`` must satisfy
    ``0 <= t_n <= tau``.  Returns 0 for the degenerate range ``t_n = tau``.
    """
    f_hat = np.asarray(f_hat, dtype=float)
    m_h = len(f_hat) - 1
    if n < 0 or n > m_h:
        raise ValueError("tail evaluation time outside the history window")
    if n == m_h:
        return 0.0
    j = np.arange(n, m_h + 1)
    w = np.full(len(j), k_hat.dt)
    w[0] = w[-1] = 0.5 * k_hat.dt
    return float(np.sum(w * k_hat.samples[m_h + n - j] * f_hat[j]))


def history_source(k_hat: KernelTrace, v_hat: Trajectory, tau: float, t: float) -> SpectralField:
    """Frozen-history source ``h(t) = -int_t^tau k_hat(tau+t-s) Lap v_hat(s) ds``.

    The pressure contribution of the shifted system is annihilated by the
    Leray projection and therefore omitted.
    """
    _check_dt(k_hat, v_hat.dt)
    m_h = len(v_hat) - 1
    if abs(tau - v_hat.duration) > 1e-9 * max(tau, v_hat.dt):
        raise ValueError("tau does not match the history duration")
    n = int(round(t / v_hat.dt))
    if abs(t - n * v_hat.dt) > 1e-9 * v_hat.dt or n < 0 or n > m_h:
        raise ValueError(f"t={t} outside [0, tau] or off the time grid")
    grid = v_hat.grid
    if n == m_h:
        return SpectralField(grid, np.zeros_like(v_hat.data[0]))
    j = np.arange(n, m_h + 1)
    w = np.full(len(j), k_hat.dt)
    w[0] = w[-1] = 0.5 * k_hat.dt
    acc = np.tensordot(w * k_hat.samples[m_h + n - j], v_hat.data[n: m_h + 1], axes=1)
    return SpectralField(grid, grid.k2 * acc)  # -Lap contributes +|xi|^2


def split_convolution(k_hat: KernelTrace, k_tau: KernelTrace,
                      v_hat: Trajectory, v_tau: Trajectory, t: float) -> SpectralField:
    """Three-term split of ``int_0^{tau+t} k(tau+t-s) Lap v(s) ds``.

    ``(k_hat, v_hat)`` cover ``[0, tau]`` and ``(k_tau, v_tau)`` the shifted
    window ``[0, delta]`` with ``delta <= tau``; the value equals the
    unsplit convolution of the concatenated traces because the trapezoid rule
    is additive at grid nodes.
    """
    _check_dt(k_hat, v_hat.dt)
    _check_dt(k_tau, v_tau.dt)
    if abs(k_hat.dt - k_tau.dt) > 1e-12 * k_hat.dt:
        raise ValueError("window dt mismatch")
    delta = v_tau.duration
    tau = v_hat.duration
    if delta > tau + 1e-9 * k_hat.dt:
        raise ValueError(f"shifted window delta={delta} exceeds history tau={tau}")
    dt = k_hat.dt
    n = int(round(t / dt))
    if abs(t - n * dt) > 1e-9 * dt or n < 0 or n > len(v_tau) - 1:
        raise ValueError(f"t={t} outside [0, delta] or off the time grid")
    grid = v_hat.grid
    part = np.zeros_like(v_hat.data[0])
    if n > 0:
        w = trapezoid_weights(n, dt)
        part = part + np.tensordot(w * k_tau.samples[n::-1], v_hat.data[: n + 1], axes=1)
        part = part + np.tensordot(w * k_hat.samples[n::-1], v_tau.data[: n + 1], axes=1)
    m_h = len(v_hat) - 1
    if n < m_h:
        j = np.arange(n, m_h + 1)
        w_tail = np.full(len(j), dt)
        w_tail[0] = w_tail[-1] = 0.5 * dt
        part = part + np.tensordot(w_tail * k_hat.samples[m_h + n - j],
                                   v_hat.data[n: m_h + 1], axes=1)
    return SpectralField(grid, -grid.k2 * part)


# ---------------------------------------------------------------------------
# quadrature-level inequality checks


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    ratio: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.ratio <= self.tolerance


def _trapz_norm(x: np.ndarray, dt: float) -> float:
    return float(np.sqrt(np.trapezoid(np.asarray(x, dtype=float)**2, dx=dt)))


def check_young_bound(k: KernelTrace, f: np.ndarray) -> BoundReport:
    """Convolution bound ``||k*f||_L2 <= tau^{1/2} ||k||_L2 ||f||_L2``.

    Discrete norms are trapezoid norms; the tolerance ``1 + 5 dt`` absorbs
    quadrature error.  A zero kernel reports ratio 0.
    """
    f = np.asarray(f, dtype=float)
    if len(f) != len(k.samples):
        raise ValueError("kernel and signal length mismatch")
    dt = k.dt
    tau = k.duration
    conv = convolve_scalar_all(k, f)
    lhs = _trapz_norm(conv, dt)
    rhs = np.sqrt(tau) * _trapz_norm(k.samples, dt) * _trapz_norm(f, dt)
    ratio = 0.0 if rhs == 0 else lhs / rhs
    return BoundReport("young_convolution", lhs, rhs, ratio, 1.0 + 5.0 * dt)


def check_time_primitive_bound(z: np.ndarray, dt: float) -> tuple[BoundReport, BoundReport]:
    """Bounds for ``z = 1 * dz/dt`` with ``z(0)=0``:
    ``||z||_inf <= tau^{1/2} ||dz||_L2`` and ``||z||_L2 <= tau ||dz||_L2``."""
    z = np.asarray(z, dtype=float)
    if z[0] != 0.0:
        raise ValueError("time-primitive bound requires z(0) = 0")
    tau = dt * (len(z) - 1)
    dz = np.diff(z) / dt
    dz_norm = float(np.sqrt(dt * np.sum(dz**2)))
    sup = float(np.max(np.abs(z)))
    l2 = _trapz_norm(z, dt)
    tol = 1.0 + 5.0 * dt
    rhs_sup = np.sqrt(tau) * dz_norm
    rhs_l2 = tau * dz_norm
    r1 = 0.0 if rhs_sup == 0 else sup / rhs_sup
    r2 = 0.0 if rhs_l2 == 0 else l2 / rhs_l2
    return (BoundReport("primitive_sup", sup, rhs_sup, r1, tol),
            BoundReport("primitive_l2", l2, rhs_l2, r2, tol))
