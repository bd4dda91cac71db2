"""Pseudo-spectral fields on a periodic box.

Vector fields live on ``[0, 2*pi)^dim`` (``dim`` in {2, 3}) and are stored as
Fourier coefficients ``c`` of the expansion ``f(x) = sum_xi c(xi) exp(i xi.x)``
over integer wavevectors ``xi``.  With this normalization the discrete Parseval
identity reads ``int |f|^2 dx = (2*pi)^dim * sum |c|^2``, which is what every
norm and inner product below uses.

All operators are diagonal in Fourier space except advection, which is
evaluated pseudo-spectrally (physical-space products, 2/3-rule dealiasing).
Fields are treated as immutable; every operation returns a new field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "PressureField",
    "Trajectory",
    "zero_field",
    "field_from_physical",
    "field_from_modes",
    "random_divergence_free",
    "leray_project",
    "apply_helmholtz",
    "helmholtz_inverse",
    "laplacian",
    "gradient",
    "divergence",
    "advection_product",
    "advect",
    "l2_inner",
    "l2_norm",
    "sobolev_norm",
    "measurement_functional",
    "recover_pressure",
]


class Grid:
    """Uniform periodic grid with precomputed wavevectors and dealias mask.

    Parameters
    ----------
    dim : 2 or 3.
    n : even number of modes per axis, at least 4.

    The box length is fixed at ``2*pi`` per axis, so wavevectors are integers.
    The 2/3-rule mask zeroes every mode with any ``|xi_i| > n/3``.
    """

    def __init__(self, dim: int, n: int):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if n < 4 or n % 2 != 0:
            raise ValueError(f"modes per axis must be even and >= 4, got {n}")
        self.dim = dim
        self.n = n
        self.shape = (n,) * dim
        k1 = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers
        axes = np.meshgrid(*([k1] * dim), indexing="ij")
        self.k = np.stack(axes)  # (dim, n, ..., n)
        self.k2 = np.sum(self.k**2, axis=0)
        self.k2_safe = np.where(self.k2 == 0, 1.0, self.k2)
        cutoff = n / 3.0
        self.dealias = np.all(np.abs(self.k) <= cutoff, axis=0)
        # physical-space collocation points, used by the pseudo-spectral product
        x1 = 2.0 * np.pi * np.arange(n) / n
        self.x = np.meshgrid(*([x1] * dim), indexing="ij")
        self.cell_volume = (2.0 * np.pi / n) ** dim

    def __eq__(self, other):
        return isinstance(other, Grid) and self.dim == other.dim and self.n == other.n

    def __hash__(self):
        return hash((self.dim, self.n))

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass
class SpectralField:
    """Vector field as Fourier coefficients, shape ``(dim, n, ..., n)``."""

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = field(default=False, compare=False)

    def __post_init__(self):
        expected = (self.grid.dim,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.divergence_free)

    def to_physical(self) -> np.ndarray:
        """Real-valued samples on the collocation grid, shape (dim, n, ..., n)."""
        n_total = self.grid.n**self.grid.dim
        axes = tuple(range(1, self.grid.dim + 1))
        return np.real(np.fft.ifftn(self.coeffs * n_total, axes=axes))

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs, self.divergence_free)


@dataclass
class PressureField:
    """Scalar field with zero mean, stored as Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError("pressure coefficient shape mismatch")

    def to_physical(self) -> np.ndarray:
        n_total = self.grid.n**self.grid.dim
        return np.real(np.fft.ifftn(self.coeffs * n_total))


class Trajectory:
    """Uniformly sampled sequence of spectral fields at ``t_n = n*dt``.

    Stored as one array of shape ``(n_times, dim, n, ..., n)`` so whole-history
    operations (convolutions, norms) stay vectorized.
    """

    def __init__(self, grid: Grid, dt: float, data: np.ndarray):
        if dt <= 0:
            raise ValueError("dt must be positive")
        expected_tail = (grid.dim,) + grid.shape
        if data.ndim != grid.dim + 2 or data.shape[1:] != expected_tail:
            raise ValueError(f"trajectory data shape {data.shape} incompatible with {grid}")
        self.grid = grid
        self.dt = float(dt)
        self.data = data

    @classmethod
    def from_fields(cls, fields, dt: float) -> "Trajectory":
        grid = fields[0].grid
        return cls(grid, dt, np.stack([f.coeffs for f in fields]))

    @classmethod
    def constant(cls, f: SpectralField, dt: float, n_steps: int) -> "Trajectory":
        data = np.broadcast_to(f.coeffs, (n_steps + 1,) + f.coeffs.shape).copy()
        return cls(f.grid, dt, data)

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_steps(self) -> int:
        return len(self) - 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    def field(self, n: int) -> SpectralField:
        return SpectralField(self.grid, self.data[n], divergence_free=True)

    def slice(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(self.grid, self.dt, self.data[start:stop].copy())


# ---------------------------------------------------------------------------
# constructors


def zero_field(grid: Grid) -> SpectralField:
    return SpectralField(grid, np.zeros((grid.dim,) + grid.shape, dtype=complex),
                         divergence_free=True)


def field_from_physical(grid: Grid, components) -> SpectralField:
    """Build a field from real physical-space component arrays."""
    phys = np.stack([np.asarray(c, dtype=float) for c in components])
    axes = tuple(range(1, grid.dim + 1))
    coeffs = np.fft.fftn(phys, axes=axes) / grid.n**grid.dim
    return SpectralField(grid, coeffs)


def field_from_modes(grid: Grid, modes) -> SpectralField:
    """Build a real field from ``{(xi tuple): (amplitude per component)}``.

    Hermitian symmetry is enforced by also setting the conjugate at ``-xi``,
    so assign each mode pair only once.
    """
    coeffs = np.zeros((grid.dim,) + grid.shape, dtype=complex)
    for xi, amp in modes.items():
        amp = np.asarray(amp, dtype=complex)
        idx = tuple(int(x) % grid.n for x in xi)
        neg = tuple((-int(x)) % grid.n for x in xi)
        for c in range(grid.dim):
            coeffs[(c,) + idx] += amp[c]
            if neg != idx:
                coeffs[(c,) + neg] += np.conj(amp[c])
    return SpectralField(grid, coeffs)


def random_divergence_free(grid: Grid, rng, amplitude: float = 1.0,
                           max_mode: int | None = None) -> SpectralField:
    """Seeded random real field, band-limited and Leray-projected."""
    phys = rng.standard_normal((grid.dim,) + grid.shape)
    f = field_from_physical(grid, phys)
    cutoff = max_mode if max_mode is not None else grid.n / 3.0
    mask = np.all(np.abs(grid.k) <= cutoff, axis=0)
    f = SpectralField(grid, f.coeffs * mask)
    f = leray_project(f)
    norm = l2_norm(f)
    if norm > 0:
        f = f * (amplitude / norm)
    return f


# ---------------------------------------------------------------------------
# diagonal operators


def leray_project(f: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: ``c -> c - xi (xi.c)/|xi|^2``.

    The mean mode is pinned to zero, which together with periodicity plays the
    role of a Poincare inequality for the velocity.
    """
    g = f.grid
    kdotc = np.sum(g.k * f.coeffs, axis=0)
    out = f.coeffs - g.k * (kdotc / g.k2_safe)
    out[(slice(None),) + (0,) * g.dim] = 0.0
    return SpectralField(g, out, divergence_free=True)


def apply_helmholtz(f: SpectralField, mu1: float) -> SpectralField:
    """Apply ``I - mu1*Laplacian``: multiplier ``1 + mu1|xi|^2``."""
    return SpectralField(f.grid, f.coeffs * (1.0 + mu1 * f.grid.k2), f.divergence_free)


def helmholtz_inverse(f: SpectralField, mu1: float) -> SpectralField:
    """Invert ``I - mu1*Laplacian``: multiplier ``1/(1 + mu1|xi|^2)``."""
    if mu1 < 0:
        raise ValueError("mu1 must be nonnegative")
    return SpectralField(f.grid, f.coeffs / (1.0 + mu1 * f.grid.k2), f.divergence_free)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs, f.divergence_free)


def gradient(s: PressureField) -> SpectralField:
    """Gradient of a scalar field: ``i xi s(xi)`` per component."""
    return SpectralField(s.grid, 1j * s.grid.k * s.coeffs)


def divergence(f: SpectralField) -> np.ndarray:
    """Fourier coefficients of ``div f`` (diagnostic)."""
    return 1j * np.sum(f.grid.k * f.coeffs, axis=0)


# ---------------------------------------------------------------------------
# advection


def advection_product(a: SpectralField, b: SpectralField,
                      dealias: bool = True) -> SpectralField:
    """Pseudo-spectral ``(a . grad) b`` without projection.

    Transforms to physical space, forms ``a_j d_j b_i`` pointwise, transforms
    back, and applies the 2/3-rule mask.
    """
    _check_same_grid(a, b)
    g = a.grid
    axes = tuple(range(1, g.dim + 1))
    n_total = g.n**g.dim
    a_phys = np.real(np.fft.ifftn(a.coeffs * n_total, axes=axes))
    out_phys = np.zeros_like(a_phys)
    for j in range(g.dim):
        db_j = np.real(np.fft.ifftn(1j * g.k[j] * b.coeffs * n_total, axes=axes))
        out_phys += a_phys[j] * db_j
    coeffs = np.fft.fftn(out_phys, axes=axes) / n_total
    if dealias:
        coeffs = coeffs * g.dealias
    return SpectralField(g, coeffs)


def advect(a: SpectralField, b: SpectralField) -> SpectralField:
    """Dealiased, Leray-projected ``(a . grad) b``."""
    return leray_project(advection_product(a, b, dealias=True))


# ---------------------------------------------------------------------------
# inner products and norms


def l2_inner(a: SpectralField, b: SpectralField) -> float:
    _check_same_grid(a, b)
    vol = (2.0 * np.pi) ** a.grid.dim
    return vol * float(np.sum(np.real(a.coeffs * np.conj(b.coeffs))))

def l2_norm(f: SpectralField) -> float:
    return sobolev_norm(f, 0.0)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``H^s`` norm via the Fourier multiplier ``(1 + |xi|^2)^s``."""
    vol = (2.0 * np.pi) ** f.grid.dim
    w = (1.0 + f.grid.k2) ** s
    return float(np.sqrt(vol * np.sum(w * np.abs(f.coeffs) ** 2)))


def measurement_functional(phi: SpectralField, u: SpectralField, mu1: float) -> float:
    """``int (I - mu1*Laplacian) phi . u dx`` evaluated spectrally."""
    _check_same_grid(phi, u)
    vol = (2.0 * np.pi) ** phi.grid.dim
    w = 1.0 + mu1 * phi.grid.k2
    return vol * float(np.sum(w * np.real(phi.coeffs * np.conj(u.coeffs))))


# ---------------------------------------------------------------------------
# pressure


def recover_pressure(u: SpectralField, advecting: SpectralField | None = None) -> PressureField:
    """Pressure consistent with the momentum balance: ``-Lap p = div g``.

    ``g`` is the unprojected advection product ``(a . grad) u`` with ``a = u``
    for the full nonlinearity, or the supplied advecting field (Oseen).
    """
    a = advecting if advecting is not None else u
    g = advection_product(a, u, dealias=True)
    grid = u.grid
    div_g = 1j * np.sum(grid.k * g.coeffs, axis=0)
    p = div_g / grid.k2_safe
    p[(0,) * grid.dim] = 0.0
    return PressureField(grid, p)
