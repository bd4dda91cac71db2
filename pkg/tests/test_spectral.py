"""Spectral operator tests against hand-derived values and brute-force oracles."""

import numpy as np
import pytest

from kvmem.fields import shear_mode, taylor_green
from kvmem.spectral import (
    Grid,
    PressureField,
    SpectralField,
    advect,
    advection_product,
    apply_helmholtz,
    divergence,
    field_from_modes,
    gradient,
    helmholtz_inverse,
    l2_inner,
    l2_norm,
    laplacian,
    leray_project,
    measurement_functional,
    random_divergence_free,
    recover_pressure,
    sobolev_norm,
    zero_field,
)

RNG = np.random.default_rng(7)


def random_field(grid, rng=RNG):
    return SpectralField(grid, rng.standard_normal((grid.dim,) + grid.shape)
                         + 1j * rng.standard_normal((grid.dim,) + grid.shape))


# ---------------------------------------------------------------------------
# oracle: direct convolution sum for the advection product


def advection_by_convolution_sum(a, b):
    """(a . grad) b as an explicit double mode sum, then 2/3-rule masked.

    True (non-circular) convolution over the grid's integer wavevectors;
    contributions whose sum leaves the representable range are dropped, which
    is exact for comparisons restricted to the dealias mask.
    """
    g = a.grid
    n = g.n
    wavenumbers = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    out = np.zeros_like(a.coeffs)
    index = {w: i for i, w in enumerate(wavenumbers)}
    modes = [tuple(m) for m in np.stack(
        np.meshgrid(*([wavenumbers] * g.dim), indexing="ij")).reshape(g.dim, -1).T]
    for eta in modes:
        ia = tuple(index[w] for w in eta)
        if not np.any(a.coeffs[(slice(None),) + ia]):
            continue
        for zeta in modes:
            ib = tuple(index[w] for w in zeta)
            xi = tuple(e + z for e, z in zip(eta, zeta))
            if any(w not in index for w in xi):
                continue
            io = tuple(index[w] for w in xi)
            for i in range(g.dim):
                acc = 0.0j
                for j in range(g.dim):
                    acc += a.coeffs[(j,) + ia] * (1j * zeta[j]) * b.coeffs[(i,) + ib]
                out[(i,) + io] += acc
    return SpectralField(g, out * g.dealias)


# ---------------------------------------------------------------------------
# grid and constructors


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1, 8)
    with pytest.raises(ValueError):
        Grid(2, 7)
    with pytest.raises(ValueError):
        Grid(2, 2)


def test_dealias_mask_cutoff():
    g = Grid(2, 16)
    assert g.dealias[5, 0] and g.dealias[0, 5]
    assert not g.dealias[6, 0] and not g.dealias[-6, 2]


def test_fields_are_real_in_physical_space():
    g = Grid(2, 16)
    f = taylor_green(g) + shear_mode(g, wavenumber=3)
    coeffs = f.coeffs
    for xi in [(1, 1), (3, 0), (2, 5)]:
        idx = tuple(x % g.n for x in xi)
        neg = tuple((-x) % g.n for x in xi)
        assert np.allclose(coeffs[(slice(None),) + idx],
                           np.conj(coeffs[(slice(None),) + neg]))


# ---------------------------------------------------------------------------
# Leray projection


def test_projector_annihilates_gradients():
    g = Grid(2, 16)
    s = PressureField(g, RNG.standard_normal(g.shape) + 1j * RNG.standard_normal(g.shape))
    projected = leray_project(gradient(s))
    assert l2_norm(projected) <= 1e-12 * l2_norm(gradient(s))


def test_projector_fixes_divergence_free_fields():
    g = Grid(2, 16)
    f = random_divergence_free(g, RNG)
    assert l2_norm(leray_project(f) - f) <= 1e-12 * l2_norm(f)


def test_projector_hand_mode():
    # xi = (1, 0), coefficients (1, 1): I - xi xi^T/|xi|^2 maps it to (0, 1)
    g = Grid(2, 8)
    coeffs = np.zeros((2, 8, 8), dtype=complex)
    coeffs[:, 1, 0] = 1.0
    coeffs[:, -1, 0] = 1.0
    p = leray_project(SpectralField(g, coeffs))
    assert abs(p.coeffs[0, 1, 0]) < 1e-15
    assert abs(p.coeffs[1, 1, 0] - 1.0) < 1e-15


@pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
def test_projector_idempotent_and_divergence_free(dim, n):
    g = Grid(dim, n)
    for _ in range(20):
        f = random_field(g)
        p1 = leray_project(f)
        p2 = leray_project(p1)
        scale = max(l2_norm(f), 1e-30)
        assert l2_norm(p2 - p1) <= 1e-12 * scale
        assert np.max(np.abs(divergence(p1))) <= 1e-12 * scale
        assert np.all(p1.coeffs[(slice(None),) + (0,) * dim] == 0)


# ---------------------------------------------------------------------------
# Helmholtz operator


def test_helmholtz_inverse_halves_unit_mode():
    g = Grid(2, 8)
    f = shear_mode(g)  # single mode |xi|^2 = 1
    out = helmholtz_inverse(f, 1.0)
    assert np.allclose(out.coeffs, 0.5 * f.coeffs)


def test_helmholtz_inverse_identity_at_zero():
    g = Grid(2, 8)
    f = random_field(g)
    assert np.allclose(helmholtz_inverse(f, 0.0).coeffs, f.coeffs)


def test_helmholtz_round_trip():
    g = Grid(2, 16)
    f = random_field(g)
    back = helmholtz_inverse(apply_helmholtz(f, 0.8), 0.8)
    assert l2_norm(back - f) <= 1e-12 * l2_norm(f)
    with pytest.raises(ValueError):
        helmholtz_inverse(f, -0.1)


# ---------------------------------------------------------------------------
# differential operators


def test_laplacian_scales_by_mode():
    g = Grid(2, 8)
    f = taylor_green(g)  # modes with |xi|^2 = 2
    assert np.allclose(laplacian(f).coeffs, -2.0 * f.coeffs)


def test_gradient_of_constant_vanishes():
    g = Grid(2, 8)
    s = PressureField(g, np.zeros(g.shape, dtype=complex))
    s.coeffs[0, 0] = 3.0
    assert l2_norm(gradient(s)) == 0.0


# ---------------------------------------------------------------------------
# advection


def test_advect_zero_advecting_field():
    g = Grid(2, 16)
    assert l2_norm(advect(zero_field(g), taylor_green(g))) == 0.0


def test_advect_constant_target():
    g = Grid(2, 16)
    const = zero_field(g).copy()
    const.coeffs[0, 0, 0] = 0.0  # constants are killed by the mean-mode pin anyway
    b = SpectralField(g, const.coeffs)
    assert l2_norm(advect(taylor_green(g), b)) == 0.0


def test_advect_grid_mismatch():
    with pytest.raises(ValueError):
        advect(taylor_green(Grid(2, 8)), taylor_green(Grid(2, 16)))


def test_advection_product_matches_convolution_sum():
    g = Grid(2, 8)
    tg = taylor_green(g)
    oracle = advection_by_convolution_sum(tg, tg)
    fast = advection_product(tg, tg, dealias=True)
    assert np.max(np.abs(oracle.coeffs - fast.coeffs)) < 1e-13

    a = random_divergence_free(g, RNG, max_mode=2)
    b = random_divergence_free(g, RNG, max_mode=2)
    oracle = advection_by_convolution_sum(a, b)
    fast = advection_product(a, b, dealias=True)
    assert np.max(np.abs(oracle.coeffs - fast.coeffs)) < 1e-13


def test_taylor_green_advection_is_a_pure_gradient():
    # (u.grad)u for the cellular vortex is grad((cos2x + cos2y)/4): projected out
    g = Grid(2, 8)
    tg = taylor_green(g)
    assert l2_norm(advect(tg, tg)) <= 1e-13


@pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
def test_advection_energy_skew_symmetry(dim, n):
    g = Grid(dim, n)
    for _ in range(10):
        a = random_divergence_free(g, RNG)
        b = random_divergence_free(g, RNG)
        val = abs(l2_inner(advect(a, b), b))
        assert val <= 1e-10 * sobolev_norm(a, 1) * sobolev_norm(b, 1) ** 2


# ---------------------------------------------------------------------------
# norms and the probe functional


def test_inner_consistency_with_norm():
    g = Grid(2, 16)
    f = random_field(g)
    assert abs(l2_inner(f, f) - sobolev_norm(f, 0) ** 2) <= 1e-10 * sobolev_norm(f, 0) ** 2


def test_sine_mode_l2_norm():
    # int over the box of sin^2(x1) equals half the volume: (2 pi)^2 / 2
    g = Grid(2, 16)
    f = shear_mode(g)
    assert abs(l2_norm(f) ** 2 - (2 * np.pi) ** 2 / 2) < 1e-12


def test_sobolev_multiplier_ratio():
    g = Grid(2, 8)
    f = shear_mode(g)  # |xi|^2 = 1
    assert abs(sobolev_norm(f, 2) / sobolev_norm(f, 1) - np.sqrt(2.0)) < 1e-12


def test_parseval_against_physical_quadrature():
    g = Grid(2, 16)
    f = random_divergence_free(g, RNG)
    phys = f.to_physical()
    quad = np.sqrt(np.sum(phys**2) * g.cell_volume)
    assert abs(quad - sobolev_norm(f, 0)) <= 1e-10 * quad


def test_measurement_functional_values():
    g = Grid(2, 16)
    phi = taylor_green(g)
    assert abs(measurement_functional(phi, phi, 0.0) - l2_norm(phi) ** 2) < 1e-12
    other = shear_mode(g, wavenumber=3)
    assert abs(measurement_functional(phi, other, 1.0)) < 1e-13
    # single mode with |xi|^2 = 1: multiplier doubles the mu1 = 0 value
    sh = shear_mode(g)
    assert abs(measurement_functional(sh, sh, 1.0)
               - 2 * measurement_functional(sh, sh, 0.0)) < 1e-12


# ---------------------------------------------------------------------------
# pressure recovery


def test_pressure_zero_velocity():
    g = Grid(2, 8)
    assert np.all(recover_pressure(zero_field(g)).coeffs == 0)


def test_pressure_single_shear_mode():
    # a single real shear mode self-advects to zero
    g = Grid(2, 8)
    p = recover_pressure(shear_mode(g))
    assert np.max(np.abs(p.coeffs)) < 1e-15


def test_pressure_taylor_green_analytic():
    # hand derivation: (u.grad)u = (sin2x, sin2y)/2, so p = (cos2x + cos2y)/4
    g = Grid(2, 8)
    p = recover_pressure(taylor_green(g))
    expected = np.zeros(g.shape, dtype=complex)
    expected[2, 0] = expected[-2, 0] = 0.125
    expected[0, 2] = expected[0, -2] = 0.125
    assert np.max(np.abs(p.coeffs - expected)) < 1e-14


def test_pressure_satisfies_bruteforce_poisson():
    # -Lap p = div((u.grad)u) with the advection from the convolution oracle
    g = Grid(2, 8)
    u = random_divergence_free(g, RNG, max_mode=2)
    p = recover_pressure(u)
    g_oracle = advection_by_convolution_sum(u, u)
    w = 1j * np.sum(g.k * g_oracle.coeffs, axis=0)
    assert np.max(np.abs(g.k2 * p.coeffs - w)) < 1e-13
    assert p.coeffs[0, 0] == 0


def test_mode_constructor_round_trip():
    g = Grid(2, 8)
    f = field_from_modes(g, {(1, 0): (0.0, -0.5j)})  # = sin(x1) e2
    ref = shear_mode(g)
    assert l2_norm(f - ref) < 1e-13
