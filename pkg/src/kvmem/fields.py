"""Named divergence-free field presets for initial data, probes, and drifts."""

from __future__ import annotations

import numpy as np

from .spectral import Grid, SpectralField, leray_project, random_divergence_free, zero_field

__all__ = ["taylor_green", "shear_mode", "random_solenoidal", "build_preset", "PRESETS"]


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """Cellular vortex array: 2D ``(sin x cos y, -cos x sin y)``; in 3D the
    same pattern modulated by ``cos z`` in the first two components."""
    x = grid.x
    if grid.dim == 2:
        comps = [np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]
    else:
        comps = [
            np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
            -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
            np.zeros(grid.shape),
        ]
    from .spectral import field_from_physical

    f = field_from_physical(grid, [amplitude * c for c in comps])
    f.divergence_free = True
    return f


def shear_mode(grid: Grid, amplitude: float = 1.0, wavenumber: int = 1,
               axis: int = 0, component: int = 1) -> SpectralField:
    """Single-mode shear ``amplitude * sin(wavenumber * x_axis)`` in one
    transverse component; exactly divergence-free."""
    if component == axis:
        raise ValueError("shear component must differ from the variation axis")
    from .spectral import field_from_physical

    comps = [np.zeros(grid.shape) for _ in range(grid.dim)]
    comps[component] = amplitude * np.sin(wavenumber * grid.x[axis])
    f = field_from_physical(grid, comps)
    f.divergence_free = True
    return f


def random_solenoidal(grid: Grid, amplitude: float = 1.0, seed: int = 0,
                      max_mode: int | None = None) -> SpectralField:
    rng = np.random.default_rng(seed)
    return random_divergence_free(grid, rng, amplitude=amplitude, max_mode=max_mode)


PRESETS = {
    "taylor_green": taylor_green,
    "shear_mode": shear_mode,
    "random_solenoidal": random_solenoidal,
    "zero": lambda grid: zero_field(grid),
}


def build_preset(grid: Grid, name: str, **kwargs) -> SpectralField:
    if name not in PRESETS:
        raise ValueError(f"unknown field preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name](grid, **kwargs)
