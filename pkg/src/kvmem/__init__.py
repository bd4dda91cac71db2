"""Viscoelastic flow with memory: forward solver and kernel reconstruction.

A pseudo-spectral solver for the regularized incompressible flow equations
with a Volterra memory term on a periodic box, plus the fixed-point machinery
that reconstructs the unknown memory kernel from an integral velocity
measurement, locally in time and globally by window continuation.
"""

from .continuation import WindowState, glue, march_global, shift_problem
from .fields import build_preset, random_solenoidal, shear_mode, taylor_green
from .forward import (
    KV,
    OSEEN,
    MeasurementTrace,
    ModelParams,
    TwinDataset,
    run_direct,
    step_direct,
    synthesize_twin,
)
from .inverse import (
    AssumptionReport,
    FixedPointConfig,
    FixedPointResult,
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
from .memory import (
    KernelSpec,
    KernelTrace,
    check_time_primitive_bound,
    check_young_bound,
    convolve_field,
    convolve_scalar,
    history_source,
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
    laplacian,
    leray_project,
    measurement_functional,
    recover_pressure,
    sobolev_norm,
)

__version__ = "0.1.0"
