"""Shared builders and session-scoped twin datasets for the test suite."""

import numpy as np
import pytest

from kvmem import (
    FixedPointConfig,
    Grid,
    KernelSpec,
    ModelParams,
    ProblemSetup,
    synthesize_twin,
)
from kvmem.fields import taylor_green
from kvmem.forward import KV, OSEEN


def make_setup(mode=OSEEN, n=16, dim=2, amp=0.2, drift_amp=0.5,
               mu0=1.5, mu1=1.0):
    grid = Grid(dim, n)
    u0 = taylor_green(grid, amplitude=amp)
    phi = taylor_green(grid)
    u_inf = taylor_green(grid, amplitude=drift_amp) if mode == OSEEN else None
    params = ModelParams(mu0, mu1, mode=mode, u_inf=u_inf)
    return ProblemSetup(params, u0, phi)


def make_twin(mode=OSEEN, T=0.25, dt=1e-3, gamma=0.5, delta=0.5, **setup_kwargs):
    setup = make_setup(mode=mode, **setup_kwargs)
    twin = synthesize_twin(setup, KernelSpec.exponential(gamma, delta), T, dt)
    setup.measurement = twin.measurement
    return setup, twin


@pytest.fixture(scope="session")
def oseen_twin():
    """Reference Oseen twin: 2D N=16, dt=1e-3, T=0.25, k = 0.5 exp(-0.5 t)."""
    return make_twin(mode=OSEEN, T=0.25, dt=1e-3)


@pytest.fixture(scope="session")
def kv_twin():
    """Full-nonlinearity twin sized so the window heuristic holds at tau=0.25."""
    return make_twin(mode=KV, T=0.25, dt=1e-3, amp=0.1)


@pytest.fixture(scope="session")
def oseen_result(oseen_twin):
    from kvmem import fixed_point_solve

    setup, twin = oseen_twin
    cfg = FixedPointConfig(tau=0.25, dt=1e-3, tol=1e-10, max_iter=50)
    return fixed_point_solve(setup, cfg)


def relative_kernel_error(k, k_true):
    from kvmem import KernelTrace

    n = min(len(k.samples), len(k_true.samples))
    num = KernelTrace(k.dt, k.samples[:n] - k_true.samples[:n]).l2_norm()
    den = KernelTrace(k.dt, k_true.samples[:n]).l2_norm()
    return num / den


def rng_for(name: str) -> np.random.Generator:
    return np.random.default_rng(abs(hash(name)) % 2**32)
