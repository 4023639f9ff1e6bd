import dataclasses
from pathlib import Path

import numpy as np
import pytest

from myobundle.config import (
    BoundaryData,
    Constant,
    DensityDataBounds,
    ModelParams,
    NumericalParams,
    PlateauProfile,
    SeparableDensity,
    SimulationConfig,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def plateau(flat_end=0.4, support_end=1.0, level=1.0):
    return SeparableDensity(PlateauProfile(level, flat_end, support_end))


def make_config(*, mode="force", eta=1.0, u0=0.4, u1=0.4, X0=1.0, s_l=0.1, delta=0.25, C0=1.0, D0=1.0,
                L_lower=0.4, L_upper=1.0, flat_end=None, force=0.0, length=None, n=32, dt=4e-3, t_end=1.0,
                snapshots=(), **numerics):
    """Benchmark-style config: plateau densities, constant speeds unless functions are passed."""
    flat = L_lower if flat_end is None else flat_end
    rho = plateau(flat, L_upper)
    tf = lambda v: v if callable(v) else Constant(float(v))  # noqa: E731
    boundary = BoundaryData(
        u0_plus=tf(u0), u1_minus=tf(u1), rho0_plus=rho, rho1_minus=rho, rho_init_plus=rho, rho_init_minus=rho,
        force=None if mode == "length" and force == 0.0 else tf(force),
        length=None if length is None else tf(length),
    )
    return SimulationConfig(
        ModelParams(C0=C0, D0=D0, eta=eta, s_l=s_l, X0=X0, delta=delta),
        DensityDataBounds(alpha0=1.0, beta0=1.0, L_lower=L_lower, L_upper=L_upper),
        boundary,
        NumericalParams(n_y=n, n_l=n, dt=dt, t_end=t_end, **numerics),
        mode=mode,
        snapshots=tuple(snapshots),
    )


def replace_boundary(cfg, **changes):
    return dataclasses.replace(cfg, boundary=dataclasses.replace(cfg.boundary, **changes))


def replace_params(cfg, **changes):
    return dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, **changes))


@pytest.fixture
def benchmark_config():
    return make_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        passed, text = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {text}")
