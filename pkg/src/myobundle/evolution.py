"""Time stepping of the coupled bundle: coefficients, velocities, length, transport.

Default coupling is a Heun step with lagged coefficients: the state at t
already carries its velocity profile, a predictor transports with those
speeds, the velocities are recomputed at the predicted state and the
corrector transports with the averaged speeds.  ``picard_step`` iterates the
corrector to a fixed point instead.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import SimulationConfig
from .density import DensityGrid, FrictionCoefficients, coefficients, default_eps_mass, lemma41_bounds
from .exceptions import (
    AssumptionViolated,
    BundleCollapsed,
    ConvergenceWarning,
    DegenerateDensity,
    ForceGateFailed,
    SignConditionLost,
    SingularSystem,
    Violation,
)
from .transport import advance
from .velocity import VelocityProfile, force_from_profile, solve_fixed, solve_free, vest_box

logger = logging.getLogger(__name__)

TERMINATIONS = ("completed", "bundle_collapsed", "degenerate_density", "sign_condition_lost", "force_gate_failed")

TRAJECTORY_COLUMNS = (
    "t", "X", "Xdot", "F", "min_D_plus", "min_D_minus", "min_C",
    "margin_plus_0", "margin_plus_1", "margin_minus_0", "margin_minus_1", "picard_iters",
)


@dataclass(frozen=True)
class Diagnostics:
    force_residual: float
    min_D_plus: float
    min_D_minus: float
    min_C: float
    sign_margins: tuple  # (V+(0), V+(1) - Xdot, -V-(0), Xdot - V-(1))
    picard_iters: int = 0

    @property
    def min_D(self) -> float:
        return min(self.min_D_plus, self.min_D_minus)


@dataclass(frozen=True, eq=False)
class BundleState:
    t: float
    X: float
    Xdot: float
    rho_plus: DensityGrid
    rho_minus: DensityGrid
    profile: VelocityProfile
    coeffs: FrictionCoefficients
    F: float
    diagnostics: Diagnostics

    def record(self) -> dict:
        d = self.diagnostics
        m = d.sign_margins
        return {
            "t": self.t, "X": self.X, "Xdot": self.Xdot, "F": self.F,
            "min_D_plus": d.min_D_plus, "min_D_minus": d.min_D_minus, "min_C": d.min_C,
            "margin_plus_0": m[0], "margin_plus_1": m[1], "margin_minus_0": m[2], "margin_minus_1": m[3],
            "picard_iters": d.picard_iters,
        }


@dataclass(frozen=True)
class Thresholds:
    eps_mass: float
    eps_ell: float
    sign_margin_min: float
    X_min: float

    @classmethod
    def from_config(cls, config: SimulationConfig) -> "Thresholds":
        num, p = config.numerics, config.params
        kappa_lo, _ = lemma41_bounds(config.bounds, p.C0, p.D0)
        return cls(
            eps_mass=default_eps_mass(config.bounds) if num.eps_mass is None else num.eps_mass,
            eps_ell=1e-6 * kappa_lo if num.eps_ell is None else num.eps_ell,
            sign_margin_min=config.sign_margin_min,
            X_min=config.X_min,
        )


# ---------------------------------------------------------------------------
# evaluation of the quasi-stationary part at one time level
# ---------------------------------------------------------------------------


def _check_vass1(config: SimulationConfig, t: float, Xdot: float, u0: float, u1: float) -> None:
    delta_eff = vest_box(Xdot, u0, u1, config.params.eta)[0]
    if delta_eff < config.params.delta * (1 - 1e-12):
        raise AssumptionViolated(Violation("V-ass1", t, delta_eff, config.params.delta))


def evaluate(config: SimulationConfig, t: float, rho_plus: DensityGrid, rho_minus: DensityGrid,
             X: Optional[float] = None, picard_iters: int = 0, thresholds: Optional[Thresholds] = None) -> BundleState:
    """Coefficients, velocities, Xdot and diagnostics for densities (and length) at time t.

    In length mode X is taken from the prescribed length and the argument is
    ignored.
    """
    p, bd = config.params, config.boundary
    th = thresholds or Thresholds.from_config(config)
    coeffs = coefficients(rho_plus, rho_minus, p.C0, p.D0, eps_mass=th.eps_mass)
    mins = (coeffs.D_plus.min(), coeffs.D_minus.min(), coeffs.C.min())
    if min(mins) < th.eps_ell:
        i = int(np.argmin(np.minimum(np.minimum(coeffs.D_plus, coeffs.D_minus), coeffs.C)))
        raise DegenerateDensity(i, float(rho_plus.y_nodes[i]), f"friction coefficient {min(mins):.3g} < {th.eps_ell:.3g}")
    u0 = float(bd.u0_plus(t))
    u1 = float(bd.u1_minus(t))
    try:
        if config.mode == "force":
            F = float(bd.force(t))
            gamma = config.numerics.gamma_est
            if gamma is not None and abs(F) > p.delta / (4 * gamma):
                raise ForceGateFailed(t, F, p.delta / (4 * gamma))
            prof = solve_free(coeffs, X, F, u0, p.eta)
            Xdot = float(prof.V_minus[-1] + u1)
            residual = float(np.max(np.abs(prof.total_force - F)))
        else:
            X = float(bd.length(t))
            Xdot = float(bd.length.derivative(t))
            _check_vass1(config, t, Xdot, u0, u1)
            prof = solve_fixed(coeffs, X, Xdot, u0, u1, p.eta)
            F = force_from_profile(prof, coeffs, X)
            residual = prof.force_variation()
    except SingularSystem as exc:
        i = int(np.argmin(np.minimum(coeffs.D_plus, coeffs.D_minus)))
        raise DegenerateDensity(i, float(rho_plus.y_nodes[i]), f"singular velocity system: {exc}") from exc

    if not (np.all(np.isfinite(prof.V_plus)) and np.all(np.isfinite(prof.V_minus)) and math.isfinite(Xdot)):
        raise DegenerateDensity(0, 0.0, "non-finite velocities")
    margins = (
        float(prof.V_plus[0]),
        float(prof.V_plus[-1] - Xdot),
        float(-prof.V_minus[0]),
        float(Xdot - prof.V_minus[-1]),
    )
    names = ("V+(0) > 0", "V+(1) > Xdot", "V-(0) < 0", "V-(1) < Xdot")
    k = int(np.argmin(margins))
    if margins[k] < th.sign_margin_min:
        raise SignConditionLost(names[k], margins[k], t)
    diag = Diagnostics(residual, float(mins[0]), float(mins[1]), float(mins[2]), margins, picard_iters)
    return BundleState(float(t), float(X), Xdot, rho_plus, rho_minus, prof, coeffs, F, diag)


def initial_state(config: SimulationConfig) -> BundleState:
    num, b, bd = config.numerics, config.bounds, config.boundary
    rp = DensityGrid.from_function(bd.rho_init_plus, num.n_y, num.n_l, b.L_upper, "plus")
    rm = DensityGrid.from_function(bd.rho_init_minus, num.n_y, num.n_l, b.L_upper, "minus")
    return evaluate(config, 0.0, rp, rm, config.params.X0)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------


def _transport(config, state: BundleState, dt: float, end: tuple):
    bd, s_l = config.boundary, config.params.s_l
    rp = advance(state.rho_plus, state.profile, state.X, state.Xdot, state.t, dt, bd, s_l, end=end)
    rm = advance(state.rho_minus, state.profile, state.X, state.Xdot, state.t, dt, bd, s_l, end=end)
    return rp, rm


def _new_length(config, state: BundleState, dt: float, Xdot_end: float, th: Thresholds) -> float:
    if config.mode == "length":
        return float(config.boundary.length(state.t + dt))
    X = state.X + 0.5 * dt * (state.Xdot + Xdot_end)
    if not X > th.X_min:
        raise BundleCollapsed(state.t + dt, X)
    return X


def predictor(config: SimulationConfig, state: BundleState, dt: float, th: Optional[Thresholds] = None):
    """Transport with the speeds of ``state`` frozen (lagged coefficients)."""
    th = th or Thresholds.from_config(config)
    X1 = _new_length(config, state, dt, state.Xdot, th)
    rp, rm = _transport(config, state, dt, (state.profile, X1, state.Xdot))
    return rp, rm, X1


def corrector(config: SimulationConfig, state: BundleState, guess: BundleState, dt: float,
              th: Optional[Thresholds] = None):
    """Transport with speeds averaged between ``state`` and the evaluated guess at t + dt."""
    th = th or Thresholds.from_config(config)
    X1 = _new_length(config, state, dt, guess.Xdot, th)
    rp, rm = _transport(config, state, dt, (guess.profile, X1, guess.Xdot))
    return rp, rm, X1


def _heun(config: SimulationConfig, state: BundleState, dt: float, th: Thresholds) -> BundleState:
    t1 = state.t + dt
    rp, rm, X1 = predictor(config, state, dt, th)
    stage2 = evaluate(config, t1, rp, rm, X1, thresholds=th)
    rp, rm, X1 = corrector(config, state, stage2, dt, th)
    return evaluate(config, t1, rp, rm, X1, thresholds=th)


def step_free(state: BundleState, dt: float, config: SimulationConfig,
              thresholds: Optional[Thresholds] = None) -> BundleState:
    """One Heun step in prescribed-force mode."""
    if config.mode != "force":
        raise ValueError("step_free needs a force-mode config")
    return _heun(config, state, dt, thresholds or Thresholds.from_config(config))


def step_fixed(state: BundleState, dt: float, config: SimulationConfig,
               thresholds: Optional[Thresholds] = None) -> tuple[BundleState, float]:
    """One Heun step in prescribed-length mode; returns the new state and its end force."""
    if config.mode != "length":
        raise ValueError("step_fixed needs a length-mode config")
    new = _heun(config, state, dt, thresholds or Thresholds.from_config(config))
    return new, new.F


def iterate_distance(a: tuple, b: tuple) -> float:
    """sqrt(|d rho+|^2 + |d rho-|^2) + |dX| with discrete L2 norms over (y, l)."""
    dp = a[0].with_values(a[0].values - b[0].values).l2_norm()
    dm = a[1].with_values(a[1].values - b[1].values).l2_norm()
    return math.hypot(dp, dm) + abs(a[2] - b[2])


def picard_step(state: BundleState, dt: float, config: SimulationConfig,
                thresholds: Optional[Thresholds] = None, history: Optional[list] = None) -> BundleState:
    """Fixed-point iteration on (rho+, rho-, X) at the new time level.

    Iterate 1 is the predictor; iterate k applies the corrector with speeds
    evaluated at iterate k-1, so iterate 2 is the Heun step.  Stops when two
    successive iterates differ by less than picard_tol; if picard_max is
    reached first the Heun iterate is returned with a ConvergenceWarning.
    With picard_max = 1 the predictor is returned.  Successive distances are
    appended to ``history`` when given.
    """
    th = thresholds or Thresholds.from_config(config)
    num = config.numerics
    t1 = state.t + dt
    x = predictor(config, state, dt, th)
    if num.picard_max == 1:
        return evaluate(config, t1, *x, picard_iters=1, thresholds=th)
    heun = None
    for k in range(2, num.picard_max + 1):
        guess = evaluate(config, t1, *x, thresholds=th)
        x_new = corrector(config, state, guess, dt, th)
        if heun is None:
            heun = x_new
        diff = iterate_distance(x_new, x)
        if history is not None:
            history.append(diff)
        x = x_new
        if diff < num.picard_tol:
            return evaluate(config, t1, *x, picard_iters=k - 1, thresholds=th)
    warnings.warn(f"fixed-point iteration did not reach {num.picard_tol:g} in {num.picard_max} iterates "
                  f"at t={t1:.6g}; using the Heun step", ConvergenceWarning, stacklevel=2)
    return evaluate(config, t1, *heun, picard_iters=num.picard_max, thresholds=th)


def step(state: BundleState, dt: float, config: SimulationConfig, thresholds: Optional[Thresholds] = None):
    th = thresholds or Thresholds.from_config(config)
    if config.numerics.picard:
        return picard_step(state, dt, config, th)
    return _heun(config, state, dt, th)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: float
    X: float
    rho_plus: DensityGrid
    rho_minus: DensityGrid
    profile: VelocityProfile


@dataclass(eq=False)
class RunOutcome:
    trajectory: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    termination: str = "completed"
    detail: str = ""
    final_state: Optional[BundleState] = None
    error: Optional[BaseException] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.trajectory], dtype=float)

    def write_trajectory(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for row in self.trajectory:
                fh.write(",".join(
                    str(int(row[c])) if c == "picard_iters" else f"{row[c]:.17g}" for c in TRAJECTORY_COLUMNS
                ) + "\n")

    def write_snapshots(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for k, snap in enumerate(self.snapshots):
            stem = f"snap{k:03d}_t{snap.t:.6g}"
            for name, obj in (("rho_plus", snap.rho_plus), ("rho_minus", snap.rho_minus), ("velocity", snap.profile)):
                path = directory / f"{stem}_{name}.csv"
                obj.to_csv(path)
                written.append(path)
        return written


_TERMINATION_OF = (
    (BundleCollapsed, "bundle_collapsed"),
    (DegenerateDensity, "degenerate_density"),
    (SignConditionLost, "sign_condition_lost"),
    (AssumptionViolated, "sign_condition_lost"),
    (ForceGateFailed, "force_gate_failed"),
)


def _classify(exc: BaseException) -> str:
    for cls, name in _TERMINATION_OF:
        if isinstance(exc, cls):
            return name
    raise exc


def run(config: SimulationConfig) -> RunOutcome:
    """Step from 0 to t_end, stopping early on loss of well-posedness.

    Termination causes are reported in the outcome, never raised.
    """
    out = RunOutcome()
    th = Thresholds.from_config(config)
    ts = config.numerics.time_grid()
    pending = sorted(config.snapshots)

    def take_snapshots(state: BundleState, dt_now: float) -> None:
        while pending and state.t >= pending[0] - 0.5 * dt_now * (1 + 1e-9):
            out.snapshots.append(Snapshot(state.t, state.X, state.rho_plus, state.rho_minus, state.profile))
            pending.pop(0)

    try:
        state = initial_state(config)
    except Exception as exc:  # noqa: BLE001 - classified below
        out.termination = _classify(exc)
        out.detail = str(exc)
        out.error = exc
        return out
    out.trajectory.append(state.record())
    take_snapshots(state, config.numerics.dt)
    for k in range(1, len(ts)):
        dt = float(ts[k] - ts[k - 1])
        try:
            state = step(state, dt, config, th)
        except Exception as exc:  # noqa: BLE001 - classified below
            out.termination = _classify(exc)
            out.detail = str(exc)
            out.error = exc
            break
        out.trajectory.append(state.record())
        take_snapshots(state, dt)
    out.final_state = state
    if out.termination != "completed":
        logger.info("run stopped at t=%.6g: %s (%s)", state.t, out.termination, out.detail)
    return out
