"""Model parameters, boundary/initial data and assumption checks.

Functions of time are small frozen dataclasses exposing ``__call__``,
``derivative`` and ``integral`` so that the explicit (force free) solution can
be evaluated without quadrature error.  Density data are separable: a profile
in the filament length ``l`` times an optional factor in ``t`` (boundary data)
or ``y`` (initial data).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np

from .exceptions import AssumptionViolated, Violation

logger = logging.getLogger(__name__)

Mode = Literal["force", "length"]


# ---------------------------------------------------------------------------
# functions of time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return self.value + 0.0 * np.asarray(t, dtype=float)

    def derivative(self, t):
        return 0.0 * np.asarray(t, dtype=float)

    def integral(self, a, b):
        return self.value * (np.asarray(b, dtype=float) - a)


@dataclass(frozen=True)
class Ramp:
    """``start + slope * t``."""

    start: float
    slope: float

    def __call__(self, t):
        return self.start + self.slope * np.asarray(t, dtype=float)

    def derivative(self, t):
        return self.slope + 0.0 * np.asarray(t, dtype=float)

    def integral(self, a, b):
        b = np.asarray(b, dtype=float)
        return self.start * (b - a) + 0.5 * self.slope * (b * b - a * a)


@dataclass(frozen=True)
class Sine:
    """``mean + amplitude * sin(omega * t + phase)``."""

    mean: float
    amplitude: float
    omega: float
    phase: float = 0.0

    def __call__(self, t):
        return self.mean + self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)

    def derivative(self, t):
        return self.amplitude * self.omega * np.cos(self.omega * np.asarray(t, dtype=float) + self.phase)

    def integral(self, a, b):
        b = np.asarray(b, dtype=float)
        out = self.mean * (b - a)
        if self.omega != 0.0:
            out = out - self.amplitude / self.omega * (
                np.cos(self.omega * b + self.phase) - np.cos(self.omega * a + self.phase)
            )
        else:
            out = out + self.amplitude * math.sin(self.phase) * (b - a)
        return out


@dataclass(frozen=True)
class Table:
    """Tabulated samples with linear interpolation, held constant outside."""

    t: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("Table needs matching 1-d t/values with at least two samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("Table times must be strictly increasing")
        object.__setattr__(self, "t", tuple(t))
        object.__setattr__(self, "values", tuple(v))

    def __call__(self, t):
        return np.interp(t, self.t, self.values)

    def derivative(self, t):
        knots = np.asarray(self.t)
        slopes = np.diff(self.values) / np.diff(knots)
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(slopes) - 1)
        t = np.asarray(t, dtype=float)
        inside = (t >= knots[0]) & (t <= knots[-1])
        return np.where(inside, slopes[idx], 0.0)

    def _antiderivative(self, x):
        knots = np.asarray(self.t)
        vals = np.asarray(self.values)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots))])
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, knots[0], knots[-1])
        idx = np.clip(np.searchsorted(knots, xc, side="right") - 1, 0, len(knots) - 2)
        dx = xc - knots[idx]
        v0 = vals[idx]
        slope = (vals[idx + 1] - v0) / (knots[idx + 1] - knots[idx])
        inner = cum[idx] + v0 * dx + 0.5 * slope * dx * dx
        below = np.minimum(x - knots[0], 0.0) * vals[0]
        above = np.maximum(x - knots[-1], 0.0) * vals[-1]
        return inner + below + above

    def integral(self, a, b):
        return self._antiderivative(b) - self._antiderivative(a)


def time_function(spec) -> Any:
    """Build a function of time from a JSON value (number or tagged dict)."""
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError(f"cannot interpret time function {spec!r}")
    kind = spec["type"]
    if kind == "constant":
        return Constant(float(spec["value"]))
    if kind == "ramp":
        return Ramp(float(spec["start"]), float(spec["slope"]))
    if kind == "sine":
        return Sine(float(spec["mean"]), float(spec["amplitude"]), float(spec["omega"]),
                    float(spec.get("phase", 0.0)))
    if kind == "table":
        return Table(tuple(spec["t"]), tuple(spec["values"]))
    raise ValueError(f"unknown time function type {kind!r}")


def time_function_to_json(f) -> Any:
    if isinstance(f, Constant):
        return f.value
    if isinstance(f, Ramp):
        return {"type": "ramp", "start": f.start, "slope": f.slope}
    if isinstance(f, Sine):
        return {"type": "sine", "mean": f.mean, "amplitude": f.amplitude, "omega": f.omega, "phase": f.phase}
    if isinstance(f, Table):
        return {"type": "table", "t": list(f.t), "values": list(f.values)}
    raise TypeError(f"{type(f).__name__} is not JSON serializable")


# ---------------------------------------------------------------------------
# density data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlateauProfile:
    """``level`` on [0, flat_end], tapering to zero at ``support_end``.

    The taper is linear or a half cosine; the profile vanishes for
    l >= support_end.
    """

    level: float
    flat_end: float
    support_end: float
    taper: Literal["cosine", "linear"] = "cosine"

    def __post_init__(self):
        if not 0.0 <= self.flat_end < self.support_end:
            raise ValueError("need 0 <= flat_end < support_end")
        if self.taper not in ("cosine", "linear"):
            raise ValueError(f"unknown taper {self.taper!r}")

    def __call__(self, l):
        l = np.asarray(l, dtype=float)
        s = np.clip((l - self.flat_end) / (self.support_end - self.flat_end), 0.0, 1.0)
        if self.taper == "cosine":
            shape = 0.5 * (1.0 + np.cos(np.pi * s))
        else:
            shape = 1.0 - s
        out = self.level * shape
        return np.where(l >= self.support_end, 0.0, out)

    def lipschitz(self) -> float:
        width = self.support_end - self.flat_end
        if self.taper == "cosine":
            return abs(self.level) * np.pi / (2.0 * width)
        return abs(self.level) / width


@dataclass(frozen=True)
class SeparableDensity:
    """``factor(s) * profile(l)`` where ``s`` is t (boundary data) or y (initial data)."""

    profile: PlateauProfile
    factor: Any = Constant(1.0)

    def __call__(self, s, l):
        return np.asarray(self.factor(s), dtype=float) * self.profile(l)


def density_function(spec) -> SeparableDensity:
    prof = spec["profile"]
    profile = PlateauProfile(float(prof["level"]), float(prof["flat_end"]), float(prof["support_end"]),
                             prof.get("taper", "cosine"))
    factor = time_function(spec["factor"]) if "factor" in spec else Constant(1.0)
    return SeparableDensity(profile, factor)


def density_function_to_json(d) -> dict:
    if not isinstance(d, SeparableDensity):
        raise TypeError(f"{type(d).__name__} is not JSON serializable")
    p = d.profile
    out = {"profile": {"level": p.level, "flat_end": p.flat_end, "support_end": p.support_end, "taper": p.taper}}
    if not (isinstance(d.factor, Constant) and d.factor.value == 1.0):
        out["factor"] = time_function_to_json(d.factor)
    return out


# ---------------------------------------------------------------------------
# configuration records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    C0: float
    D0: float
    eta: float
    s_l: float
    X0: float
    delta: float

    def __post_init__(self):
        for name in ("C0", "D0", "eta", "s_l", "X0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.delta <= self.eta / 2:
            raise ValueError(f"delta must lie in (0, eta/2], got {self.delta}")


@dataclass(frozen=True)
class DensityDataBounds:
    alpha0: float
    beta0: float
    L_lower: float
    L_upper: float
    M: float = math.inf

    def __post_init__(self):
        if not 0 < self.alpha0 <= self.beta0:
            raise ValueError("need 0 < alpha0 <= beta0")
        if not 0 < self.L_lower < self.L_upper:
            raise ValueError("need 0 < L_lower < L_upper")
        if not self.M >= 0:
            raise ValueError("M must be nonnegative")


@dataclass(frozen=True)
class NumericalParams:
    n_y: int = 64
    n_l: int = 64
    dt: float = 1e-3
    t_end: float = 1.0
    picard_tol: float = 1e-10
    picard_max: int = 5
    gamma_est: Optional[float] = None
    picard: bool = False
    sign_margin_min: Optional[float] = None  # default delta/4
    X_min: Optional[float] = None  # default X0/100
    eps_mass: Optional[float] = None  # default 1e-4 * lower first-moment bound
    eps_ell: Optional[float] = None  # default 1e-6 * kappa_lower

    def __post_init__(self):
        if self.n_y < 8 or self.n_l < 8:
            raise ValueError("n_y and n_l must be at least 8")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be at least 1")

    def time_grid(self) -> np.ndarray:
        n = int(math.ceil(self.t_end / self.dt - 1e-9))
        ts = np.arange(n + 1) * self.dt
        if n > 0:
            ts[-1] = self.t_end
        return ts


@dataclass(frozen=True)
class BoundaryData:
    """Boundary speeds, density data, and the prescribed force or length.

    ``rho0_plus(t, l)`` and ``rho1_minus(t, l)`` are the inflow data,
    ``rho_init_plus(y, l)`` and ``rho_init_minus(y, l)`` the initial data on
    the rescaled interval y in [0, 1].  All callables must broadcast over
    numpy arrays.  ``length`` must provide ``derivative``.
    """

    u0_plus: Any
    u1_minus: Any
    rho0_plus: Callable
    rho1_minus: Callable
    rho_init_plus: Callable
    rho_init_minus: Callable
    force: Any = None
    length: Any = None


@dataclass(frozen=True)
class SimulationConfig:
    params: ModelParams
    bounds: DensityDataBounds
    boundary: BoundaryData
    numerics: NumericalParams = field(default_factory=NumericalParams)
    mode: Mode = "force"
    snapshots: tuple = ()

    def __post_init__(self):
        if self.mode not in ("force", "length"):
            raise ValueError(f"mode must be 'force' or 'length', got {self.mode!r}")
        if self.mode == "force" and self.boundary.force is None:
            raise ValueError("force mode needs boundary.force")
        if self.mode == "length" and self.boundary.length is None:
            raise ValueError("length mode needs boundary.length")

    # derived thresholds -------------------------------------------------
    @property
    def sign_margin_min(self) -> float:
        m = self.numerics.sign_margin_min
        return self.params.delta / 4 if m is None else m

    @property
    def X_min(self) -> float:
        m = self.numerics.X_min
        return self.params.X0 / 100 if m is None else m

    def with_numerics(self, **changes) -> "SimulationConfig":
        return replace(self, numerics=replace(self.numerics, **changes))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

_RTOL = 1e-12


def _first_failure(name, mask, where, values, bound, out):
    """Append a Violation for the first True entry of ``mask``."""
    mask = np.asarray(mask)
    if mask.any():
        k = np.unravel_index(int(np.argmax(mask)), mask.shape)
        w = tuple(np.broadcast_to(c, mask.shape)[k] for c in where)
        v = np.broadcast_to(values, mask.shape)[k]
        b = np.broadcast_to(bound, mask.shape)[k]
        out.append(Violation(name, w if len(w) > 1 else w[0], float(v), float(b)))


def _check_speeds(cfg: SimulationConfig, ts: np.ndarray, out: list) -> None:
    p = cfg.params
    bd = cfg.boundary
    u0 = np.asarray(bd.u0_plus(ts), dtype=float)
    u1 = np.asarray(bd.u1_minus(ts), dtype=float)
    if cfg.mode == "length":
        xdot = np.asarray(bd.length.derivative(ts), dtype=float)
        lo = p.delta + np.maximum(xdot, 0.0)
        hi = p.eta - p.delta - np.maximum(-xdot, 0.0)
        name = "V-ass1"
    else:
        lo = np.full_like(ts, p.delta)
        hi = np.full_like(ts, p.eta - p.delta)
        name = "BC-ass"
    tol = _RTOL * p.eta
    for label, u in (("u0_plus", u0), ("u1_minus", u1)):
        _first_failure(f"{name} lower ({label})", u < lo - tol, (ts,), u, lo, out)
        _first_failure(f"{name} upper ({label})", u > hi + tol, (ts,), u, hi, out)
        _first_failure(f"{name} finite ({label})", ~np.isfinite(u), (ts,), u, 0.0, out)


def _check_length(cfg: SimulationConfig, ts: np.ndarray, out: list) -> None:
    X0 = cfg.params.X0
    X = np.asarray(cfg.boundary.length(ts), dtype=float)
    _first_failure("X-ass lower", X < X0 / 2 * (1 - _RTOL), (ts,), X, X0 / 2, out)
    _first_failure("X-ass upper", X > 2 * X0 * (1 + _RTOL), (ts,), X, 2 * X0, out)
    if abs(X[0] - X0) > 1e-9 * X0:
        out.append(Violation("X-ass initial", 0.0, float(X[0]), X0))


def _check_density(name, f, s, l, b: DensityDataBounds, out: list, lipschitz_axes=(0, 1)) -> np.ndarray:
    S, L = np.meshgrid(s, l, indexing="ij")
    vals = np.asarray(f(S, L), dtype=float) * np.ones_like(S)
    tol = _RTOL * b.beta0
    low = L <= b.L_lower
    _first_failure(f"rho-ass lower ({name})", low & (vals < b.alpha0 - tol), (S, L), vals, b.alpha0, out)
    _first_failure(f"rho-ass upper ({name})", vals > b.beta0 + tol, (S, L), vals, b.beta0, out)
    _first_failure(f"rho-ass nonnegative ({name})", vals < 0, (S, L), vals, 0.0, out)
    supp = L >= b.L_upper
    _first_failure(f"rho-ass support ({name})", supp & (np.abs(vals) > 0), (S, L), vals, 0.0, out)
    M = b.M
    if math.isfinite(M):
        for axis, coords in ((0, s), (1, l)):
            if axis not in lipschitz_axes or vals.shape[axis] < 2:
                continue
            slope = np.abs(np.diff(vals, axis=axis)) / np.expand_dims(np.diff(coords), 1 - axis)
            _first_failure(f"rho-ass Lipschitz ({name})", slope > M * (1 + 1e-9) + tol,
                           (S[:-1, :] if axis == 0 else S[:, :-1], L[:-1, :] if axis == 0 else L[:, :-1]),
                           slope, M, out)
    return vals


def validate(config: SimulationConfig) -> SimulationConfig:
    """Check every data assumption on the sampling grids; return the config.

    Functions of t are sampled on {0, dt, ..., t_end}; density data on the
    tensor grid of those times (or the y nodes) with the l nodes over
    [0, L_upper], plus a few points beyond L_upper for the support check.
    Raises AssumptionViolated listing all failed checks.
    """
    p, b, num, bd = config.params, config.bounds, config.numerics, config.boundary
    out: list[Violation] = []
    ts = num.time_grid()
    ys = np.linspace(0.0, 1.0, num.n_y + 1)
    ls = np.concatenate([np.linspace(0.0, b.L_upper, num.n_l + 1), b.L_upper * np.array([1.1, 1.5, 2.0])])

    _check_speeds(config, ts, out)
    if config.mode == "length":
        _check_length(config, ts, out)

    v0 = _check_density("rho0_plus", bd.rho0_plus, ts, ls, b, out)
    v1 = _check_density("rho1_minus", bd.rho1_minus, ts, ls, b, out)
    # only the y-derivative of the initial data is bounded
    vip = _check_density("rho_init_plus", bd.rho_init_plus, ys, ls, b, out, lipschitz_axes=(0,))
    vim = _check_density("rho_init_minus", bd.rho_init_minus, ys, ls, b, out, lipschitz_axes=(0,))

    tol = 1e-12 * b.beta0
    _first_failure("rho-ass compatibility (plus)", np.abs(v0[0] - vip[0]) > tol, (ls,), v0[0] - vip[0], 0.0, out)
    _first_failure("rho-ass compatibility (minus)", np.abs(v1[0] - vim[-1]) > tol, (ls,), v1[0] - vim[-1], 0.0, out)

    if config.mode == "force" and num.gamma_est is not None:
        F = np.asarray(bd.force(ts), dtype=float) * np.ones_like(ts)
        gate = p.delta / (4 * num.gamma_est)
        _first_failure("F-ass", np.abs(F) > gate, (ts,), F, gate, out)

    if out:
        raise AssumptionViolated(out)
    if config.mode == "length":
        bound = shortness_bound(p, b)
        if p.X0 > bound:
            logger.info("X0=%g exceeds the shortness bound %g; global existence not guaranteed", p.X0, bound)
    return config


def shortness_bound(params: ModelParams, data_bounds: DensityDataBounds) -> float:
    """Sufficient bundle length for globally nondegenerate fixed-length runs.

    A characteristic moves at y-speed at least delta/(2 X0), so it lives at
    most 2 X0/delta; the data plateau [0, L_lower] then stays above L_lower/2
    while X0 <= delta * L_lower / (4 s_l).
    """
    return params.delta * data_bounds.L_lower / (4.0 * params.s_l)


# ---------------------------------------------------------------------------
# JSON ingestion
# ---------------------------------------------------------------------------


def config_from_dict(d: dict) -> SimulationConfig:
    params = ModelParams(**{k: float(v) for k, v in d["params"].items()})
    bounds_d = dict(d["bounds"])
    if bounds_d.get("M") is None:
        bounds_d["M"] = math.inf
    bounds = DensityDataBounds(**{k: float(v) for k, v in bounds_d.items()})
    num_d = dict(d.get("numerics", {}))
    numerics = NumericalParams(**num_d)
    bdd = d["boundary"]
    rho0 = density_function(bdd["rho0_plus"])
    rho1 = density_function(bdd["rho1_minus"])
    init_p = density_function(bdd["rho_init_plus"]) if "rho_init_plus" in bdd else SeparableDensity(rho0.profile)
    init_m = density_function(bdd["rho_init_minus"]) if "rho_init_minus" in bdd else SeparableDensity(rho1.profile)
    boundary = BoundaryData(
        u0_plus=time_function(bdd["u0_plus"]),
        u1_minus=time_function(bdd["u1_minus"]),
        rho0_plus=rho0,
        rho1_minus=rho1,
        rho_init_plus=init_p,
        rho_init_minus=init_m,
        force=time_function(bdd["force"]) if bdd.get("force") is not None else None,
        length=time_function(bdd["length"]) if bdd.get("length") is not None else None,
    )
    return SimulationConfig(params, bounds, boundary, numerics, d.get("mode", "force"),
                            tuple(float(s) for s in d.get("snapshots", ())))


def config_to_dict(cfg: SimulationConfig) -> dict:
    num = {k: getattr(cfg.numerics, k) for k in cfg.numerics.__dataclass_fields__}
    bounds = {k: getattr(cfg.bounds, k) for k in cfg.bounds.__dataclass_fields__}
    if not math.isfinite(bounds["M"]):
        bounds["M"] = None
    bd = cfg.boundary
    boundary = {
        "u0_plus": time_function_to_json(bd.u0_plus),
        "u1_minus": time_function_to_json(bd.u1_minus),
        "rho0_plus": density_function_to_json(bd.rho0_plus),
        "rho1_minus": density_function_to_json(bd.rho1_minus),
        "rho_init_plus": density_function_to_json(bd.rho_init_plus),
        "rho_init_minus": density_function_to_json(bd.rho_init_minus),
        "force": None if bd.force is None else time_function_to_json(bd.force),
        "length": None if bd.length is None else time_function_to_json(bd.length),
    }
    return {
        "mode": cfg.mode,
        "params": {k: getattr(cfg.params, k) for k in cfg.params.__dataclass_fields__},
        "bounds": bounds,
        "numerics": num,
        "boundary": boundary,
        "snapshots": list(cfg.snapshots),
    }


def load_config(path) -> SimulationConfig:
    with open(Path(path)) as fh:
        return config_from_dict(json.load(fh))
