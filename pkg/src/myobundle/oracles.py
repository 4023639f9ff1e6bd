"""Closed-form reference solutions: the force free bundle and the small-force steady state.

Integrals of the boundary speeds use the ``integral`` method of the time
function presets when available (exact), falling back to adaptive quadrature
for plain callables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect, brentq

from .exceptions import BundleCollapsed, ContractivityViolated

AGE_XTOL = 1e-12


def _integral(f, a: float, b: float) -> float:
    if hasattr(f, "integral"):
        return float(f.integral(a, b))
    return float(quad(lambda s: float(f(s)), a, b, limit=200)[0])


def explicit_velocity(t, boundary, eta: float):
    """Force free velocities (V+, V-) = (u0+(t), u0+(t) - eta), constant in y."""
    u = boundary.u0_plus(t)
    return u, u - eta


def _length_rate(boundary, eta):
    return lambda s: boundary.u0_plus(s) + boundary.u1_minus(s) - eta


def explicit_length_unchecked(t: float, boundary, X0: float, eta: float) -> float:
    return X0 + _integral(boundary.u0_plus, 0.0, t) + _integral(boundary.u1_minus, 0.0, t) - eta * t


def collapse_time(boundary, X0: float, eta: float, t_max: float, samples: int = 2048) -> Optional[float]:
    """First time in [0, t_max] at which the force free length reaches zero, or None."""
    ts = np.linspace(0.0, t_max, samples + 1)
    Xs = np.array([explicit_length_unchecked(s, boundary, X0, eta) for s in ts])
    hit = np.flatnonzero(Xs <= 0.0)
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0 or Xs[k] == 0.0:
        return float(ts[k])
    return float(brentq(lambda s: explicit_length_unchecked(s, boundary, X0, eta), ts[k - 1], ts[k], xtol=1e-14))


def explicit_length(t: float, boundary, X0: float, eta: float) -> float:
    """X0 + int_0^t (u0+ + u1- - eta) ds; raises BundleCollapsed if it hits zero first."""
    tc = collapse_time(boundary, X0, eta, t) if t > 0 else None
    if tc is not None:
        raise BundleCollapsed(tc, 0.0)
    return explicit_length_unchecked(t, boundary, X0, eta)


@dataclass(frozen=True)
class FilamentAge:
    """Age of the filament at (y, t); ``age`` is None in the initial-data region."""

    age: Optional[float]
    region: str  # "boundary" or "initial"


def filament_age(y: float, t: float, side: str, boundary, X0: float, eta: float) -> FilamentAge:
    """Time since the filament at (y, t) entered through its inflow end.

    Solved by bisection on X(t) y = int_{t-tau}^t u0+(s) ds (plus side) or
    X(t)(1 - y) = int_{t-tau}^t u1-(s) ds (minus side).
    """
    u = boundary.u0_plus if side == "plus" else boundary.u1_minus
    dist = explicit_length_unchecked(t, boundary, X0, eta) * (y if side == "plus" else 1.0 - y)
    if dist >= _integral(u, 0.0, t):
        return FilamentAge(None, "initial")
    if dist <= 0.0:
        return FilamentAge(0.0, "boundary")
    g = lambda tau: _integral(u, t - tau, t) - dist  # noqa: E731
    return FilamentAge(float(bisect(g, 0.0, t, xtol=AGE_XTOL, maxiter=200)), "boundary")


def explicit_density_profile(t: float, y: float, l, side: str, boundary, X0: float, eta: float, s_l: float):
    """Force free density at (t, y) for an array of lengths l."""
    l = np.asarray(l, dtype=float)
    age = filament_age(y, t, side, boundary, X0, eta)
    if age.region == "initial":
        Xt = explicit_length_unchecked(t, boundary, X0, eta)
        if side == "plus":
            y0 = Xt / X0 * y - _integral(boundary.u0_plus, 0.0, t) / X0
            return np.asarray(boundary.rho_init_plus(y0, l + s_l * t), dtype=float) * np.ones_like(l)
        y0 = Xt / X0 * (y - 1.0) + 1.0 + _integral(boundary.u1_minus, 0.0, t) / X0
        return np.asarray(boundary.rho_init_minus(y0, l + s_l * t), dtype=float) * np.ones_like(l)
    tau = age.age
    datum = boundary.rho0_plus if side == "plus" else boundary.rho1_minus
    return np.asarray(datum(t - tau, l + s_l * tau), dtype=float) * np.ones_like(l)


def explicit_density(t: float, y: float, l, side: str, boundary, X0: float, eta: float, s_l: float):
    """Scalar or array version of the force free density (initial or boundary branch)."""
    out = explicit_density_profile(t, y, np.atleast_1d(l), side, boundary, X0, eta, s_l)
    return float(out[0]) if np.ndim(l) == 0 else out


def explicit_density_grid(t: float, y_nodes, l_nodes, side: str, boundary, X0: float, eta: float, s_l: float):
    return np.array([explicit_density_profile(t, y, l_nodes, side, boundary, X0, eta, s_l) for y in y_nodes])


def initial_branch_density(t, y, l, side, boundary, X0, eta, s_l):
    """The initial-data branch evaluated regardless of region (for interface checks)."""
    Xt = explicit_length_unchecked(t, boundary, X0, eta)
    l = np.asarray(l, dtype=float)
    if side == "plus":
        y0 = Xt / X0 * y - _integral(boundary.u0_plus, 0.0, t) / X0
        return boundary.rho_init_plus(y0, l + s_l * t)
    y0 = Xt / X0 * (y - 1.0) + 1.0 + _integral(boundary.u1_minus, 0.0, t) / X0
    return boundary.rho_init_minus(y0, l + s_l * t)


@dataclass(frozen=True)
class ExplicitSolution:
    """The force free solution as callables of (t[, y[, l]])."""

    boundary: object
    X0: float
    eta: float
    s_l: float

    def V_plus(self, t):
        return explicit_velocity(t, self.boundary, self.eta)[0]

    def V_minus(self, t):
        return explicit_velocity(t, self.boundary, self.eta)[1]

    def X_bar(self, t):
        return explicit_length(t, self.boundary, self.X0, self.eta)

    def tau_plus(self, y, t):
        return filament_age(y, t, "plus", self.boundary, self.X0, self.eta).age

    def tau_minus(self, y, t):
        return filament_age(y, t, "minus", self.boundary, self.X0, self.eta).age

    def rho_plus(self, t, y, l):
        return explicit_density(t, y, l, "plus", self.boundary, self.X0, self.eta, self.s_l)

    def rho_minus(self, t, y, l):
        return explicit_density(t, y, l, "minus", self.boundary, self.X0, self.eta, self.s_l)


def first_moment(rho: Callable, L_upper: float) -> float:
    return float(quad(lambda l: l * float(rho(l)), 0.0, L_upper, limit=200)[0])


def third_moment(rho: Callable, L_upper: float) -> float:
    return float(quad(lambda l: l**3 * float(rho(l)), 0.0, L_upper, limit=200)[0])


def limiting_coefficients(c0_model: float, d0_model: float, rho_l: Callable, rho_r: Callable, L_upper: float):
    """(C_limit, D+_limit, D-_limit) for the constant limiting densities."""
    m1l, m1r = first_moment(rho_l, L_upper), first_moment(rho_r, L_upper)
    m3l, m3r = third_moment(rho_l, L_upper), third_moment(rho_r, L_upper)
    tot = m1l + m1r
    return c0_model * m1l * m1r / tot, d0_model * m1l * m3l / tot, d0_model * m1r * m3r / tot


@dataclass(frozen=True)
class SteadyState:
    X_inf: float
    C_limit: float
    limit_rhs: Callable  # X -> dX/dt of the limiting length equation

    def limit_trajectory(self, X0: float, t) -> np.ndarray:
        """Integrate the limiting length equation from X0 at the times t."""
        from scipy.integrate import solve_ivp

        t = np.asarray(t, dtype=float)
        sol = solve_ivp(lambda s, x: [self.limit_rhs(x[0])], (t[0], t[-1]), [X0], t_eval=t,
                        rtol=1e-10, atol=1e-12, method="LSODA")
        return sol.y[0]


def asymptotic_steady_length(F: float, c0_model: float, eta: float, u_l: float, u_r: float,
                             rho_l: Callable, rho_r: Callable, L_upper: float) -> SteadyState:
    """Small-force steady length F / (C_limit (eta - u_l - u_r)).

    ``c0_model`` is the interaction constant of the model; ``C_limit`` is the
    constant coefficient it produces with the limiting densities rho_l, rho_r
    (functions of l).
    """
    if eta <= u_l + u_r:
        raise ContractivityViolated(f"force free bundle is not contractive: eta={eta} <= u_l + u_r = {u_l + u_r}")
    if F < 0:
        raise ValueError("the steady state needs a pulling force F >= 0")
    m1l, m1r = first_moment(rho_l, L_upper), first_moment(rho_r, L_upper)
    C_limit = c0_model * m1l * m1r / (m1l + m1r)
    X_inf = F / (C_limit * (eta - u_l - u_r))

    def rhs(X):
        return u_l + u_r - eta + F / (C_limit * X)

    return SteadyState(X_inf, C_limit, rhs)


def elliptic_length_scale(c0_model: float, d0_model: float, rho_l: Callable, rho_r: Callable, L_upper: float) -> float:
    """sqrt(min D / C) for the limiting densities: the length at which X^2 C / D is of order one."""
    C, Dp, Dm = limiting_coefficients(c0_model, d0_model, rho_l, rho_r, L_upper)
    return float(np.sqrt(min(Dp, Dm) / C))
