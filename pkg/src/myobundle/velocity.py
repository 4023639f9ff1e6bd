"""Quasi-stationary force balance for the filament velocities on the rescaled interval.

Both families are discretised with flux-form centred differences (arithmetic
face means of D) and half-cell balances at the boundary nodes, which is the
ghost-node reflection in conservative form.  Unknowns are interleaved
``[v+_0, v-_0, v+_1, v-_1, ...]`` so the coupled system is pentadiagonal and is
solved in one banded factorisation.

The force balance is solved for the deviation from the force free solution,
``W+ = V+ - u0`` and ``W- = V- - (u0 - eta)``.  The coupling term then reads
``X^2 C (W- - W+)`` and the only inhomogeneities come from the boundary
conditions, so F = 0 reproduces the constant solution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .exceptions import MaxPrincipleViolated, SingularSystem

SolveMode = Literal["free_force", "fixed_length"]

RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    """Velocities, derivatives and fluxes on the y nodes.

    ``flux_plus``/``flux_minus`` hold the conservative nodal fluxes D dV;
    ``dV_*`` are those fluxes divided by the nodal D.
    """

    y_nodes: np.ndarray
    V_plus: np.ndarray
    V_minus: np.ndarray
    dV_plus: np.ndarray
    dV_minus: np.ndarray
    flux_plus: np.ndarray
    flux_minus: np.ndarray
    X: float
    eta: float
    mode: SolveMode

    @property
    def total_force(self) -> np.ndarray:
        """(D+ dV+ + D- dV-)(y) / X at every node."""
        return (self.flux_plus + self.flux_minus) / self.X

    def force_variation(self) -> float:
        F = self.total_force
        return float(np.max(np.abs(F - F[-1])))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.y_nodes, self.V_plus, self.V_minus, self.dV_plus, self.dV_minus])
        np.savetxt(path, data, delimiter=",", header="y,V_plus,V_minus,dV_plus,dV_minus", comments="",
                   fmt="%.17g")


def _banded_matvec(ab: np.ndarray, x: np.ndarray, l: int, u: int) -> np.ndarray:
    n = len(x)
    y = np.zeros(n)
    for k in range(-l, u + 1):
        # A[i, i + k] is stored at ab[u - k, i + k]
        if k >= 0:
            y[: n - k] += ab[u - k, k:] * x[k:]
        else:
            y[-k:] += ab[u - k, : n + k] * x[: n + k]
    return y


def solve_coupled(D_plus, D_minus, K, *, left_plus_value=0.0, right_plus_flux=0.0, left_minus_flux=0.0,
                  right_minus=0.0, right_minus_kind: Literal["flux", "value"] = "flux",
                  source_plus=None, source_minus=None):
    """Solve the coupled two-point problem on a uniform grid over [0, 1].

    (D+ v+')' - K (v+ - v-) = s+,   (D- v-')' + K (v+ - v-) = s-,
    v+(0) = a,  (D+ v+')(1) = b,  (D- v-')(0) = c,
    and at y = 1 either (D- v-')(1) = d or v-(1) = d.

    Returns ``(v_plus, v_minus, flux_plus, flux_minus)`` with nodal fluxes
    reconstructed from the discrete balances.
    """
    Dp = np.asarray(D_plus, dtype=float)
    Dm = np.asarray(D_minus, dtype=float)
    K = np.asarray(K, dtype=float) * np.ones_like(Dp)
    n1 = len(Dp)
    N = n1 - 1
    h = 1.0 / N
    sp = np.zeros(n1) if source_plus is None else np.asarray(source_plus, dtype=float) * np.ones(n1)
    sm = np.zeros(n1) if source_minus is None else np.asarray(source_minus, dtype=float) * np.ones(n1)

    for arr, name in ((Dp, "D_plus"), (Dm, "D_minus"), (K, "X^2 C")):
        if not np.all(np.isfinite(arr)) or arr.min() <= 0.0:
            raise SingularSystem(f"{name} must be finite and positive (min {np.min(arr):.3g})")

    Fp = 0.5 * (Dp[1:] + Dp[:-1]) / h**2
    Fm = 0.5 * (Dm[1:] + Dm[:-1]) / h**2

    n = 2 * n1
    lb = ub = 2
    ab = np.zeros((lb + ub + 1, n))
    rhs = np.zeros(n)

    def put(rows, offset, vals):
        # A[row, row + offset] = vals
        ab[ub - offset, rows + offset] = vals

    ip = 2 * np.arange(n1)
    im = ip + 1
    inner = np.arange(1, N)

    # plus rows, interior: Fp_{i-1} v_{i-1} - (Fp_{i-1}+Fp_i + K) v_i + Fp_i v_{i+1} + K v-_i = s+
    put(ip[inner], -2, Fp[inner - 1])
    put(ip[inner], 2, Fp[inner])
    put(ip[inner], 0, -(Fp[inner - 1] + Fp[inner] + K[inner]))
    put(ip[inner], 1, K[inner])
    rhs[ip[inner]] = sp[inner]
    # plus, left Dirichlet
    put(ip[:1], 0, 1.0)
    rhs[ip[0]] = left_plus_value
    # plus, right flux (half cell)
    put(ip[N:], -2, 2 * Fp[N - 1])
    put(ip[N:], 0, -(2 * Fp[N - 1] + K[N]))
    put(ip[N:], 1, K[N])
    rhs[ip[N]] = sp[N] - 2 * right_plus_flux / h

    # minus rows, interior
    put(im[inner], -2, Fm[inner - 1])
    put(im[inner], 2, Fm[inner])
    put(im[inner], 0, -(Fm[inner - 1] + Fm[inner] + K[inner]))
    put(im[inner], -1, K[inner])
    rhs[im[inner]] = sm[inner]
    # minus, left flux (half cell)
    put(im[:1], 2, 2 * Fm[0])
    put(im[:1], 0, -(2 * Fm[0] + K[0]))
    put(im[:1], -1, K[0])
    rhs[im[0]] = sm[0] + 2 * left_minus_flux / h
    # minus, right
    if right_minus_kind == "value":
        put(im[N:], 0, 1.0)
        rhs[im[N]] = right_minus
    elif right_minus_kind == "flux":
        put(im[N:], -2, 2 * Fm[N - 1])
        put(im[N:], 0, -(2 * Fm[N - 1] + K[N]))
        put(im[N:], -1, K[N])
        rhs[im[N]] = sm[N] - 2 * right_minus / h
    else:
        raise ValueError(f"unknown boundary kind {right_minus_kind!r}")

    try:
        with np.errstate(all="raise"):
            x = solve_banded((lb, ub), ab, rhs, check_finite=True)
    except (LinAlgError, ValueError, FloatingPointError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    # backward-error test; residuals in the subnormal range carry no information
    res = np.linalg.norm(_banded_matvec(ab, x, lb, ub) - rhs, np.inf)
    a_norm = np.max(_banded_matvec(np.abs(ab), np.ones_like(x), lb, ub))
    scale = a_norm * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf)
    if res > RESIDUAL_RTOL * scale + np.finfo(float).tiny:
        raise SingularSystem(f"linear residual {res:.3g} too large")

    vp, vm = x[0::2], x[1::2]
    qp_face = Fp * h * (vp[1:] - vp[:-1])
    qm_face = Fm * h * (vm[1:] - vm[:-1])
    Rp = K * (vp - vm) + sp
    Rm = -K * (vp - vm) + sm
    qp = np.empty(n1)
    qm = np.empty(n1)
    qp[1:N] = 0.5 * (qp_face[:-1] + qp_face[1:])
    qm[1:N] = 0.5 * (qm_face[:-1] + qm_face[1:])
    qp[0] = qp_face[0] - 0.5 * h * Rp[0]
    qm[0] = qm_face[0] - 0.5 * h * Rm[0]
    qp[N] = qp_face[-1] + 0.5 * h * Rp[N]
    qm[N] = qm_face[-1] + 0.5 * h * Rm[N]
    return vp, vm, qp, qm


def _profile(coeffs, X, u0_plus, eta, wp, wm, qp, qm, mode) -> VelocityProfile:
    n1 = len(wp)
    y = np.linspace(0.0, 1.0, n1)
    return VelocityProfile(
        y_nodes=y,
        V_plus=wp + u0_plus,
        V_minus=wm + (u0_plus - eta),
        dV_plus=qp / coeffs.D_plus,
        dV_minus=qm / coeffs.D_minus,
        flux_plus=qp,
        flux_minus=qm,
        X=float(X),
        eta=float(eta),
        mode=mode,
    )


def solve_free(coeffs, X: float, F: float, u0_plus: float, eta: float) -> VelocityProfile:
    """Velocities for a prescribed end force F (free boundary mode).

    Boundary conditions: V+(0) = u0+, V+'(1) = 0, V-'(0) = 0,
    (D- V-')(1) = X F.
    """
    if not X > 0:
        raise ValueError("X must be positive")
    K = X * X * coeffs.C
    wp, wm, qp, qm = solve_coupled(coeffs.D_plus, coeffs.D_minus, K, right_minus=X * F, right_minus_kind="flux")
    return _profile(coeffs, X, u0_plus, eta, wp, wm, qp, qm, "free_force")


def vest_box(Xdot: float, u0_plus: float, u1_minus: float, eta: float):
    """Largest admissible margin and the resulting velocity box at one time.

    Returns ``(delta_eff, (lo_plus, hi_plus), (lo_minus, hi_minus))``;
    delta_eff <= 0 means the sharpened boundary-speed assumption fails.
    """
    xp, xm = max(Xdot, 0.0), max(-Xdot, 0.0)
    delta_eff = min(u0_plus - xp, u1_minus - xp, eta - xm - u0_plus, eta - xm - u1_minus)
    return (
        delta_eff,
        (delta_eff + xp, eta - delta_eff - xm),
        (-eta + delta_eff + xp, -delta_eff - xm),
    )


def box_violation(profile: VelocityProfile, Xdot: float, u0_plus: float, u1_minus: float) -> float:
    """Largest excursion of the velocities outside the maximum-principle box (<= 0 inside)."""
    d, (lp, hp), (lm, hm) = vest_box(Xdot, u0_plus, u1_minus, profile.eta)
    return float(max(
        np.max(lp - profile.V_plus), np.max(profile.V_plus - hp),
        np.max(lm - profile.V_minus), np.max(profile.V_minus - hm),
    ))


def solve_fixed(coeffs, X: float, Xdot: float, u0_plus: float, u1_minus: float, eta: float,
                check_bounds: bool = True) -> VelocityProfile:
    """Velocities for a prescribed bundle length (Dirichlet V-(1) = Xdot - u1-)."""
    if not X > 0:
        raise ValueError("X must be positive")
    K = X * X * coeffs.C
    d = Xdot - u1_minus - (u0_plus - eta)
    wp, wm, qp, qm = solve_coupled(coeffs.D_plus, coeffs.D_minus, K, right_minus=d, right_minus_kind="value")
    prof = _profile(coeffs, X, u0_plus, eta, wp, wm, qp, qm, "fixed_length")
    if check_bounds:
        delta_eff = vest_box(Xdot, u0_plus, u1_minus, eta)[0]
        if delta_eff > 0:
            h = 1.0 / (len(wp) - 1)
            excess = box_violation(prof, Xdot, u0_plus, u1_minus)
            if excess > 10 * h * h:
                raise MaxPrincipleViolated(f"velocities leave the maximum-principle box by {excess:.3g}")
    return prof


def force_from_profile(profile: VelocityProfile, coeffs, X: float) -> float:
    """End force from the integrated minus balance, int_0^1 X^2 C (eta - V+ + V-) dy / X."""
    return force_estimates(profile, coeffs, X)[0]


def force_estimates(profile: VelocityProfile, coeffs, X: float) -> tuple[float, float]:
    """``(integral, one_sided)`` force estimates.

    The one-sided estimate uses D-(1) times the last backward difference of
    V-; it is first order in dy.
    """
    y = profile.y_nodes
    h = y[1] - y[0]
    # eta - V+ + V- written through the deviations to avoid cancellation
    u0 = profile.V_plus[0]
    gap = (profile.V_minus - (u0 - profile.eta)) - (profile.V_plus - u0)
    integrand = X * X * coeffs.C * gap
    integral = h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1]))
    one_sided = coeffs.D_minus[-1] * (profile.V_minus[-1] - profile.V_minus[-2]) / h
    return float(integral / X), float(one_sided / X)
