"""Length-structured filament densities and the friction coefficients built from them."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .exceptions import DegenerateDensity

Family = Literal["plus", "minus"]


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    h = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """One family's density sampled on a uniform (y, l) grid over [0,1] x [0, L_upper].

    ``values[i, k]`` is the density at ``(y_nodes[i], l_nodes[k])``.
    """

    values: np.ndarray
    y_nodes: np.ndarray
    l_nodes: np.ndarray
    family: Family

    def __post_init__(self):
        if self.family not in ("plus", "minus"):
            raise ValueError(f"family must be 'plus' or 'minus', got {self.family!r}")
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.y_nodes), len(self.l_nodes)):
            raise ValueError(f"values shape {v.shape} does not match the node arrays")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, n_y: int, n_l: int, L_upper: float, family: Family) -> "DensityGrid":
        """Sample ``f(y, l)`` on the grid; the last l column is forced to zero."""
        y = np.linspace(0.0, 1.0, n_y + 1)
        l = np.linspace(0.0, L_upper, n_l + 1)
        vals = np.asarray(f(y[:, None], l[None, :]), dtype=float) * np.ones((n_y + 1, n_l + 1))
        vals[:, -1] = 0.0
        return cls(vals, y, l, family)

    @property
    def dy(self) -> float:
        return float(self.y_nodes[1] - self.y_nodes[0])

    @property
    def dl(self) -> float:
        return float(self.l_nodes[1] - self.l_nodes[0])

    @property
    def L_upper(self) -> float:
        return float(self.l_nodes[-1])

    def with_values(self, values: np.ndarray) -> "DensityGrid":
        return DensityGrid(values, self.y_nodes, self.l_nodes, self.family)

    def l2_norm(self) -> float:
        """Discrete L2 norm over (y, l) with trapezoid weights."""
        wy = _trapezoid_weights(self.y_nodes)
        wl = _trapezoid_weights(self.l_nodes)
        return float(np.sqrt(wy @ (self.values ** 2) @ wl))

    def total_mass(self) -> float:
        wy = _trapezoid_weights(self.y_nodes)
        wl = _trapezoid_weights(self.l_nodes)
        return float(wy @ self.values @ wl)

    def to_csv(self, path) -> None:
        """Write values with a header row of l nodes and a leading y column."""
        path = Path(path)
        header = "y\\l," + ",".join(f"{l:.17g}" for l in self.l_nodes)
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for y, row in zip(self.y_nodes, self.values):
                fh.write(f"{y:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, family: Family) -> "DensityGrid":
        with open(path) as fh:
            header = fh.readline().rstrip("\n").split(",")
        l = np.array([float(x) for x in header[1:]])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1:], data[:, 0], l, family)


@dataclass(frozen=True, eq=False)
class FrictionCoefficients:
    mu1_plus: np.ndarray
    mu1_minus: np.ndarray
    mu3_plus: np.ndarray
    mu3_minus: np.ndarray
    C: np.ndarray
    D_plus: np.ndarray
    D_minus: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.C)

    def minimum(self) -> float:
        return float(min(self.C.min(), self.D_plus.min(), self.D_minus.min()))

    @classmethod
    def from_arrays(cls, C, D_plus, D_minus) -> "FrictionCoefficients":
        """Coefficients given directly (moments left as NaN), for frozen-coefficient solves."""
        C = np.asarray(C, dtype=float)
        nan = np.full_like(C, np.nan)
        return cls(nan, nan, nan, nan, C, np.asarray(D_plus, dtype=float), np.asarray(D_minus, dtype=float))


def moment(grid: DensityGrid, j: int) -> np.ndarray:
    """``int_0^L l^j rho(y, l) dl`` at every y node by the trapezoid rule.

    The rule is exact for integrands linear in l on each cell; for
    l^j * rho it carries an O(dl^2) error.
    """
    if j not in (1, 3):
        raise ValueError(f"only moments j=1 and j=3 are used, got {j}")
    w = _trapezoid_weights(grid.l_nodes) * grid.l_nodes ** j
    return grid.values @ w


def coefficients(rho_plus: DensityGrid, rho_minus: DensityGrid, C0: float = 1.0, D0: float = 1.0,
                 eps_mass: float = 0.0) -> FrictionCoefficients:
    """Friction coefficients D+, D-, C from the first and third l-moments.

    Raises DegenerateDensity at the first y node where either family's first
    moment drops below ``eps_mass`` (or vanishes).
    """
    if rho_plus.values.shape != rho_minus.values.shape or not np.array_equal(rho_plus.l_nodes, rho_minus.l_nodes):
        raise ValueError("density grids must share nodes")
    m1p, m1m = moment(rho_plus, 1), moment(rho_minus, 1)
    m3p, m3m = moment(rho_plus, 3), moment(rho_minus, 3)
    floor = max(eps_mass, 0.0)
    bad = (np.minimum(m1p, m1m) <= floor) | ~np.isfinite(m1p + m1m)
    if bad.any():
        i = int(np.argmax(bad))
        which = "plus" if m1p[i] <= m1m[i] else "minus"
        raise DegenerateDensity(i, float(rho_plus.y_nodes[i]),
                                f"first moment of {which} family {min(m1p[i], m1m[i]):.3g} <= {floor:.3g}")
    total = m1p + m1m
    return FrictionCoefficients(
        mu1_plus=m1p, mu1_minus=m1m, mu3_plus=m3p, mu3_minus=m3m,
        C=C0 * m1p * m1m / total,
        D_plus=D0 * m1p * m3p / total,
        D_minus=D0 * m1m * m3m / total,
    )


def moment_bounds(alpha0: float, beta0: float, L_lower: float, L_upper: float, j: int) -> tuple[float, float]:
    """Bounds on the j-th moment of a density in the admissible set.

    The admissible set has rho >= alpha0/2 on l <= L_lower/2, rho <= 2 beta0
    and support in [0, L_upper].
    """
    lo = (L_lower / 2) ** (j + 1) / (j + 1) * alpha0 / 2
    hi = L_upper ** (j + 1) / (j + 1) * 2 * beta0
    return lo, hi


def lemma41_bounds(data_bounds, C0: float = 1.0, D0: float = 1.0) -> tuple[float, float]:
    """Explicit lower/upper bounds on C and D+- over the admissible density set.

    D = D0 mu1 mu3 / (mu1 + mu1') grows with its own moments and shrinks with
    the other family's first moment; C = C0 mu1 mu1' / (mu1 + mu1') grows with
    both.  The extremes therefore sit at the corners of the moment box.
    """
    b = data_bounds
    m1, M1 = moment_bounds(b.alpha0, b.beta0, b.L_lower, b.L_upper, 1)
    m3, M3 = moment_bounds(b.alpha0, b.beta0, b.L_lower, b.L_upper, 3)
    D_lo = D0 * m1 * m3 / (m1 + M1)
    D_hi = D0 * M1 * M3 / (M1 + m1)
    C_lo = C0 * m1 / 2
    C_hi = C0 * M1 / 2
    return min(D_lo, C_lo), max(D_hi, C_hi)


def default_eps_mass(data_bounds) -> float:
    b = data_bounds
    return 1e-4 * moment_bounds(b.alpha0, b.beta0, b.L_lower, b.L_upper, 1)[0]
