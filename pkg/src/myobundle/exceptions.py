"""Exception and warning types raised by the bundle simulator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class Violation:
    """One failed assumption check."""

    name: str
    where: Any
    value: float
    bound: float

    def __str__(self) -> str:
        return f"{self.name} at {self.where}: value {self.value:.6g} vs bound {self.bound:.6g}"


class AssumptionViolated(Exception):
    """Raised when the data break one or more modelling assumptions.

    ``violations`` lists every failed check; ``name`` is the first one.
    """

    def __init__(self, violations):
        if isinstance(violations, Violation):
            violations = [violations]
        self.violations = list(violations)
        first = self.violations[0]
        self.name = first.name
        self.where = first.where
        self.value = first.value
        self.bound = first.bound
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def names(self) -> list[str]:
        return sorted({v.name for v in self.violations})


class DegenerateDensity(Exception):
    """A filament family has (numerically) vanished at some y node."""

    def __init__(self, y_node: int, y: float | None = None, detail: str = ""):
        self.y_node = int(y_node)
        self.y = y
        msg = f"degenerate density at y node {self.y_node}"
        if y is not None:
            msg += f" (y={y:.6g})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SingularSystem(Exception):
    pass


class MaxPrincipleViolated(AssertionError):
    pass


class SignConditionLost(Exception):
    def __init__(self, which: str, margin: float, t: float | None = None):
        self.which = which
        self.margin = margin
        self.t = t
        super().__init__(f"sign condition {which} lost (margin {margin:.6g}, t={t})")


class BundleCollapsed(Exception):
    def __init__(self, t: float, X: float):
        self.t = t
        self.X = X
        super().__init__(f"bundle collapsed at t={t:.6g} (X={X:.6g})")


class ForceGateFailed(Exception):
    def __init__(self, t: float, F: float, gate: float):
        self.t, self.F, self.gate = t, F, gate
        super().__init__(f"|F(t={t:.6g})| = {abs(F):.6g} exceeds delta/(4 gamma_est) = {gate:.6g}")


class ContractivityViolated(ValueError):
    pass


class CFLWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
