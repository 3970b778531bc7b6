"""
Error Hierarchy
---------------
Every solver failure raised by this package derives from `GoodwillError`,
so the CLI can turn any of them into a clean exit status.
"""

from __future__ import annotations

from typing import List, Optional, Tuple


class GoodwillError(Exception):
    """Base class for all solver and configuration failures."""


class DomainError(GoodwillError, ValueError):
    """A point lies outside the rectangle [0, L] x [0, H]."""


class ConfigurationError(GoodwillError, ValueError):
    """Inputs are individually valid but cannot be used together."""


class IllPosedError(GoodwillError):
    """The indefinite LQ problem violates its coercivity margin."""

    def __init__(self, margin: float, message: Optional[str] = None) -> None:
        self.margin = margin
        super().__init__(message or f"problem is ill-posed: coercivity margin {margin:.6g} <= 0")


class BlowUpError(GoodwillError):
    """A Riccati mode escapes to infinity inside the horizon."""

    def __init__(self, escape_time: float, mode: Optional[Tuple[int, int]] = None) -> None:
        self.escape_time = escape_time
        self.mode = mode
        where = f" in mode {mode}" if mode is not None else ""
        super().__init__(f"Riccati solution blows up{where} at t = {escape_time:.6g}")


class DegenerateConstantError(GoodwillError):
    """gamma equals 2*mu_k, so the integration constant of the P1 mode is undefined."""


class InfeasibleError(GoodwillError):
    """No admissible control can influence the state."""


class ConfigError(GoodwillError):
    """Scenario file rejected; carries every violation, not just the first."""

    def __init__(self, violations: List[object]) -> None:
        self.violations = list(violations)
        lines = [str(v) for v in self.violations]
        super().__init__("invalid scenario configuration:\n  " + "\n  ".join(lines))


class ScenarioError(GoodwillError):
    """A solver error annotated with the scenario it happened in."""

    def __init__(self, problem: str, cause: Exception) -> None:
        self.problem = problem
        self.cause = cause
        super().__init__(f"[{problem}] {cause}")
