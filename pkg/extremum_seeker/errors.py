"""Exception types shared across the extremum seeker package."""

from typing import Any, List, Optional


class ConfigError(ValueError):
    """A scenario file or a user-supplied bound function is malformed."""


class ValidationError(ConfigError):
    """A parsed scenario breaks one or more configuration rules."""

    def __init__(self, violations: List[Any]):
        self.violations = list(violations)
        lines = "\n".join(f"  {v}" for v in self.violations)
        super().__init__(f"Scenario has {len(self.violations)} violation(s):\n{lines}")


class SimulationFault(RuntimeError):
    """A non-finite value appeared while stepping the closed loop."""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"{message} (sample {index})"
        super().__init__(message)


class SimulationDiverged(SimulationFault):
    """The divergence guard tripped; ``trace`` holds the samples recorded so far."""

    def __init__(self, message: str, index: int, trace: Any = None):
        super().__init__(message, index)
        self.trace = trace
