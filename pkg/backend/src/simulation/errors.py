"""
Simulation error hierarchy.

Every failure raised by the simulator derives from SimulationError and
carries a short machine-readable code. The command-line layer turns these
into single-line ``error[<code>]: <message>`` diagnostics.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all simulator errors."""

    code = "simulation"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(SimulationError):
    """Raised when a configuration file or parameter block fails validation."""

    code = "config"


class InvalidInputError(SimulationError):
    """Raised when an operation receives an argument outside its domain."""

    code = "input"


class PropagationError(SimulationError):
    """
    Raised when density-matrix propagation produces an invalid state.

    Attributes:
        round_index: Index of the stabilization round being executed, if known
        segment: Label of the segment being propagated, if known
    """

    code = "propagation"

    def __init__(self, message: str, round_index: Optional[int] = None,
                 segment: Optional[str] = None):
        super().__init__(message)
        self.round_index = round_index
        self.segment = segment

    def with_context(self, round_index: Optional[int] = None,
                     segment: Optional[str] = None) -> "PropagationError":
        """Return a copy of this error with round/segment context filled in."""
        return PropagationError(
            self.message,
            round_index=self.round_index if round_index is None else round_index,
            segment=self.segment if segment is None else segment,
        )

    def __str__(self) -> str:
        context = []
        if self.round_index is not None:
            context.append(f"round={self.round_index}")
        if self.segment is not None:
            context.append(f"segment={self.segment}")
        if context:
            return f"{self.message} ({', '.join(context)})"
        return self.message
