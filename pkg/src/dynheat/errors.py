"""Exception taxonomy shared by all dynheat modules.

The CLI maps these onto distinct exit codes (see dynheat.cli).
"""


class DynheatError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(DynheatError):
    """Invalid or inconsistent configuration (grids, intervals, alignment)."""


class DimensionError(DynheatError):
    """Mismatched array shapes between fields, grids, or bases."""


class NumericError(DynheatError):
    """A numerical routine failed to converge or lost all accuracy."""


class DegenerateObservationError(DynheatError):
    """Observation region too small for the grid: restriction map singular."""


class UnsupportedControlError(DynheatError):
    """Control not in the factored form the exact solver requires."""


class UnsupportedTerminalError(DynheatError):
    """Terminal data outside the class a backward solver supports."""


class MeasureConditionError(DynheatError):
    """A time-measure precondition (positive measure where required) fails."""


class IllPosedWindowError(DynheatError):
    """Control Gramian numerically singular for the requested mode window."""


class PlanningError(DynheatError):
    """A control schedule cannot reach the requested accuracy."""


class VerificationError(DynheatError):
    """A built-in post-run verification of a command's invariants failed."""
