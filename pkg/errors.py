"""
Exception hierarchy for the PPA cooling simulator.

Everything raised on purpose derives from CoolingError. The parameter and
precondition errors are also ValueErrors so callers that only catch the
builtin keep working.
"""


class CoolingError(Exception):
    """Base class for simulator errors"""


class InvalidParameterError(CoolingError, ValueError):
    """A parameter is out of range or dimensions do not line up"""


class InvalidStateError(InvalidParameterError):
    """A probability vector failed validation"""

    def __init__(self, violation):
        self.violation = violation
        super().__init__(str(violation))


class SingularPolarizationError(CoolingError, ArithmeticError):
    """A qubit marginal has a zero population, so its polarization is infinite"""


class SingularDistanceError(CoolingError, ArithmeticError):
    """A marginal entry is zero, so a log-distance is undefined"""


class PreconditionError(CoolingError, ValueError):
    """A checker was handed input it cannot judge (e.g. a non-converged run)"""
