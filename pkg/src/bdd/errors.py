"""Exception types raised across the package."""


class BDDError(Exception):
    """Base class for all package errors."""


class InvalidBoundary(BDDError, ValueError):
    pass


class InvalidGrid(BDDError, ValueError):
    pass


class AnchorOffBoundary(BDDError, ValueError):
    pass


class NonpositiveBandwidth(BDDError, ValueError):
    pass


class DegenerateDesign(BDDError):
    """Weighted design has no usable observation or no estimable column."""


class EmptyWindow(DegenerateDesign):
    """No observation within the bandwidth on one side of the boundary."""


class OrderNotGreater(BDDError, ValueError):
    pass


class AllWeightsZero(BDDError, ValueError):
    pass


class InsufficientData(BDDError, ValueError):
    pass


class ParseError(BDDError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteValue(ParseError):
    pass


class PilotDegenerate(DegenerateDesign):
    """Pilot fit for a plug-in bandwidth is not estimable."""
