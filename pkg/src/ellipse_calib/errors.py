"""Exception and warning types shared across the package."""


class EllipseCalibError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EllipseCalibError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateEllipse(EllipseCalibError, ValueError):
    """Path length does not exceed the line-of-sight distance."""


class DegenerateRp(EllipseCalibError, ValueError):
    """Reflection point coincides with a focus."""


class FitDiverged(EllipseCalibError, RuntimeError):
    """Least-squares fit failed to beat the zero model."""


class InsufficientData(EllipseCalibError, ValueError):
    """Not enough samples for the requested estimate."""


class AmbiguousRp(EllipseCalibError, ValueError):
    """More than one reflection point candidate on the delay ellipse."""


class NoRpFound(EllipseCalibError, ValueError):
    """No surface intersects the delay ellipse."""


class DelayOutOfWindow(EllipseCalibError, ValueError):
    """Requested delay lies outside the observation window."""


class EmptyIdleSet(EllipseCalibError, ValueError):
    """No idle-channel snapshots were supplied."""


class NumericalUnderflow(EllipseCalibError, ArithmeticError):
    """All likelihoods vanished even in the log domain."""


class SchemaError(EllipseCalibError, ValueError):
    """Malformed input file; carries the offending location when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


# Warnings: the operation completed, but the caller should know.

class EllipseCalibWarning(UserWarning):
    pass


class MultimodalWarning(EllipseCalibWarning):
    pass


class LowInformationWarning(EllipseCalibWarning):
    pass


class OverlapWarning(EllipseCalibWarning):
    pass


class ZeroAmplitudeWarning(EllipseCalibWarning):
    pass


class PhaseUnstableWarning(EllipseCalibWarning):
    pass


class DegenerateNoiseWarning(EllipseCalibWarning):
    pass
